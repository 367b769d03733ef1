//! TREC interchange formats: qrels ("qid 0 docid rel") and run files
//! ("qid Q0 docid rank score tag"). Parsers report the offending line number;
//! writers emit deterministic, sorted output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Graded relevance judgments. Unknown (qid, doc) pairs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    /// qid -> doc_id -> grade
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn grade(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) {
        self.judgments
            .entry(qid.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    pub fn query_ids(&self) -> Vec<&String> {
        self.judgments.keys().collect()
    }
}

/// One query's ranked results, rank order preserved.
pub type RankedList = Vec<(String, f64)>;

/// Parsed run file: qid -> results ordered by rank.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunData {
    pub results: BTreeMap<String, RankedList>,
    pub tag: String,
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path)?;
    let mut qrels = Qrels::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let grade: u32 = fields[3]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad grade {:?}", fields[3])))?;
        qrels.insert(fields[0], fields[2], grade);
    }
    Ok(qrels)
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    let mut out = String::new();
    for (qid, docs) in &qrels.judgments {
        for (doc, grade) in docs {
            writeln!(out, "{qid} 0 {doc} {grade}").unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a run file. Results per query are sorted by descending score with
/// doc_id tie-break, ranks assigned 1..n, scores printed to 6 decimals.
pub fn write_run(
    path: &Path,
    results: &BTreeMap<String, RankedList>,
    tag: &str,
) -> Result<()> {
    let mut out = String::new();
    for (qid, list) in results {
        let mut sorted = list.clone();
        sorted.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("run scores must be finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        for (rank, (doc, score)) in sorted.iter().enumerate() {
            writeln!(out, "{qid} Q0 {doc} {} {score:.6} {tag}", rank + 1).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a run file back, validating contiguous ranks and non-increasing
/// scores per query.
pub fn read_run(path: &Path) -> Result<RunData> {
    let text = std::fs::read_to_string(path)?;
    let mut results: BTreeMap<String, RankedList> = BTreeMap::new();
    let mut tag = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        if fields[1] != "Q0" {
            return Err(parse_err(path, line_no, "second field must be Q0"));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad score {:?}", fields[4])))?;
        if !score.is_finite() {
            return Err(parse_err(path, line_no, "score must be finite"));
        }
        if tag.is_empty() {
            tag = fields[5].to_string();
        }
        let list = results.entry(fields[0].to_string()).or_default();
        if rank != list.len() + 1 {
            return Err(parse_err(
                path,
                line_no,
                format!("rank {rank} out of order, expected {}", list.len() + 1),
            ));
        }
        if let Some(&(_, prev)) = list.last() {
            if score > prev {
                return Err(parse_err(path, line_no, "scores increase with rank"));
            }
        }
        list.push((fields[2].to_string(), score));
    }
    Ok(RunData { results, tag })
}
