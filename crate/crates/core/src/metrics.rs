//! Ranking quality metrics: nDCG@k with exponential or linear gain, and
//! Kendall rank correlation for comparing score lists.

use std::collections::BTreeMap;

use crate::trec::{Qrels, RunData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gain {
    Exponential,
    Linear,
}

impl Gain {
    fn of(self, rel: u32) -> f64 {
        match self {
            Gain::Exponential => (2f64).powi(rel as i32) - 1.0,
            Gain::Linear => rel as f64,
        }
    }
}

impl std::str::FromStr for Gain {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" => Ok(Gain::Exponential),
            "linear" => Ok(Gain::Linear),
            other => Err(crate::error::Error::Config(format!(
                "unknown gain {other}, expected exponential or linear"
            ))),
        }
    }
}

impl std::fmt::Display for Gain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gain::Exponential => "exponential",
            Gain::Linear => "linear",
        })
    }
}

/// nDCG@k for one ranked doc list against that query's judgments.
/// Returns 0 when the ideal DCG is 0 (no relevant documents).
pub fn ndcg_at_k(
    ranking: &[String],
    judged: &BTreeMap<String, u32>,
    k: usize,
    gain: Gain,
) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let mut dcg = 0.0;
    for (i, doc) in ranking.iter().take(k).enumerate() {
        let rel = judged.get(doc).copied().unwrap_or(0);
        dcg += gain.of(rel) / ((i + 2) as f64).log2();
    }
    let mut rels: Vec<u32> = judged.values().copied().collect();
    rels.sort_unstable_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, &rel) in rels.iter().take(k).enumerate() {
        idcg += gain.of(rel) / ((i + 2) as f64).log2();
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Per-query nDCG@k for a run, plus the mean over queries present in both
/// run and qrels. Orphan qids (in one side only) are reported, not scored.
pub struct EvalReport {
    pub gain: Gain,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub run_only: Vec<String>,
    pub qrels_only: Vec<String>,
}

pub fn evaluate_run(run: &RunData, qrels: &Qrels, k: usize, gain: Gain) -> EvalReport {
    let mut per_query = BTreeMap::new();
    let mut run_only = Vec::new();
    for (qid, list) in &run.results {
        let Some(judged) = qrels.judgments.get(qid) else {
            run_only.push(qid.clone());
            continue;
        };
        let ranking: Vec<String> = list.iter().map(|(d, _)| d.clone()).collect();
        per_query.insert(qid.clone(), ndcg_at_k(&ranking, judged, k, gain));
    }
    let qrels_only: Vec<String> = qrels
        .judgments
        .keys()
        .filter(|q| !run.results.contains_key(*q))
        .cloned()
        .collect();
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    EvalReport {
        gain,
        per_query,
        mean,
        run_only,
        qrels_only,
    }
}

/// Kendall tau-b between two paired score lists. Handles ties in either list
/// via the tau-b denominator; returns 0 for degenerate (all-tied) input.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired lists must have equal length");
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_a = 0i64;
    let mut ties_b = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            } else if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let cd = concordant + discordant;
    let denom = (((cd + ties_a) as f64) * ((cd + ties_b) as f64)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

/// Goodman-Kruskal gamma: concordance over pairs strictly ordered in both
/// lists. The right consistency measure when one list has many ties (e.g.
/// graded relevance) and the other is tie-free.
pub fn rank_gamma(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired lists must have equal length");
    let n = a.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 || db == 0.0 {
                continue;
            }
            if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    if concordant + discordant == 0 {
        0.0
    } else {
        (concordant - discordant) as f64 / (concordant + discordant) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judged(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, r)| (d.to_string(), *r)).collect()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let j = judged(&[("a", 3), ("b", 2), ("c", 0)]);
        let n = ndcg_at_k(&ids(&["a", "b", "c"]), &j, 10, Gain::Exponential);
        assert_eq!(n, 1.0);
    }

    #[test]
    fn worked_example_matches_hand_computation() {
        // Ranked rels [0,3,2]; ideal [3,2,0].
        let j = judged(&[("x", 0), ("y", 3), ("z", 2)]);
        let ranking = ids(&["x", "y", "z"]);
        let n = ndcg_at_k(&ranking, &j, 10, Gain::Exponential);
        let dcg = 7.0 / 3f64.log2() + 3.0 / 4f64.log2();
        let idcg = 7.0 + 3.0 / 3f64.log2();
        assert!((dcg - 5.91651).abs() < 1e-5);
        assert!((idcg - 8.89279).abs() < 1e-5);
        assert!((n - 0.66532).abs() < 1e-5);
        assert!((n - dcg / idcg).abs() < 1e-15);
    }

    #[test]
    fn all_zero_judgments_score_zero() {
        let j = judged(&[("a", 0), ("b", 0)]);
        assert_eq!(ndcg_at_k(&ids(&["a", "b"]), &j, 10, Gain::Exponential), 0.0);
    }

    #[test]
    fn linear_gain_differs_from_exponential_on_high_grades() {
        let j = judged(&[("a", 3), ("b", 1)]);
        let lin = ndcg_at_k(&ids(&["b", "a"]), &j, 10, Gain::Linear);
        let exp = ndcg_at_k(&ids(&["b", "a"]), &j, 10, Gain::Exponential);
        assert!(exp < lin, "exponential punishes misplacing rel-3 harder");
    }

    #[test]
    fn relabeling_doc_ids_preserves_ndcg() {
        let j1 = judged(&[("a", 2), ("b", 1), ("c", 3)]);
        let j2 = judged(&[("xx", 2), ("yy", 1), ("zz", 3)]);
        let n1 = ndcg_at_k(&ids(&["b", "c", "a"]), &j1, 10, Gain::Exponential);
        let n2 = ndcg_at_k(&ids(&["yy", "zz", "xx"]), &j2, 10, Gain::Exponential);
        assert_eq!(n1, n2);
    }

    #[test]
    fn swapping_higher_grade_upward_never_decreases_ndcg() {
        let j = judged(&[("a", 0), ("b", 1), ("c", 2), ("d", 3)]);
        let worse = ndcg_at_k(&ids(&["a", "b", "c", "d"]), &j, 10, Gain::Exponential);
        let better = ndcg_at_k(&ids(&["a", "c", "b", "d"]), &j, 10, Gain::Exponential);
        assert!(better >= worse);
        let best = ndcg_at_k(&ids(&["d", "c", "b", "a"]), &j, 10, Gain::Exponential);
        assert!(best >= better);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn unjudged_docs_count_as_zero_gain() {
        let j = judged(&[("a", 2)]);
        let with_unjudged = ndcg_at_k(&ids(&["mystery", "a"]), &j, 10, Gain::Exponential);
        let alone = ndcg_at_k(&ids(&["a"]), &j, 2, Gain::Exponential);
        assert!(with_unjudged < alone);
    }

    #[test]
    fn kendall_agrees_on_simple_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[0.3, 0.2, 0.1]), -1.0);
        let tau = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 4.0, 3.0]);
        // One discordant pair out of six.
        assert!((tau - (5.0 - 1.0) / 6.0).abs() < 1e-12);
        assert_eq!(kendall_tau(&[1.0, 1.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn kendall_tau_b_handles_ties() {
        // a has one tied pair; that pair joins a's tie count only.
        let a = [1.0, 1.0, 2.0];
        let b = [0.1, 0.2, 0.3];
        // pairs: (0,1) tied in a; (0,2) and (1,2) concordant.
        let tau = kendall_tau(&a, &b);
        assert!((tau - 2.0 / (2.0f64 * 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gamma_ignores_tied_reference_pairs() {
        let rel = [3.0, 3.0, 1.0, 0.0];
        let teacher = [3.04, 2.96, 1.02, -0.01];
        assert_eq!(rank_gamma(&rel, &teacher), 1.0);
        // One cross-grade inversion drops it below 1.
        let bad = [3.04, 2.96, 1.02, 1.5];
        assert!(rank_gamma(&rel, &bad) < 1.0);
    }

    #[test]
    fn evaluate_run_reports_orphans() {
        use crate::trec::RunData;
        let mut run = RunData::default();
        run.results.insert(
            "q1".into(),
            vec![("a".to_string(), 0.9), ("b".to_string(), 0.1)],
        );
        run.results.insert("q9".into(), vec![("a".to_string(), 0.5)]);
        let mut qrels = Qrels::default();
        qrels.insert("q1", "a", 3);
        qrels.insert("q1", "b", 1);
        qrels.insert("q2", "a", 1);
        let rep = evaluate_run(&run, &qrels, 10, Gain::Exponential);
        assert_eq!(rep.per_query.len(), 1);
        assert_eq!(rep.per_query["q1"], 1.0);
        assert_eq!(rep.run_only, vec!["q9".to_string()]);
        assert_eq!(rep.qrels_only, vec!["q2".to_string()]);
        assert_eq!(rep.mean, 1.0);
    }
}
