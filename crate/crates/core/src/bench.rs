//! Wall-clock latency harness. Systems run one at a time on the calling
//! thread (a single worker, so measurements stay comparable); each system
//! gets `warmup` untimed passes over the query set, then `repeats` timed
//! ones, and reports the median per-query time. Ratios are relative to the
//! first compressed-listwise system. The timed region is whatever the system
//! closure does per query, which by convention is embedding fetch plus
//! scoring; index and retrieval setup happen before the harness is called.
//! The closure returns how many of its seconds went to fetch, so the fetch
//! share shows up in the report.

use std::time::Instant;

use crate::cost::{seq_len, Mode};
use crate::error::Result;

pub struct BenchQuery {
    pub qid: String,
    pub tokens: Vec<u32>,
    pub candidates: Vec<String>,
}

pub struct SystemSpec<'a> {
    pub name: String,
    pub mode: Mode,
    pub q_len: usize,
    pub k: usize,
    /// Memory tokens for compressed modes, document length for textual ones.
    pub l_or_d: usize,
    /// Scores one query end to end and returns the seconds spent fetching.
    pub run: Box<dyn FnMut(&BenchQuery) -> Result<f64> + 'a>,
}

pub struct SystemResult {
    pub name: String,
    pub mode: Mode,
    pub q_len: usize,
    pub k: usize,
    pub l_or_d: usize,
    pub seq_len: usize,
    /// Median over repeats of mean seconds per query. None if the system failed.
    pub mean_s_per_q: Option<f64>,
    /// Fraction of timed seconds spent fetching embeddings.
    pub fetch_share: Option<f64>,
    pub ratio_to_baseline: Option<f64>,
    pub failure: Option<String>,
}

pub struct LatencyReport {
    pub baseline: Option<String>,
    pub n_queries: usize,
    pub repeats: usize,
    pub systems: Vec<SystemResult>,
}

impl LatencyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,mode,|q|,k,l_or_d,seq_len,mean_s_per_q,ratio\n");
        for s in &self.systems {
            let mean = s
                .mean_s_per_q
                .map(|v| format!("{v:.9}"))
                .unwrap_or_default();
            let ratio = s
                .ratio_to_baseline
                .map(|v| format!("{v:.4}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.name, s.mode, s.q_len, s.k, s.l_or_d, s.seq_len, mean, ratio
            ));
        }
        for s in &self.systems {
            if let Some(why) = &s.failure {
                out.push_str(&format!("# {} failed: {}\n", s.name, why));
            }
        }
        out
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn bench_latency(
    systems: Vec<SystemSpec>,
    queries: &[BenchQuery],
    repeats: usize,
    warmup: usize,
) -> LatencyReport {
    assert!(repeats >= 3, "need at least 3 timed repeats");
    assert!(warmup >= 1, "need at least 1 warmup pass");
    assert!(!queries.is_empty(), "no queries to bench");

    let mut results = Vec::with_capacity(systems.len());
    for mut sys in systems {
        let mut pass_secs = Vec::with_capacity(repeats);
        let mut pass_fetch = Vec::with_capacity(repeats);
        let mut failure = None;
        'passes: for pass in 0..warmup + repeats {
            let start = Instant::now();
            let mut fetch = 0.0;
            for q in queries {
                match (sys.run)(q) {
                    Ok(f) => fetch += f,
                    Err(e) => {
                        failure = Some(format!("query {}: {e}", q.qid));
                        break 'passes;
                    }
                }
            }
            if pass >= warmup {
                pass_secs.push(start.elapsed().as_secs_f64());
                pass_fetch.push(fetch);
            }
        }
        let (mean_s_per_q, fetch_share) = if failure.is_some() {
            (None, None)
        } else {
            let total: f64 = pass_secs.iter().sum();
            let share = if total > 0.0 {
                (pass_fetch.iter().sum::<f64>() / total).min(1.0)
            } else {
                0.0
            };
            (
                Some(median(pass_secs) / queries.len() as f64),
                Some(share),
            )
        };
        results.push(SystemResult {
            name: sys.name,
            mode: sys.mode,
            q_len: sys.q_len,
            k: sys.k,
            l_or_d: sys.l_or_d,
            seq_len: seq_len(sys.mode, sys.q_len, sys.k, sys.l_or_d),
            mean_s_per_q,
            fetch_share,
            ratio_to_baseline: None,
            failure,
        });
    }

    let baseline = results
        .iter()
        .find(|s| s.mode == Mode::CompressedListwise && s.failure.is_none())
        .or_else(|| results.iter().find(|s| s.failure.is_none()))
        .map(|s| (s.name.clone(), s.mean_s_per_q.unwrap()));
    if let Some((ref base_name, base_mean)) = baseline {
        for s in &mut results {
            s.ratio_to_baseline = s.mean_s_per_q.map(|m| {
                if &s.name == base_name {
                    1.0
                } else {
                    m / base_mean
                }
            });
        }
    }

    LatencyReport {
        baseline: baseline.map(|(n, _)| n),
        n_queries: queries.len(),
        repeats,
        systems: results,
    }
}
