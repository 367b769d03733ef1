//! Synthetic oracle teacher: hidden relevance grade plus a small seeded
//! per-pair jitter, so scores are mostly tie-free while staying
//! rank-consistent with the ground truth.

use crate::rng::hash01;
use crate::trec::Qrels;

/// Jitter amplitude: uniform in [-0.045, 0.045), comfortably below the
/// 0.5 half-gap between adjacent grades.
const JITTER_SPAN: f64 = 0.09;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticTeacher {
    pub seed: u64,
    /// Affine output transform; rank order is scale-invariant for scale > 0.
    pub scale: f64,
    pub offset: f64,
}

impl SyntheticTeacher {
    pub fn new(seed: u64) -> Self {
        SyntheticTeacher {
            seed,
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// A second teacher emitting the same preferences on a different score
    /// scale, for dataset-mixing experiments.
    pub fn rescaled(seed: u64, scale: f64, offset: f64) -> Self {
        assert!(scale > 0.0, "non-positive scale would flip preferences");
        SyntheticTeacher {
            seed,
            scale,
            offset,
        }
    }

    pub fn score(&self, rel: &Qrels, qid: &str, doc_id: &str) -> f64 {
        let grade = rel.grade(qid, doc_id) as f64;
        let jitter = (hash01(self.seed, &[qid, doc_id]) - 0.5) * JITTER_SPAN;
        self.offset + self.scale * (grade + jitter)
    }

    pub fn score_pool(&self, rel: &Qrels, qid: &str, doc_ids: &[String]) -> Vec<f64> {
        doc_ids.iter().map(|d| self.score(rel, qid, d)).collect()
    }
}
