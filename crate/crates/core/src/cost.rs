//! Input-length and attention-cost model for the four scoring regimes.
//! Listwise modes score k candidates in one pass; pointwise modes pay one
//! pass per candidate, so their quadratic cost multiplies by k.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One pass over (q; c_1; SEP; ...; c_k; SEP; q).
    CompressedListwise,
    /// One pass over the query and all candidate texts.
    TextualListwise,
    /// k passes over (q; c; SEP).
    PointwiseCompressed,
    /// k passes over (q; d; SEP).
    PointwiseTextual,
}

impl Mode {
    pub fn is_listwise(self) -> bool {
        matches!(self, Mode::CompressedListwise | Mode::TextualListwise)
    }

    pub fn is_compressed(self) -> bool {
        matches!(self, Mode::CompressedListwise | Mode::PointwiseCompressed)
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "compressed-listwise" => Ok(Mode::CompressedListwise),
            "textual-listwise" => Ok(Mode::TextualListwise),
            "pointwise-compressed" => Ok(Mode::PointwiseCompressed),
            "pointwise-textual" => Ok(Mode::PointwiseTextual),
            other => Err(Error::Config(format!("unknown scoring mode {other}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::CompressedListwise => "compressed-listwise",
            Mode::TextualListwise => "textual-listwise",
            Mode::PointwiseCompressed => "pointwise-compressed",
            Mode::PointwiseTextual => "pointwise-textual",
        })
    }
}

/// Tokens per forward pass. `l_or_d` is the per-document footprint: memory
/// tokens for compressed modes, text length for textual ones. For pointwise
/// modes this is the per-candidate length; k=0 in listwise modes degenerates
/// to query-only input.
pub fn seq_len(mode: Mode, q_len: usize, k: usize, l_or_d: usize) -> usize {
    assert!(q_len >= 1, "query length must be positive");
    assert!(l_or_d >= 1, "per-document footprint must be positive");
    match mode {
        Mode::CompressedListwise => 2 * q_len + k * (l_or_d + 1),
        Mode::TextualListwise => q_len + k * l_or_d,
        Mode::PointwiseCompressed | Mode::PointwiseTextual => q_len + l_or_d + 1,
    }
}

/// Total attention cost in squared tokens: one quadratic pass for listwise
/// modes, k of them for pointwise modes.
pub fn attention_cost(mode: Mode, q_len: usize, k: usize, l_or_d: usize) -> f64 {
    let len = seq_len(mode, q_len, k, l_or_d) as f64;
    match mode {
        Mode::CompressedListwise | Mode::TextualListwise => len * len,
        Mode::PointwiseCompressed | Mode::PointwiseTextual => k as f64 * len * len,
    }
}

/// How many times costlier `a` is than `b` under the quadratic model.
pub fn cost_ratio(
    a: (Mode, usize, usize, usize),
    b: (Mode, usize, usize, usize),
) -> f64 {
    attention_cost(a.0, a.1, a.2, a.3) / attention_cost(b.0, b.1, b.2, b.3)
}
