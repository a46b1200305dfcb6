//! Maximum-likelihood decoders for the 3D MIMO code.
//!
//! All three decoders minimize `|y - H_eq s|^2` over `Theta^8` exactly and
//! agree on the argmin: metrics within [`TIE_TOL`] of each other count as a
//! tie, and ties go to the lexicographically smallest realized symbol vector.

mod bruteforce;
mod simplified;
mod sphere;

use std::fmt;
use std::str::FromStr;

use crate::constellation::QamConstellation;
use crate::error::{Error, Result};
use crate::stbc::SymbolVector;
use crate::{Mat16, Vec16};

pub use bruteforce::ml_bruteforce;
pub use simplified::{
    conditional_pam_search, simplified_ml_decode, simplified_ml_decode_factored, BranchVisit,
    Conditioned, GroupedReceived, PairLayer, PairSearch, SimplifiedTrace,
};
pub use sphere::sphere_decode_se;

/// Absolute metric difference treated as a tie.
pub const TIE_TOL: f64 = 1e-12;

/// Realized symbol vector as PAM level indices, in `s~` order.
pub type LevelIndices = [u8; 16];

/// Visited-node instrumentation.
///
/// A node is one candidate partial solution whose distance increment is
/// computed. For the simplified decoder `branch_nodes` holds the four
/// parallel searches `(a.re, a.im, c.re, c.im)` and `delay_nodes` sums, over
/// every visited `(b, d)`, the node count of the slowest branch.
/// `overhead_nodes` is the bookkeeping left out of the delay: the `M^2`
/// sort keys plus one per visited `(b, d)`. Serial decoders have
/// `delay == total` and no overhead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub total_nodes: u64,
    pub branch_nodes: [u64; 4],
    pub delay_nodes: u64,
    pub overhead_nodes: u64,
}

impl NodeStats {
    /// Delay with the sort and per-`(b, d)` bookkeeping charged serially.
    pub fn delay_with_overhead(&self) -> u64 {
        self.delay_nodes + self.overhead_nodes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub s_hat: SymbolVector,
    pub indices: LevelIndices,
    /// `|y - H_eq s_hat|^2`.
    pub metric: f64,
    pub nodes: NodeStats,
    /// The simplified decoder fell back to exhaustive search for the `c` group.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Disable to remove every radius-based break (debug mode); the argmin must not change.
    pub early_termination: bool,
    /// Let the brute-force decoder run above 4-QAM.
    pub allow_large_m: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            early_termination: true,
            allow_large_m: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecoderKind {
    BruteForce,
    Sphere,
    Simplified,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [
        DecoderKind::BruteForce,
        DecoderKind::Sphere,
        DecoderKind::Simplified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::BruteForce => "bruteforce",
            DecoderKind::Sphere => "sphere",
            DecoderKind::Simplified => "simplified",
        }
    }

    pub fn decode(
        self,
        y: &Vec16,
        h_eq: &Mat16,
        c: &QamConstellation,
        opts: &DecodeOptions,
    ) -> Result<DecodeResult> {
        match self {
            DecoderKind::BruteForce => ml_bruteforce(y, h_eq, c, opts),
            DecoderKind::Sphere => sphere_decode_se(y, h_eq, c, opts),
            DecoderKind::Simplified => simplified_ml_decode(y, h_eq, c, opts),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bruteforce" | "brute-force" | "ml" => Ok(DecoderKind::BruteForce),
            "sphere" | "sd" => Ok(DecoderKind::Sphere),
            "simplified" | "proposed" => Ok(DecoderKind::Simplified),
            other => Err(Error::invalid(format!("unknown decoder '{other}'"))),
        }
    }
}

/// Shared candidate ordering: smaller metric wins, near-ties go to the lexicographically smaller vector.
#[inline]
pub(crate) fn improves(metric: f64, cand: &[u8], best_metric: f64, best: &[u8]) -> bool {
    if metric < best_metric - TIE_TOL {
        true
    } else if metric <= best_metric + TIE_TOL {
        cand < best
    } else {
        false
    }
}

/// `|y - H_eq s~|^2` for level indices.
pub fn ml_metric(y: &Vec16, h_eq: &Mat16, c: &QamConstellation, indices: &LevelIndices) -> f64 {
    let s = realized_levels(c, indices);
    (y - h_eq * s).norm_squared()
}

pub(crate) fn realized_levels(c: &QamConstellation, indices: &LevelIndices) -> Vec16 {
    Vec16::from_fn(|k, _| c.pam().level(indices[k] as usize))
}

pub(crate) fn finish(
    y: &Vec16,
    h_eq: &Mat16,
    c: &QamConstellation,
    indices: LevelIndices,
    nodes: NodeStats,
    fallback: bool,
) -> DecodeResult {
    let s = realized_levels(c, &indices);
    DecodeResult {
        s_hat: SymbolVector::from_realized(&s),
        indices,
        metric: (y - h_eq * s).norm_squared(),
        nodes,
        fallback,
    }
}

pub(crate) fn check_inputs(y: &Vec16, h_eq: &Mat16) -> Result<()> {
    if y.iter().chain(h_eq.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "received vector or channel has non-finite entries",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
