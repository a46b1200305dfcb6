//! Group-wise conditional ML decoder.
//!
//! With `a, b, c, d` the realized symbol pairs `(s1,s2) .. (s7,s8)` and
//! `z = Q^T y` split into `z12, z34, z56, z78`, the zero pattern of `R`
//! turns the ML metric into
//!
//! ```text
//! |z78 - R44 d|^2 + |v12 - R11 a|^2 + |v56 - R33 c|^2 + |u34 - F c|^2
//! v12 = z12 - R12 b - R14 d,  v34 = z34 - R22 b - R24 d,
//! v56 = z56 - R34 d,          u34 = E^T v34,  R23 = E F
//! ```
//!
//! so for each `(b, d)` the `a` and `c` groups are found independently, and
//! each splits again into a real and an imaginary two-level PAM search: the
//! second symbol of the pair is enumerated in Schnorr-Euchner order and the
//! first one is sliced in closed form. `d` candidates are visited in order of
//! `|z78 - R44 d|^2`, which lets the outer loop stop as soon as that term
//! alone exceeds the best metric found.

use super::{
    check_inputs, finish, improves, DecodeOptions, DecodeResult, LevelIndices, NodeStats, TIE_TOL,
};
use crate::constellation::{PamConstellation, QamConstellation};
use crate::error::{Error, Result};
use crate::structured_qr::{gram_schmidt_qr, qr_r23, QrFactors, R23Factors};
use crate::{Mat16, Mat4, Vec16, Vec4};

/// `z~ = Q^T y~` viewed as four 4-real partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedReceived {
    pub z: Vec16,
}

/// Residuals left once `b` and `d` are fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    pub v12: Vec4,
    pub v34: Vec4,
    pub v56: Vec4,
    pub u34: Vec4,
}

impl GroupedReceived {
    pub fn new(qr: &QrFactors, y: &Vec16) -> Self {
        GroupedReceived {
            z: qr.q.transpose() * y,
        }
    }

    /// Partition `0..4` is `z12`, then `z34`, `z56`, `z78`.
    pub fn part(&self, index: usize) -> Vec4 {
        self.z.fixed_rows::<4>(4 * index).into_owned()
    }

    pub fn condition(&self, qr: &QrFactors, ef: &R23Factors, b: &Vec4, d: &Vec4) -> Conditioned {
        let v12 = self.part(0) - qr.block(0, 1) * b - qr.block(0, 3) * d;
        let v34 = self.part(1) - qr.block(1, 1) * b - qr.block(1, 3) * d;
        let v56 = self.part(2) - qr.block(2, 3) * d;
        let u34 = ef.e.transpose() * v34;
        Conditioned { v12, v34, v56, u34 }
    }
}

/// One triangular 2x2 slice of a branch metric:
/// `(top - diag_top x1 - cross x2)^2 + (bottom - diag_bottom x2)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLayer {
    pub top: f64,
    pub bottom: f64,
    pub diag_top: f64,
    pub cross: f64,
    pub diag_bottom: f64,
}

impl PairLayer {
    /// Rows `parity` and `parity + 2` of a 4x4 block against residual `v`.
    pub fn from_block(m: &Mat4, v: &Vec4, parity: usize) -> Self {
        PairLayer {
            top: v[parity],
            bottom: v[parity + 2],
            diag_top: m[(parity, parity)],
            cross: m[(parity, parity + 2)],
            diag_bottom: m[(parity + 2, parity + 2)],
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.top,
            self.bottom,
            self.diag_top,
            self.cross,
            self.diag_bottom,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Outcome of one two-symbol PAM branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSearch {
    /// `(first, second)` level indices of the best pair, `None` if the
    /// budget cut the search before any pair was completed.
    pub best: Option<(u8, u8)>,
    pub metric: f64,
    /// Conditioning levels whose distance increment was computed.
    pub nodes: u64,
}

/// Exact minimizer over `pam x pam` of the summed layer metrics.
///
/// The second symbol is enumerated in Schnorr-Euchner order around its
/// weighted zero-forcing point and the first one is sliced. The loop stops as
/// soon as the second symbol's own term exceeds `budget`.
pub fn conditional_pam_search(
    layers: &[PairLayer],
    pam: &PamConstellation,
    budget: f64,
) -> Result<PairSearch> {
    if layers.is_empty() || !layers.iter().all(PairLayer::is_finite) || budget.is_nan() {
        return Err(Error::invalid(
            "branch search needs finite, non-empty layers",
        ));
    }
    let den_top: f64 = layers.iter().map(|l| l.diag_top * l.diag_top).sum();
    let den_bottom: f64 = layers.iter().map(|l| l.diag_bottom * l.diag_bottom).sum();
    if den_top <= 0.0 || den_bottom <= 0.0 {
        return Err(Error::invalid("branch search has a vanishing diagonal"));
    }
    Ok(search_pair(layers, pam, budget))
}

#[inline]
fn search_pair(layers: &[PairLayer], pam: &PamConstellation, budget: f64) -> PairSearch {
    let mut num_bottom = 0.0;
    let mut den_bottom = 0.0;
    let mut den_top = 0.0;
    for l in layers {
        num_bottom += l.diag_bottom * l.bottom;
        den_bottom += l.diag_bottom * l.diag_bottom;
        den_top += l.diag_top * l.diag_top;
    }
    let zf = num_bottom / den_bottom;

    let mut out = PairSearch {
        best: None,
        metric: f64::INFINITY,
        nodes: 0,
    };
    for k2 in pam.se_indices(zf) {
        out.nodes += 1;
        let x2 = pam.level(k2);
        let mut eps2 = 0.0;
        let mut num_top = 0.0;
        for l in layers {
            let e = l.bottom - l.diag_bottom * x2;
            eps2 += e * e;
            num_top += l.diag_top * (l.top - l.cross * x2);
        }
        if eps2 > budget {
            break;
        }
        let k1 = pam.slice_index(num_top / den_top);
        let x1 = pam.level(k1);
        let mut metric = eps2;
        for l in layers {
            let e = l.top - l.diag_top * x1 - l.cross * x2;
            metric += e * e;
        }
        let cand = [k1 as u8, k2 as u8];
        let best = out.best.map_or([u8::MAX; 2], |(a, b)| [a, b]);
        if improves(metric, &cand, out.metric, &best) {
            out.best = Some((cand[0], cand[1]));
            out.metric = metric;
        }
    }
    out
}

/// Joint search of `|v56 - R33 c|^2 + |v34 - R23 c|^2` over all of `Theta^2`.
fn exhaustive_c(
    groups: &[([u8; 4], Vec4)],
    r33: &Mat4,
    r23: &Mat4,
    v56: &Vec4,
    v34: &Vec4,
) -> ([u8; 4], f64) {
    let mut best = [u8::MAX; 4];
    let mut best_metric = f64::INFINITY;
    for (idx, c) in groups {
        let metric = (v56 - r33 * c).norm_squared() + (v34 - r23 * c).norm_squared();
        if improves(metric, idx, best_metric, &best) {
            best = *idx;
            best_metric = metric;
        }
    }
    (best, best_metric)
}

/// One `(b, d)` evaluation, recorded when tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchVisit {
    pub d_rank: usize,
    pub d: [u8; 4],
    pub b: [u8; 4],
    /// `(a.re, a.im, c.re, c.im)`.
    pub branches: [PairSearch; 4],
    pub tau: f64,
    pub updated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimplifiedTrace {
    /// `d` candidates in visiting order with `|z78 - R44 d|^2`.
    pub sorted_d: Vec<([u8; 4], f64)>,
    pub visits: Vec<BranchVisit>,
    /// Rank of the `d` candidate at which the outer loop stopped early.
    pub stopped_at: Option<usize>,
}

/// Simplified ML decoder; computes both QR factorizations internally.
pub fn simplified_ml_decode(
    y: &Vec16,
    h_eq: &Mat16,
    c: &QamConstellation,
    opts: &DecodeOptions,
) -> Result<DecodeResult> {
    check_inputs(y, h_eq)?;
    let qr = gram_schmidt_qr(h_eq)?;
    let ef = qr_r23(&qr.r23());
    let z = GroupedReceived::new(&qr, y);
    let (indices, nodes, fallback) = simplified_ml_decode_factored(&z, &qr, &ef, c, opts, None);
    Ok(finish(y, h_eq, c, indices, nodes, fallback))
}

/// Core of the simplified decoder on pre-computed factors.
///
/// Returns the level indices minimizing `|z - R s~|^2`, the node counts and
/// whether the `c` group had to be searched exhaustively (rank-deficient
/// `R23`). The zero pattern of `R` and `F` is assumed, not checked.
pub fn simplified_ml_decode_factored(
    z: &GroupedReceived,
    qr: &QrFactors,
    ef: &R23Factors,
    c: &QamConstellation,
    opts: &DecodeOptions,
    mut trace: Option<&mut SimplifiedTrace>,
) -> (LevelIndices, NodeStats, bool) {
    let pam = c.pam();
    let side = pam.len();
    let early = opts.early_termination;
    let fallback = ef.rank_deficient;

    // every realized pair (x.re, x.im, y.re, y.im), lexicographic
    let groups: Vec<([u8; 4], Vec4)> = (0..side.pow(4))
        .map(|n| {
            let idx = [
                n / side.pow(3),
                (n / side.pow(2)) % side,
                (n / side) % side,
                n % side,
            ];
            (
                idx.map(|k| k as u8),
                Vec4::from_fn(|k, _| pam.level(idx[k])),
            )
        })
        .collect();

    let (r11, r12, r14) = (qr.block(0, 0), qr.block(0, 1), qr.block(0, 3));
    let (r22, r23, r24) = (qr.block(1, 1), qr.block(1, 2), qr.block(1, 3));
    let (r33, r34, r44) = (qr.block(2, 2), qr.block(2, 3), qr.block(3, 3));
    let et = ef.e.transpose();
    let (z12, z34, z56, z78) = (z.part(0), z.part(1), z.part(2), z.part(3));

    let b_terms: Vec<(Vec4, Vec4)> = groups.iter().map(|(_, g)| (r12 * g, r22 * g)).collect();

    let mut sorted: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .map(|(i, (_, g))| ((z78 - r44 * g).norm_squared(), i))
        .collect();
    // stable: equal distances keep lexicographic order
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(t) = trace.as_deref_mut() {
        t.sorted_d = sorted.iter().map(|&(e, i)| (groups[i].0, e)).collect();
    }

    let sort_cost = groups.len() as u64;
    let mut nodes = NodeStats {
        total_nodes: sort_cost,
        branch_nodes: [0; 4],
        delay_nodes: 0,
        overhead_nodes: sort_cost,
    };
    let mut best: LevelIndices = [u8::MAX; 16];
    let mut d_min = f64::INFINITY;

    for (rank, &(eps78, di)) in sorted.iter().enumerate() {
        if early && eps78 > d_min + TIE_TOL {
            if let Some(t) = trace.as_deref_mut() {
                t.stopped_at = Some(rank);
            }
            break;
        }
        let d = &groups[di].1;
        let v56 = z56 - r34 * d;
        let base12 = z12 - r14 * d;
        let base34 = z34 - r24 * d;

        for (bi, (b_idx, _)) in groups.iter().enumerate() {
            let v12 = base12 - b_terms[bi].0;
            let v34 = base34 - b_terms[bi].1;
            let budget = if early {
                d_min - eps78 + TIE_TOL
            } else {
                f64::INFINITY
            };

            let a_re = search_pair(&[PairLayer::from_block(&r11, &v12, 0)], pam, budget);
            let a_im = search_pair(&[PairLayer::from_block(&r11, &v12, 1)], pam, budget);
            let (c_re, c_im, c_joint) = if fallback {
                let (idx, metric) = exhaustive_c(&groups, &r33, &r23, &v56, &v34);
                let joint = PairSearch {
                    best: Some((idx[0], idx[2])),
                    metric,
                    nodes: groups.len() as u64,
                };
                let imag = PairSearch {
                    best: Some((idx[1], idx[3])),
                    metric: 0.0,
                    nodes: 0,
                };
                (joint, imag, Some(idx))
            } else {
                let u34 = et * v34;
                let layers_re = [
                    PairLayer::from_block(&r33, &v56, 0),
                    PairLayer::from_block(&ef.f, &u34, 0),
                ];
                let layers_im = [
                    PairLayer::from_block(&r33, &v56, 1),
                    PairLayer::from_block(&ef.f, &u34, 1),
                ];
                (
                    search_pair(&layers_re, pam, budget),
                    search_pair(&layers_im, pam, budget),
                    None,
                )
            };
            let branches = [a_re, a_im, c_re, c_im];

            let mut slowest = 0;
            let mut visited = 1;
            for (slot, br) in nodes.branch_nodes.iter_mut().zip(&branches) {
                *slot += br.nodes;
                slowest = slowest.max(br.nodes);
                visited += br.nodes;
            }
            nodes.total_nodes += visited;
            nodes.delay_nodes += slowest;
            nodes.overhead_nodes += 1;

            let tau = eps78 + branches.iter().map(|b| b.metric).sum::<f64>();
            let mut updated = false;
            if let [Some(ar), Some(ai), Some(cr), Some(ci)] = branches.map(|b| b.best) {
                let cand: LevelIndices = [
                    ar.0,
                    ai.0,
                    ar.1,
                    ai.1,
                    b_idx[0],
                    b_idx[1],
                    b_idx[2],
                    b_idx[3],
                    cr.0,
                    ci.0,
                    cr.1,
                    ci.1,
                    groups[di].0[0],
                    groups[di].0[1],
                    groups[di].0[2],
                    groups[di].0[3],
                ];
                debug_assert!(c_joint.is_none_or(|j| j == [cand[8], cand[9], cand[10], cand[11]]));
                if improves(tau, &cand, d_min, &best) {
                    best = cand;
                    d_min = tau;
                    updated = true;
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.visits.push(BranchVisit {
                    d_rank: rank,
                    d: groups[di].0,
                    b: *b_idx,
                    branches,
                    tau,
                    updated,
                });
            }
        }
    }
    (best, nodes, fallback)
}
