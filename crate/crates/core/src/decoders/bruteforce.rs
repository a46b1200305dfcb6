use super::{check_inputs, finish, improves, DecodeOptions, DecodeResult, LevelIndices, NodeStats};
use crate::constellation::QamConstellation;
use crate::error::{Error, Result};
use crate::stbc::NUM_SYMBOLS;
use crate::{Mat16, Vec16};

/// Exhaustive search of `|y - H_eq s~|^2` over all `M^8` symbol vectors.
///
/// Refuses `M > 4` unless `opts.allow_large_m` is set.
pub fn ml_bruteforce(
    y: &Vec16,
    h_eq: &Mat16,
    c: &QamConstellation,
    opts: &DecodeOptions,
) -> Result<DecodeResult> {
    check_inputs(y, h_eq)?;
    if c.order() > 4 && !opts.allow_large_m {
        return Err(Error::invalid(format!(
            "brute-force ML over {}^8 candidates refused; enable the large-M override",
            c.order()
        )));
    }
    let side = c.pam().len();
    let m = c.order();

    // contributions[j][p] = H_eq[:, 2j] re(p) + H_eq[:, 2j+1] im(p)
    let contributions: Vec<Vec<[f64; 16]>> = (0..NUM_SYMBOLS)
        .map(|j| {
            c.points()
                .iter()
                .map(|p| {
                    let v = h_eq.column(2 * j) * p.re + h_eq.column(2 * j + 1) * p.im;
                    std::array::from_fn(|k| v[k])
                })
                .collect()
        })
        .collect();

    let mut search = Search {
        contributions: &contributions,
        side,
        m,
        point: [0; NUM_SYMBOLS],
        best_metric: f64::INFINITY,
        best: [u8::MAX; 16],
    };
    let residual: [f64; 16] = std::array::from_fn(|k| y[k]);
    search.descend(0, &residual);

    let leaves = (m as u64).pow(NUM_SYMBOLS as u32);
    let nodes = NodeStats {
        total_nodes: leaves,
        branch_nodes: [0; 4],
        overhead_nodes: 0,
        delay_nodes: leaves,
    };
    Ok(finish(y, h_eq, c, search.best, nodes, false))
}

struct Search<'a> {
    contributions: &'a [Vec<[f64; 16]>],
    side: usize,
    m: usize,
    point: [usize; NUM_SYMBOLS],
    best_metric: f64,
    best: LevelIndices,
}

impl Search<'_> {
    // points are ordered lexicographically by (re, im), so leaves arrive in s~ order
    fn descend(&mut self, symbol: usize, residual: &[f64; 16]) {
        for p in 0..self.m {
            let contrib = &self.contributions[symbol][p];
            let next: [f64; 16] = std::array::from_fn(|k| residual[k] - contrib[k]);
            self.point[symbol] = p;
            if symbol + 1 < NUM_SYMBOLS {
                self.descend(symbol + 1, &next);
            } else {
                let metric: f64 = next.iter().map(|v| v * v).sum();
                if metric <= self.best_metric + super::TIE_TOL {
                    let cand = self.indices();
                    if improves(metric, &cand, self.best_metric, &self.best) {
                        self.best_metric = metric;
                        self.best = cand;
                    }
                }
            }
        }
    }

    fn indices(&self) -> LevelIndices {
        std::array::from_fn(|k| {
            let p = self.point[k / 2];
            if k % 2 == 0 {
                (p / self.side) as u8
            } else {
                (p % self.side) as u8
            }
        })
    }
}
