use super::{
    check_inputs, finish, improves, DecodeOptions, DecodeResult, LevelIndices, NodeStats, TIE_TOL,
};
use crate::constellation::{PamConstellation, QamConstellation};
use crate::error::Result;
use crate::structured_qr::gram_schmidt_qr;
use crate::{Mat16, Vec16};

/// Real-valued depth-16 sphere decoder with Schnorr-Euchner child order.
///
/// Searches `|z - R s~|^2` with `z = Q^T y`, from the last real dimension
/// up, with an infinite initial radius that shrinks on every improving leaf.
/// Every child whose partial distance is computed counts as one node.
pub fn sphere_decode_se(
    y: &Vec16,
    h_eq: &Mat16,
    c: &QamConstellation,
    opts: &DecodeOptions,
) -> Result<DecodeResult> {
    check_inputs(y, h_eq)?;
    let qr = gram_schmidt_qr(h_eq)?;
    let z = qr.q.transpose() * y;

    let mut tree = Tree {
        r: &qr.r,
        z: &z,
        pam: c.pam(),
        prune: opts.early_termination,
        current: [0; 16],
        best: [u8::MAX; 16],
        best_metric: f64::INFINITY,
        nodes: 0,
    };
    tree.visit(15, 0.0);

    let nodes = NodeStats {
        total_nodes: tree.nodes,
        branch_nodes: [0; 4],
        overhead_nodes: 0,
        delay_nodes: tree.nodes,
    };
    let best = tree.best;
    Ok(finish(y, h_eq, c, best, nodes, false))
}

struct Tree<'a> {
    r: &'a Mat16,
    z: &'a Vec16,
    pam: &'a PamConstellation,
    prune: bool,
    current: LevelIndices,
    best: LevelIndices,
    best_metric: f64,
    nodes: u64,
}

impl Tree<'_> {
    fn visit(&mut self, level: usize, above: f64) {
        // residual target for this level given the symbols already fixed below it
        let mut b = self.z[level];
        for j in level + 1..16 {
            b -= self.r[(level, j)] * self.pam.level(self.current[j] as usize);
        }
        let diag = self.r[(level, level)];
        let center = b / diag;
        for k in self.pam.se_indices(center) {
            self.nodes += 1;
            let e = b - diag * self.pam.level(k);
            let partial = above + e * e;
            if self.prune && partial > self.best_metric + TIE_TOL {
                // later children are farther from the center
                break;
            }
            self.current[level] = k as u8;
            if level == 0 {
                if improves(partial, &self.current, self.best_metric, &self.best) {
                    self.best_metric = partial;
                    self.best = self.current;
                }
            } else {
                self.visit(level - 1, partial);
            }
        }
    }
}
