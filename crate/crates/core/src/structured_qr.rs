//! Gram-Schmidt QR of the equivalent channel and the zero pattern it carries.
//!
//! For a quasi-static channel the `R` factor of `H_eq` (partitioned into
//! `4 x 4` blocks `R_jk`) has:
//! * every diagonal block `R_jj` zero at `(1,2)`, `(1,4)`, `(2,3)`, `(3,4)`,
//!   which decouples real and imaginary parts inside a symbol pair;
//! * `R_13 = 0`, so the first symbol pair does not see the third;
//! * the triangular factor `F` of `R_23 = E F` shares the `R_jj` pattern.
//!
//! [`verify_structure`] measures all of these, together with the
//! intermediate inner-product identities they rest on.

use std::fmt;

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::{Mat16, Mat4};

/// Default structure tolerance, relative to the Frobenius norm of the factor.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Rank threshold for Gram-Schmidt, relative to `|H_eq|_F`.
pub const RANK_TOL: f64 = 1e-12;

/// In-block positions (0-based) that vanish in `R_jj` and in `F`.
pub const PAIR_ZEROS: [(usize, usize); 4] = [(0, 1), (0, 3), (1, 2), (2, 3)];

/// `H_eq = Q R` with `Q` orthogonal and `R` upper triangular, positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    pub q: Mat16,
    pub r: Mat16,
}

impl QrFactors {
    /// Block `R_{row+1, col+1}` for 0-based block indices.
    pub fn block(&self, row: usize, col: usize) -> Mat4 {
        self.r.fixed_view::<4, 4>(4 * row, 4 * col).into_owned()
    }

    pub fn r23(&self) -> Mat4 {
        self.block(1, 2)
    }
}

/// `R_23 = E F` with `E` orthogonal and `F` upper triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct R23Factors {
    pub e: Mat4,
    pub f: Mat4,
    /// A column of `R_23` fell below the rank threshold; `F` has a zero diagonal entry.
    pub rank_deficient: bool,
}

struct GsOutput<const N: usize> {
    q: SMatrix<f64, N, N>,
    r: SMatrix<f64, N, N>,
    deficient: Option<(usize, f64)>,
}

/// Classical Gram-Schmidt with one re-orthogonalization pass. Columns whose
/// residual falls below `threshold` get `R(j,j) = 0` and a completion vector
/// in `Q` so that `Q` stays orthogonal.
fn gram_schmidt<const N: usize>(a: &SMatrix<f64, N, N>, threshold: f64) -> GsOutput<N> {
    let mut q = SMatrix::<f64, N, N>::zeros();
    let mut r = SMatrix::<f64, N, N>::zeros();
    let mut deficient = None;
    for j in 0..N {
        let mut v = a.column(j).into_owned();
        for _pass in 0..2 {
            let coeffs: Vec<f64> = (0..j).map(|k| q.column(k).dot(&v)).collect();
            for (k, c) in coeffs.into_iter().enumerate() {
                v.axpy(-c, &q.column(k), 1.0);
                r[(k, j)] += c;
            }
        }
        let norm = v.norm();
        if norm > threshold {
            r[(j, j)] = norm;
            q.set_column(j, &(v / norm));
        } else {
            deficient.get_or_insert((j, norm));
            r[(j, j)] = 0.0;
            let completion = (0..N)
                .map(|i| {
                    let mut e = SMatrix::<f64, N, 1>::zeros();
                    e[i] = 1.0;
                    for _pass in 0..2 {
                        for k in 0..j {
                            let c = q.column(k).dot(&e);
                            e.axpy(-c, &q.column(k), 1.0);
                        }
                    }
                    e
                })
                .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                .expect("N > 0");
            q.set_column(j, &completion.normalize());
        }
    }
    GsOutput { q, r, deficient }
}

/// QR of the equivalent channel; fails if `H_eq` is (numerically) rank deficient.
pub fn gram_schmidt_qr(h_eq: &Mat16) -> Result<QrFactors> {
    if h_eq.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("equivalent channel has non-finite entries"));
    }
    let threshold = RANK_TOL * h_eq.norm();
    let out = gram_schmidt(h_eq, threshold);
    match out.deficient {
        Some((column, norm)) => Err(Error::SingularChannel {
            column: column + 1,
            norm,
            threshold,
        }),
        None => Ok(QrFactors { q: out.q, r: out.r }),
    }
}

/// QR of the `R_23` block. Rank deficiency is reported, not rejected.
pub fn qr_r23(r23: &Mat4) -> R23Factors {
    let threshold = RANK_TOL * r23.norm().max(f64::MIN_POSITIVE);
    let out = gram_schmidt(r23, threshold);
    R23Factors {
        e: out.q,
        f: out.r,
        rank_deficient: out.deficient.is_some(),
    }
}

/// One family of structural entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureCheck {
    pub name: &'static str,
    /// Largest normalized magnitude seen.
    pub max_violation: f64,
    /// Where it was seen (0-based indices into the checked matrix).
    pub worst_entry: Option<(usize, usize)>,
    pub samples: usize,
}

/// A structural entry above tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub entry: (usize, usize),
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub tolerance: f64,
    pub checks: Vec<StructureCheck>,
    pub violations: Vec<Violation>,
    /// `R_23` was rank deficient in at least one sample.
    pub r23_rank_deficient: bool,
}

impl StructureReport {
    fn new(tolerance: f64) -> Self {
        StructureReport {
            tolerance,
            checks: Vec::new(),
            violations: Vec::new(),
            r23_rank_deficient: false,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn check(&self, name: &str) -> Option<&StructureCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Adds one sample of a named check; magnitudes above the tolerance are violations.
    pub fn record(&mut self, name: &'static str, entry: (usize, usize), magnitude: f64) {
        let idx = match self.checks.iter().position(|c| c.name == name) {
            Some(i) => i,
            None => {
                self.checks.push(StructureCheck {
                    name,
                    max_violation: 0.0,
                    worst_entry: None,
                    samples: 0,
                });
                self.checks.len() - 1
            }
        };
        let c = &mut self.checks[idx];
        c.samples += 1;
        // NaN counts as a violation
        if magnitude.is_nan() || magnitude > c.max_violation {
            c.max_violation = magnitude;
            c.worst_entry = Some(entry);
        }
        if magnitude.is_nan() || magnitude > self.tolerance {
            self.violations.push(Violation {
                check: name,
                entry,
                magnitude,
            });
        }
    }

    /// Folds another report (e.g. from another channel draw) into this one.
    pub fn merge(&mut self, other: StructureReport) {
        for oc in other.checks {
            match self.checks.iter_mut().find(|c| c.name == oc.name) {
                Some(c) => {
                    c.samples += oc.samples;
                    if oc.max_violation.is_nan() || oc.max_violation > c.max_violation {
                        c.max_violation = oc.max_violation;
                        c.worst_entry = oc.worst_entry;
                    }
                }
                None => self.checks.push(oc),
            }
        }
        self.violations.extend(other.violations);
        self.r23_rank_deficient |= other.r23_rank_deficient;
    }
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "structure report (tolerance {:e}, relative)",
            self.tolerance
        )?;
        for c in &self.checks {
            let status = if c.max_violation <= self.tolerance {
                "ok  "
            } else {
                "FAIL"
            };
            write!(f, "  {status} {:<28} max {:.3e}", c.name, c.max_violation)?;
            if let Some((i, j)) = c.worst_entry {
                write!(f, " at ({},{})", i + 1, j + 1)?;
            }
            writeln!(f, "  [{} samples]", c.samples)?;
        }
        if self.r23_rank_deficient {
            writeln!(f, "  note: R23 was rank deficient in at least one sample")?;
        }
        if !self.violations.is_empty() {
            writeln!(f, "  {} violation(s), first few:", self.violations.len())?;
            for v in self.violations.iter().take(10) {
                writeln!(
                    f,
                    "    {} entry ({},{}) = {:.3e}",
                    v.check,
                    v.entry.0 + 1,
                    v.entry.1 + 1,
                    v.magnitude
                )?;
            }
        }
        Ok(())
    }
}

/// Measures the zero pattern of `R` and `F` and the identities behind it.
///
/// Entry magnitudes are normalized by `|R|_F` (or `|F|_F`, `|R_23|_F^2` for
/// column inner products); the norm identity is relative to `|r_7|^2`.
/// Reported entries use 0-based indices into the full `R` (or into `F`).
pub fn verify_structure(f: &QrFactors, tol: f64) -> StructureReport {
    let mut rep = StructureReport::new(tol);
    let r = &f.r;
    let r_norm = r.norm();

    // zero pattern of every diagonal block
    for b in 0..4 {
        for &(i, j) in &PAIR_ZEROS {
            let (gi, gj) = (4 * b + i, 4 * b + j);
            rep.record("diag-block pattern", (gi, gj), r[(gi, gj)].abs() / r_norm);
        }
    }

    // R_13 = 0
    for i in 0..4 {
        for j in 8..12 {
            rep.record("R13 null block", (i, j), r[(i, j)].abs() / r_norm);
        }
    }

    // <q_j,h_k> = <q_{j+1},h_{k+1}>, <q_{j+1},h_k> = -<q_j,h_{k+1}>, j in {5,7}, k in {9,11}
    for j in [4, 6] {
        for k in [8, 10] {
            rep.record(
                "R23 pair symmetry",
                (j, k),
                (r[(j, k)] - r[(j + 1, k + 1)]).abs() / r_norm,
            );
            rep.record(
                "R23 pair antisymmetry",
                (j + 1, k),
                (r[(j + 1, k)] + r[(j, k + 1)]).abs() / r_norm,
            );
        }
    }

    // |r7|^2 = |r5|^2 (1 + <h5,h7>/|h5|^2 - <h5,h7>^2/|h5|^4), with h = R columns (Q orthogonal)
    let h5 = r.column(4);
    let h7 = r.column(6);
    let h55 = h5.norm_squared();
    let h57 = h5.dot(&h7);
    let lhs = r[(6, 6)].powi(2);
    let rhs = r[(4, 4)].powi(2) * (1.0 + h57 / h55 - h57 * h57 / (h55 * h55));
    rep.record(
        "r7 norm identity",
        (6, 6),
        (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE),
    );

    // F pattern and the column orthogonality of R_23 behind it
    let r23 = f.r23();
    let scale = r23.norm_squared().max(f64::MIN_POSITIVE);
    let p = |c: usize| r23.column(c).into_owned();
    rep.record("R23 <p1,p2>", (0, 1), p(0).dot(&p(1)).abs() / scale);
    rep.record("R23 <p1,p4>", (0, 3), p(0).dot(&p(3)).abs() / scale);
    let ef = qr_r23(&r23);
    rep.r23_rank_deficient = ef.rank_deficient;
    let f_norm = ef.f.norm().max(f64::MIN_POSITIVE);
    for &(i, j) in &PAIR_ZEROS {
        rep.record("F pattern", (i, j), ef.f[(i, j)].abs() / f_norm);
    }
    rep
}

/// `|Q^T Q - I|_max` and `|QR - H_eq|_F / |H_eq|_F`.
pub fn factorization_residuals(f: &QrFactors, h_eq: &Mat16) -> (f64, f64) {
    let orth = (f.q.transpose() * f.q - Mat16::identity()).amax();
    let recon = (f.q * f.r - h_eq).norm() / h_eq.norm();
    (orth, recon)
}
