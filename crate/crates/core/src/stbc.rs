//! The rate-2 3D MIMO codeword: two Golden codewords arranged in an
//! Alamouti block, plus the real-valued generator-matrix view of it.
//!
//! Conventions used throughout the crate:
//! * `vec` stacks matrix columns one below another;
//! * realizing a complex vector interleaves parts: `[x1.re, x1.im, x2.re, ...]`;
//! * realifying a complex scalar `h` gives the block `[[h.re, -h.im], [h.im, h.re]]`,
//!   so `realify(A) * realize(x) == realize(A * x)`.

use nalgebra::{DMatrix, DVector, SMatrix};
use num_complex::Complex64;

use crate::Vec16;

/// Information symbols per codeword.
pub const NUM_SYMBOLS: usize = 8;
/// Transmit antennas.
pub const NUM_TX: usize = 4;
/// Channel uses per codeword.
pub const NUM_USES: usize = 4;

/// Real dimension of a vectorized codeword (`4 x 4` complex entries).
pub const CODEWORD_REAL_DIM: usize = 2 * NUM_TX * NUM_USES;

pub type CMat4 = SMatrix<Complex64, 4, 4>;
pub type CMat2 = SMatrix<Complex64, 2, 2>;

/// Real `32 x 16` generator: realized `vec(X)` as a function of realized symbols.
pub type GenMat = SMatrix<f64, CODEWORD_REAL_DIM, 16>;

/// Golden-ratio constants of the two Golden sub-codewords.
#[derive(Debug, Clone, Copy)]
pub struct GoldenConstants {
    pub theta: f64,
    pub theta_bar: f64,
    pub alpha: Complex64,
    pub alpha_bar: Complex64,
    pub scale: f64,
}

impl GoldenConstants {
    pub fn new() -> Self {
        let theta = (1.0 + 5f64.sqrt()) / 2.0;
        let theta_bar = 1.0 - theta;
        GoldenConstants {
            theta,
            theta_bar,
            alpha: Complex64::new(1.0, 1.0 - theta),
            alpha_bar: Complex64::new(1.0, 1.0 - theta_bar),
            scale: 1.0 / 5f64.sqrt(),
        }
    }
}

impl Default for GoldenConstants {
    fn default() -> Self {
        Self::new()
    }
}

/// The eight complex information symbols of one codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolVector([Complex64; NUM_SYMBOLS]);

impl SymbolVector {
    pub fn new(s: [Complex64; NUM_SYMBOLS]) -> Self {
        SymbolVector(s)
    }

    pub fn zeros() -> Self {
        SymbolVector([Complex64::new(0.0, 0.0); NUM_SYMBOLS])
    }

    /// Unit vector with `value` at symbol `index` (0-based).
    pub fn unit(index: usize, value: Complex64) -> Self {
        let mut s = Self::zeros();
        s.0[index] = value;
        s
    }

    pub fn symbols(&self) -> &[Complex64; NUM_SYMBOLS] {
        &self.0
    }

    /// Interleaved real form `[s1.re, s1.im, ..., s8.re, s8.im]`.
    pub fn realized(&self) -> Vec16 {
        Vec16::from_fn(|k, _| {
            let s = self.0[k / 2];
            if k % 2 == 0 {
                s.re
            } else {
                s.im
            }
        })
    }

    pub fn from_realized(v: &Vec16) -> Self {
        SymbolVector(std::array::from_fn(|j| {
            Complex64::new(v[2 * j], v[2 * j + 1])
        }))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// A `4 x 4` transmit matrix: rows are antennas, columns channel uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Codeword(pub CMat4);

impl Codeword {
    pub fn matrix(&self) -> &CMat4 {
        &self.0
    }

    /// Upper-left Golden block.
    pub fn x1(&self) -> CMat2 {
        self.0.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Lower-left Golden block.
    pub fn x2(&self) -> CMat2 {
        self.0.fixed_view::<2, 2>(2, 0).into_owned()
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Realized column-stacked form (32 reals).
    pub fn realized_vec(&self) -> SMatrix<f64, CODEWORD_REAL_DIM, 1> {
        let mut out = SMatrix::<f64, CODEWORD_REAL_DIM, 1>::zeros();
        for (k, x) in self.0.iter().enumerate() {
            out[2 * k] = x.re;
            out[2 * k + 1] = x.im;
        }
        out
    }
}

fn golden_block(g: &GoldenConstants, s: &[Complex64]) -> CMat2 {
    let i = Complex64::i();
    CMat2::new(
        g.alpha * (s[0] + g.theta * s[1]),
        g.alpha * (s[2] + g.theta * s[3]),
        i * g.alpha_bar * (s[2] + g.theta_bar * s[3]),
        g.alpha_bar * (s[0] + g.theta_bar * s[1]),
    ) * Complex64::from(g.scale)
}

/// Builds `X = [[X1, -conj(X2)], [X2, conj(X1)]]` from eight symbols.
pub fn encode(s: &SymbolVector) -> Codeword {
    let g = GoldenConstants::new();
    let x1 = golden_block(&g, &s.0[0..4]);
    let x2 = golden_block(&g, &s.0[4..8]);
    let mut x = CMat4::zeros();
    x.fixed_view_mut::<2, 2>(0, 0).copy_from(&x1);
    x.fixed_view_mut::<2, 2>(0, 2)
        .copy_from(&(-x2.map(|v| v.conj())));
    x.fixed_view_mut::<2, 2>(2, 0).copy_from(&x2);
    x.fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&x1.map(|v| v.conj()));
    Codeword(x)
}

/// Weight matrices `[A1, B1, ..., A8, B8]`: `A_j = encode(e_j)`, `B_j = encode(i e_j)`.
pub fn weight_matrices() -> Vec<CMat4> {
    (0..NUM_SYMBOLS)
        .flat_map(|j| {
            [Complex64::new(1.0, 0.0), Complex64::i()].map(|v| encode(&SymbolVector::unit(j, v)).0)
        })
        .collect()
}

/// Real generator matrix of the code; `G^T G = 2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix(pub GenMat);

impl GeneratorMatrix {
    pub fn matrix(&self) -> &GenMat {
        &self.0
    }

    /// Realized `vec(X)` for symbols `s`.
    pub fn apply(&self, s: &SymbolVector) -> SMatrix<f64, CODEWORD_REAL_DIM, 1> {
        self.0 * s.realized()
    }
}

pub fn generator_matrix() -> GeneratorMatrix {
    let mut g = GenMat::zeros();
    for (col, w) in weight_matrices().into_iter().enumerate() {
        g.set_column(col, &Codeword(w).realized_vec());
    }
    GeneratorMatrix(g)
}

/// Realifies a complex matrix entrywise (`r x c` complex -> `2r x 2c` real).
pub fn realify_matrix(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * h.nrows(), 2 * h.ncols());
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            let v = h[(r, c)];
            out[(2 * r, 2 * c)] = v.re;
            out[(2 * r, 2 * c + 1)] = -v.im;
            out[(2 * r + 1, 2 * c)] = v.im;
            out[(2 * r + 1, 2 * c + 1)] = v.re;
        }
    }
    out
}

/// Interleaves real and imaginary parts of a complex vector.
pub fn realize_vector(x: &DVector<Complex64>) -> DVector<f64> {
    DVector::from_fn(2 * x.len(), |k, _| {
        let v = x[k / 2];
        if k % 2 == 0 {
            v.re
        } else {
            v.im
        }
    })
}
