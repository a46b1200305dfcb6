//! Square QAM constellations, their PAM projections, slicing and
//! Schnorr-Euchner enumeration order.
//!
//! A square `M`-QAM point set is the Cartesian product of one `sqrt(M)`-PAM
//! level set with itself. Bits are Gray-labelled independently per axis: the
//! first half of a symbol's bits selects the real level, the second half the
//! imaginary level (most significant bit first).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stbc::{SymbolVector, NUM_SYMBOLS};

/// Orders accepted by [`QamConstellation::new`].
pub const SUPPORTED_ORDERS: [usize; 4] = [4, 16, 64, 256];

/// Real PAM level set, strictly increasing and symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PamConstellation {
    levels: Vec<f64>,
}

impl PamConstellation {
    /// Builds a level set from explicit values.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("PAM level set is empty"));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("PAM levels must be finite"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("PAM levels must be strictly increasing"));
        }
        let n = levels.len();
        let scale = levels[n - 1].abs().max(1.0);
        for k in 0..n {
            if (levels[k] + levels[n - 1 - k]).abs() > 1e-12 * scale {
                return Err(Error::invalid("PAM levels must be symmetric about zero"));
            }
        }
        Ok(PamConstellation { levels })
    }

    /// Uniform `order`-PAM with spacing `2 * half_spacing`: `..., -3d, -d, d, 3d, ...`.
    pub fn uniform(order: usize, half_spacing: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("PAM order must be positive"));
        }
        let levels = (0..order)
            .map(|k| (2.0 * k as f64 - (order as f64 - 1.0)) * half_spacing)
            .collect();
        Self::from_levels(levels)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    #[inline]
    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Nearest level to `x`; exact ties go to the smaller level.
    pub fn slice(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::invalid("cannot slice NaN"));
        }
        Ok(self.levels[self.slice_index(x)])
    }

    /// Index of the nearest level. `x` must not be NaN.
    #[inline]
    pub fn slice_index(&self, x: f64) -> usize {
        // first level >= x; the nearest is it or its left neighbour
        let hi = self.levels.partition_point(|&l| l < x);
        if hi == 0 {
            return 0;
        }
        if hi == self.levels.len() {
            return hi - 1;
        }
        let lo = hi - 1;
        if x - self.levels[lo] <= self.levels[hi] - x {
            lo
        } else {
            hi
        }
    }

    /// All levels sorted by ascending distance to `x`, ties toward the smaller level.
    pub fn se_order(&self, x: f64) -> Result<Vec<f64>> {
        if x.is_nan() {
            return Err(Error::invalid("cannot enumerate around NaN"));
        }
        Ok(self.se_indices(x).map(|k| self.levels[k]).collect())
    }

    /// Allocation-free Schnorr-Euchner enumeration of level indices around `x`.
    #[inline]
    pub fn se_indices(&self, x: f64) -> SeIndices<'_> {
        let first = self.slice_index(x);
        SeIndices {
            levels: &self.levels,
            x,
            left: first as isize - 1,
            right: first + 1,
            first: Some(first),
        }
    }

    /// Index of a level equal to `value` within `tol`, if any.
    pub fn index_of(&self, value: f64, tol: f64) -> Option<usize> {
        if value.is_nan() {
            return None;
        }
        let k = self.slice_index(value);
        ((self.levels[k] - value).abs() <= tol).then_some(k)
    }
}

/// Zig-zag walk outward from the nearest level.
#[derive(Debug, Clone)]
pub struct SeIndices<'a> {
    levels: &'a [f64],
    x: f64,
    left: isize,
    right: usize,
    first: Option<usize>,
}

impl Iterator for SeIndices<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if let Some(k) = self.first.take() {
            return Some(k);
        }
        let has_left = self.left >= 0;
        let has_right = self.right < self.levels.len();
        let take_left = match (has_left, has_right) {
            (false, false) => return None,
            (true, false) => true,
            (false, true) => false,
            (true, true) => {
                let dl = self.x - self.levels[self.left as usize];
                let dr = self.levels[self.right] - self.x;
                dl <= dr
            }
        };
        if take_left {
            let k = self.left as usize;
            self.left -= 1;
            Some(k)
        } else {
            let k = self.right;
            self.right += 1;
            Some(k)
        }
    }
}

/// Gray label of the `index`-th level of a PAM axis.
#[inline]
pub fn gray_label(index: usize) -> usize {
    index ^ (index >> 1)
}

fn gray_inverse(mut label: usize) -> usize {
    let mut index = label;
    while label > 0 {
        label >>= 1;
        index ^= label;
    }
    index
}

/// Unit-energy square QAM with per-axis Gray labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: usize,
    pam: PamConstellation,
    points: Vec<Complex64>,
    bits_per_axis: usize,
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if side * side != order {
            return Err(Error::invalid(format!(
                "{order}-QAM is not a square constellation"
            )));
        }
        if !SUPPORTED_ORDERS.contains(&order) {
            return Err(Error::invalid(format!(
                "unsupported QAM order {order} (expected one of {SUPPORTED_ORDERS:?})"
            )));
        }
        // mean |s|^2 = 2 d^2 (M - 1) / 3 for levels +-d, +-3d, ...
        let half_spacing = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let pam = PamConstellation::uniform(side, half_spacing)?;
        let points = (0..order)
            .map(|p| Complex64::new(pam.level(p / side), pam.level(p % side)))
            .collect();
        Ok(QamConstellation {
            order,
            pam,
            points,
            bits_per_axis: side.trailing_zeros() as usize,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The `sqrt(M)`-PAM set shared by both axes.
    pub fn pam(&self) -> &PamConstellation {
        &self.pam
    }

    /// Points ordered lexicographically by (real, imaginary).
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Bits carried by one 3D MIMO codeword.
    pub fn bits_per_codeword(&self) -> usize {
        NUM_SYMBOLS * self.bits_per_symbol()
    }

    /// Gray label (real bits high, imaginary bits low) of a point index.
    pub fn label(&self, point: usize) -> usize {
        let side = self.pam.len();
        (gray_label(point / side) << self.bits_per_axis) | gray_label(point % side)
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }

    /// Maps `8 * log2(M)` bits (each 0 or 1) onto eight symbols.
    pub fn bits_to_symbols(&self, bits: &[u8]) -> Result<SymbolVector> {
        let per_symbol = self.bits_per_symbol();
        if bits.len() != NUM_SYMBOLS * per_symbol {
            return Err(Error::invalid(format!(
                "expected {} bits, got {}",
                NUM_SYMBOLS * per_symbol,
                bits.len()
            )));
        }
        let mut s = [Complex64::new(0.0, 0.0); NUM_SYMBOLS];
        for (sym, chunk) in s.iter_mut().zip(bits.chunks(per_symbol)) {
            let (re_bits, im_bits) = chunk.split_at(self.bits_per_axis);
            let re = gray_inverse(pack_bits(re_bits)?);
            let im = gray_inverse(pack_bits(im_bits)?);
            *sym = Complex64::new(self.pam.level(re), self.pam.level(im));
        }
        Ok(SymbolVector::new(s))
    }

    /// Inverse of [`bits_to_symbols`](Self::bits_to_symbols); every symbol must be a constellation point.
    pub fn symbols_to_bits(&self, s: &SymbolVector) -> Result<Vec<u8>> {
        let mut bits = Vec::with_capacity(self.bits_per_codeword());
        for sym in s.symbols() {
            for v in [sym.re, sym.im] {
                let k = self
                    .pam
                    .index_of(v, 1e-9)
                    .ok_or_else(|| Error::invalid(format!("{v} is not a constellation level")))?;
                unpack_bits(gray_label(k), self.bits_per_axis, &mut bits);
            }
        }
        Ok(bits)
    }

    /// Bits of a realized symbol vector given as PAM level indices.
    pub fn indices_to_bits(&self, indices: &[u8; 2 * NUM_SYMBOLS], out: &mut Vec<u8>) {
        for &k in indices {
            unpack_bits(gray_label(k as usize), self.bits_per_axis, out);
        }
    }
}

/// Convenience constructor mirroring [`QamConstellation::new`].
pub fn make_qam(order: usize) -> Result<QamConstellation> {
    QamConstellation::new(order)
}

fn pack_bits(bits: &[u8]) -> Result<usize> {
    bits.iter().try_fold(0usize, |acc, &b| match b {
        0 | 1 => Ok((acc << 1) | b as usize),
        _ => Err(Error::invalid(format!("bit value {b} is not 0 or 1"))),
    })
}

fn unpack_bits(label: usize, width: usize, out: &mut Vec<u8>) {
    for shift in (0..width).rev() {
        out.push(((label >> shift) & 1) as u8);
    }
}
