//! Quasi-static Rayleigh channel, AWGN and the real-valued equivalent channel.

use nalgebra::SMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stbc::{Codeword, GeneratorMatrix, CODEWORD_REAL_DIM, NUM_SYMBOLS, NUM_TX, NUM_USES};
use crate::{Mat16, Vec16};

/// Receive antennas.
pub const NUM_RX: usize = 2;

/// `E[|HX|_F^2] / (N_r T)` for unit-energy symbols: each codeword carries
/// energy `2 * 8`, spread over `T = 4` uses and seen by every receive antenna.
pub const MEAN_RX_ENERGY: f64 = (2 * NUM_SYMBOLS) as f64 / NUM_USES as f64;

pub type CMat2x4 = SMatrix<Complex64, NUM_RX, NUM_TX>;

/// One `2 x 4` channel draw, held constant over the codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization(pub CMat2x4);

impl ChannelRealization {
    pub fn matrix(&self) -> &CMat2x4 {
        &self.0
    }

    /// Entrywise realification, `4 x 8`.
    pub fn realified(&self) -> SMatrix<f64, { 2 * NUM_RX }, { 2 * NUM_TX }> {
        let mut out = SMatrix::<f64, { 2 * NUM_RX }, { 2 * NUM_TX }>::zeros();
        for r in 0..NUM_RX {
            for c in 0..NUM_TX {
                let h = self.0[(r, c)];
                out[(2 * r, 2 * c)] = h.re;
                out[(2 * r, 2 * c + 1)] = -h.im;
                out[(2 * r + 1, 2 * c)] = h.im;
                out[(2 * r + 1, 2 * c + 1)] = h.re;
            }
        }
        out
    }
}

/// Noise level for a given SNR in dB; `+inf` means noiseless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    snr_db: f64,
}

impl NoiseConfig {
    pub fn new(snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("SNR {snr_db} dB is not usable")));
        }
        Ok(NoiseConfig { snr_db })
    }

    pub fn noiseless() -> Self {
        NoiseConfig {
            snr_db: f64::INFINITY,
        }
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    /// Noise variance per complex entry; each real part gets half.
    pub fn n0(&self) -> f64 {
        if self.snr_db.is_infinite() {
            0.0
        } else {
            MEAN_RX_ENERGY / 10f64.powf(self.snr_db / 10.0)
        }
    }
}

fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let sigma = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sigma * re, sigma * im)
}

/// i.i.d. CN(0, 1) entries.
pub fn draw_channel(rng: &mut impl Rng) -> ChannelRealization {
    ChannelRealization(CMat2x4::from_fn(|_, _| complex_gaussian(rng, 1.0)))
}

/// `Y = H X + N` with `N` i.i.d. CN(0, n0).
pub fn transmit(
    x: &Codeword,
    h: &ChannelRealization,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
) -> SMatrix<Complex64, NUM_RX, NUM_USES> {
    let n0 = noise.n0();
    let clean = h.0 * x.0;
    if n0 == 0.0 {
        return clean;
    }
    clean + SMatrix::<Complex64, NUM_RX, NUM_USES>::from_fn(|_, _| complex_gaussian(rng, n0))
}

/// Realized column-stacked received block (16 reals).
pub fn realize_received(y: &SMatrix<Complex64, NUM_RX, NUM_USES>) -> Vec16 {
    let mut out = Vec16::zeros();
    for (k, v) in y.iter().enumerate() {
        out[2 * k] = v.re;
        out[2 * k + 1] = v.im;
    }
    out
}

/// `H_eq = (I_T kron realify(H)) G`.
pub fn equivalent_channel(h: &ChannelRealization, g: &GeneratorMatrix) -> Mat16 {
    let hr = h.realified();
    let mut kron = SMatrix::<f64, 16, CODEWORD_REAL_DIM>::zeros();
    for t in 0..NUM_USES {
        kron.fixed_view_mut::<{ 2 * NUM_RX }, { 2 * NUM_TX }>(4 * t, 8 * t)
            .copy_from(&hr);
    }
    kron * g.0
}

/// Deterministic generator for one Monte-Carlo trial, derived only from
/// `(master seed, SNR, trial index, attempt)`.
pub fn trial_stream(master_seed: u64, snr_db: f64, trial: u64, attempt: u32) -> ChaCha8Rng {
    let mut state = splitmix(master_seed ^ 0x3d4d_494d_4f5f_3344);
    state = splitmix(state ^ snr_db.to_bits());
    state = splitmix(state ^ trial);
    state = splitmix(state ^ attempt as u64);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Inner product of two columns of `H_eq` (0-based).
pub fn column_inner(h_eq: &Mat16, a: usize, b: usize) -> f64 {
    h_eq.column(a).dot(&h_eq.column(b))
}
