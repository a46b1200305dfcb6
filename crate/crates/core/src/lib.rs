//! 3D MIMO space-time block code for 4x2 distributed MIMO.
//!
//! The crate covers the whole link: square-QAM constellations, the rate-2
//! 3D MIMO codeword (two Golden codewords arranged in an Alamouti block),
//! its real-valued equivalent channel, the structured QR factorization whose
//! zero pattern enables group-wise detection, and three maximum-likelihood
//! decoders sharing one contract:
//!
//! * [`decoders::ml_bruteforce`] exhaustive search over all `M^8` codewords,
//! * [`decoders::sphere_decode_se`] real-valued depth-16 sphere decoder with
//!   Schnorr-Euchner child ordering,
//! * [`decoders::simplified_ml_decode`] the conditional group-wise decoder
//!   that splits the search into four parallel two-symbol PAM branches.
//!
//! [`harness`] drives Monte-Carlo BER / node-count sweeps and the structure
//! verification report.

pub mod channel;
pub mod constellation;
pub mod decoders;
pub mod error;
pub mod harness;
pub mod stbc;
pub mod structured_qr;

pub use channel::{ChannelRealization, NoiseConfig};
pub use constellation::{PamConstellation, QamConstellation};
pub use decoders::{DecodeOptions, DecodeResult, DecoderKind, NodeStats};
pub use error::{Error, Result};
pub use stbc::{Codeword, GeneratorMatrix, SymbolVector};
pub use structured_qr::{QrFactors, R23Factors, StructureReport};

/// Real 16x16 matrix (equivalent channel, Q and R factors).
pub type Mat16 = nalgebra::SMatrix<f64, 16, 16>;
/// Real 16-vector (realized received signal, interleaved symbols).
pub type Vec16 = nalgebra::SVector<f64, 16>;
/// Real 4x4 block.
pub type Mat4 = nalgebra::SMatrix<f64, 4, 4>;
/// Real 4-vector.
pub type Vec4 = nalgebra::SVector<f64, 4>;
