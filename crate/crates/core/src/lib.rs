//! Asymptotic analysis of binary LDPC and spatially-coupled LDPC ensembles
//! used with bit-interleaved coded modulation (BICM).
//!
//! The crate provides
//!
//! * square Gray-labelled QAM constellations ([`constellation`]),
//! * the AWGN / Rayleigh fast-fading channel with perfect CSI and its
//!   parametrizations by `sigma`, `Eb/N0` and normalized entropy ([`channel`]),
//! * quantized LLR-density algebra ([`density`]),
//! * MAP and max-log-MAP demappers and Monte-Carlo demapper densities
//!   ([`demapper`]),
//! * BICM achievable rates via the GMI and coded-modulation capacity ([`gmi`]),
//! * density evolution and BP thresholds for uncoupled ([`de_flat`]) and
//!   spatially-coupled ([`de_coupled`]) ensembles,
//! * BP-GEXIT curves and area thresholds ([`gexit`]),
//! * the batch front-end used by the `scbicm` binary ([`cli`]).

pub mod channel;
pub mod cli;
pub mod constellation;
pub mod de_coupled;
pub mod de_flat;
pub mod demapper;
pub mod density;
mod error;
pub mod gexit;
pub mod gmi;
pub mod parallel;
pub mod rng;

pub use error::{Error, Result};

/// Library version embedded in every CLI artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
