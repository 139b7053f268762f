//! Sub-Nyquist multi-coset acquisition and segment-based recovery of blind
//! frequency-hopping signals.
//!
//! The crate is organized along the processing chain:
//!
//! * [`fh_signal`] synthesizes frequency-hopping and stationary multiband test signals.
//! * [`mc_sampler`] simulates the periodic nonuniform (multi-coset) sampler and builds
//!   the partial-DFT measurement matrix.
//! * [`preprocessing`] interpolates and delay-corrects the coset streams and cuts the
//!   result into per-segment measurement matrices.
//! * [`recovery`] solves each segment's joint-sparse system (S-OMP, modified MUSIC,
//!   least squares on a known support) and reassembles the Nyquist-rate signal.
//! * [`dpss`] builds Slepian (DPSS) dictionaries used to shrink each segment system.
//! * [`experiments`] ties everything together into reproducible experiment sweeps.

pub mod dpss;
pub mod error;
pub mod experiments;
pub mod fh_signal;
pub mod io;
pub mod linalg;
pub mod mc_sampler;
pub mod preprocessing;
pub mod recovery;
pub mod seeds;
pub mod signal;

pub use error::{Error, Result};
pub use signal::ComplexSignal;

pub use num_complex::Complex64;

/// Dense complex matrix used for all measurement systems.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
