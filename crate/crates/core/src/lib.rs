//! Software channel sounder.
//!
//! The crate covers the whole measurement chain of a correlation channel
//! sounder:
//!
//! * [`waveform`] builds maximal-length sounding sequences and frames them
//!   into the repeated, zero-padded transmit stream.
//! * [`models`] holds piecewise power-delay-profile models (bad urban and
//!   hilly terrain built in, others loaded from JSON) and discretizes them
//!   into tap sets.
//! * [`emulator`] runs a tapped delay line and AWGN over a transmit stream.
//! * [`estimator`] recovers impulse responses by sliding correlation,
//!   averages them across frames and forms the power delay profile.
//! * [`metrics`] computes delay moments, coherence bandwidth, cluster counts
//!   and model comparisons.
//! * [`io`] reads and writes raw IQ captures and the CSV/JSON result files.
//! * [`pipeline`] wires everything together for end-to-end runs.
//!
//! All delays are in microseconds unless a name says otherwise.

pub mod emulator;
pub mod error;
pub mod estimator;
pub mod io;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod waveform;

pub use error::{Error, Result};

/// Complex baseband sample used by all processing stages.
pub type Sample = num_complex::Complex64;
