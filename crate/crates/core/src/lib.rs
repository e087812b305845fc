//! Near-field integrated sensing and communication with a uniform circular array.
//!
//! The crate covers the wideband OFDM echo model, the Cramér–Rao bound on
//! user range and angle, a bound-minimizing transmit beamformer, a
//! maximum-likelihood position estimator, and Monte Carlo harnesses that tie
//! these together.

pub mod beamformer;
pub mod cli;
pub mod config;
pub mod crlb;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod ml;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
pub use geometry::{angle_distance, wrap_angle, PolarPosition, SteeringVector, UcaGeometry, SPEED_OF_LIGHT};
pub use num_complex::Complex64;
pub use signal::{OfdmConfig, Observation, PilotGrid, SampleTensor};
