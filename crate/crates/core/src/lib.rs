//! Two-layer massive-MIMO C-RAN uplink: user devices reach remote radio units
//! over correlated Rayleigh channels, and the radio units amplify-and-forward
//! to a baseband unit over a Rician millimetre-wave fronthaul.
//!
//! The crate provides the system model, channel sampling and MMSE estimation,
//! a deterministic-equivalent sum-rate, a Monte-Carlo link oracle that checks
//! it, and a differential-evolution optimizer for the per-device pilot/data
//! power split.

pub mod channel;
pub mod closedrate;
pub mod dea;
pub mod dump;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod linalg;
pub mod mcoracle;
pub mod rng;
pub mod sysmodel;

pub use error::{Error, Result};
