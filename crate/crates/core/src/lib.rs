//! Dynamical-decoupling (DD) noise spectroscopy of a nuclear spin bath seen
//! through a central probe spin.
//!
//! The crate is organised along the analysis pipeline:
//!
//! - [`noise`]: parametric bath spectra, their autocorrelations and exact
//!   Ornstein–Uhlenbeck trajectory synthesis.
//! - [`filter`]: CPMG/Hahn pulse sequences, filter functions and the
//!   frequency-domain decoherence exponent χ.
//! - [`coherence`]: time-domain Monte Carlo coherence, T₂ extraction and
//!   scaling-law fits.
//! - [`spectroscopy`]: decay rates → spectrum reconstruction → model fits.
//! - [`bath`]: kinetic Monte Carlo of flip-flopping bath spin pairs with a
//!   frozen core.
//! - [`magnetometry`]: the probe as a synchronous ac magnetometer.
//!
//! All internal dynamics use the angular detuning process ξ(t) in rad/s; the
//! [`units`] module is the only place that converts to the Hz-based values
//! used in reports and configuration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod coherence;
pub mod error;
pub mod filter;
pub mod lsq;
pub mod magnetometry;
pub mod noise;
pub mod par;
pub mod periodogram;
pub mod quad;
pub mod rng;
pub mod spectroscopy;
pub mod stats;
pub mod units;

pub use error::{Error, Result};
