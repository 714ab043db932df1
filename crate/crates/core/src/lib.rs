//! Desk-scale simulator and post-processing toolkit for satellite-to-ground
//! BB84 key distribution.
//!
//! The crate is split along the data flow of a downlink experiment:
//!
//! * [`orbitlink`] - pass geometry and the optical loss budget.
//! * [`qbermodel`] - closed-form QBER composition and effective SNR.
//! * [`photonsim`] - seeded Monte Carlo of transmitter, channel and receiver.
//! * [`hdbcsync`] - de Bruijn beacon timing and clock recovery.
//! * [`distill`] - gating, sifting, cascade and asymptotic key rates.
//! * [`runner`] - configuration, presets, sweeps and figure datasets.
//!
//! Monte Carlo blocks, cascade trials and sweep points run on rayon when the
//! `parallel` feature is enabled (the default). Results are bitwise identical
//! with the feature off or at any thread count.

// Negated float comparisons are used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distill;
pub mod error;
pub mod hdbcsync;
pub mod orbitlink;
pub mod par;
pub mod photonsim;
pub mod qbermodel;
pub mod runner;

pub use error::{Error, Result};

/// Speed of light in km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;
