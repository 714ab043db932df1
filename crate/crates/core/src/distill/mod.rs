//! Post-processing: gating and slot matching, sifting, cascade
//! reconciliation and asymptotic secure key rates.

mod cascade;
mod projection;
mod rate;
mod sift;

pub use cascade::{
    cascade_reconcile, toeplitz_hash, CascadeOutcome, BASE_PASSES, BLOCK_FACTOR, MAX_PASSES, VERIFICATION_BITS,
};
pub use projection::{cutoff_loss, gain_db, mission_projection, GainKind};
pub use rate::{
    binary_entropy, decoy_bounds, decoy_rate, gllp_rate_single, infinite_decoy_rate, rate_stderr, AnalyticPoint,
    DecoyEstimate, GainObservation, GatedGain, KeyRateResult, LinkModel, RateBound, SinglePhoton, DEFAULT_F_EC,
};
pub use sift::{class_statistics, gate_and_match, sift, ClassStats, MatchedPair, SiftedBlock};
