//! Closed-form QBER composition and effective signal-to-noise ratio.
//!
//! Independent bit-flip processes compose through
//! `F(e1, e2) = e1 + e2 - 2·e1·e2`. Device errors (source polarisation and
//! PBS extinction) form the intrinsic part, atmosphere plus noise clicks the
//! external part, and the two compose into the total QBER.
//!
//! ESNR compares expected in-gate signal clicks with expected in-gate noise
//! clicks. Noise clicks are unpolarised, so after sifting they are wrong half
//! of the time by default (`noise_error_fraction`).

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::{Error, Result};

/// FWHM of a Gaussian divided by its standard deviation, 2·sqrt(2·ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Default error probability of a sifted noise click.
pub const NOISE_ERROR_FRACTION: f64 = 0.5;

fn check_probability(name: &str, p: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&p) {
        return Err(Error::invalid(format!("{name} = {p} outside [0, {max}]")));
    }
    Ok(())
}

/// Probability that a bit is flipped after two independent flip processes.
pub fn combine_error(e1: f64, e2: f64) -> Result<f64> {
    check_probability("e1", e1, 1.0)?;
    check_probability("e2", e2, 1.0)?;
    Ok(flip(e1, e2))
}

#[inline]
pub(crate) fn flip(e1: f64, e2: f64) -> f64 {
    e1 + e2 - 2.0 * e1 * e2
}

pub fn intrinsic_qber(e_sp: f64, e_pbs: f64) -> Result<f64> {
    check_probability("e_sp", e_sp, 0.5)?;
    check_probability("e_pbs", e_pbs, 0.5)?;
    Ok(flip(e_sp, e_pbs))
}

pub fn external_qber(e_a: f64, e_n: f64, e_dcr: f64) -> Result<f64> {
    check_probability("e_a", e_a, 0.5)?;
    check_probability("e_n", e_n, 0.5)?;
    check_probability("e_dcr", e_dcr, 0.5)?;
    check_probability("e_n + e_dcr", e_n + e_dcr, 0.5)?;
    Ok(flip(e_a, e_n + e_dcr))
}

pub fn total_qber(e_i: f64, e_e: f64) -> Result<f64> {
    check_probability("e_i", e_i, 0.5)?;
    check_probability("e_e", e_e, 0.5)?;
    Ok(flip(e_i, e_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberBreakdown {
    pub e_sp: f64,
    pub e_pbs: f64,
    pub e_a: f64,
    pub e_n: f64,
    pub e_dcr: f64,
    pub e_i: f64,
    pub e_e: f64,
    pub qber: f64,
}

impl QberBreakdown {
    pub fn new(e_sp: f64, e_pbs: f64, e_a: f64, e_n: f64, e_dcr: f64) -> Result<Self> {
        let e_i = intrinsic_qber(e_sp, e_pbs)?;
        let e_e = external_qber(e_a, e_n, e_dcr)?;
        let qber = total_qber(e_i, e_e)?;
        Ok(Self { e_sp, e_pbs, e_a, e_n, e_dcr, e_i, e_e, qber })
    }

    /// Splits the noise contribution of a gated click stream into background
    /// and dark parts, given per-gate click probabilities.
    pub fn from_rates(
        e_sp: f64,
        e_pbs: f64,
        e_a: f64,
        signal_per_gate: f64,
        background_per_gate: f64,
        dark_per_gate: f64,
        noise_error_fraction: f64,
    ) -> Result<Self> {
        let total = signal_per_gate + background_per_gate + dark_per_gate;
        if !(total > 0.0) {
            return Self::new(e_sp, e_pbs, e_a, 0.0, 0.0);
        }
        let e_n = noise_error_fraction * background_per_gate / total;
        let e_dcr = noise_error_fraction * dark_per_gate / total;
        Self::new(e_sp, e_pbs, e_a, e_n, e_dcr)
    }
}

/// Fraction of time the gate is open, G_W·R_Q.
pub fn duty_cycle(gate_width_ns: f64, rep_rate_hz: f64) -> Result<f64> {
    let d = gate_width_ns * 1e-9 * rep_rate_hz;
    if !(d >= 0.0) {
        return Err(Error::invalid("gate width and repetition rate must be >= 0"));
    }
    // Allow for rounding in e.g. 40 ns × 25 MHz.
    if d > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("duty cycle {d} exceeds 1")));
    }
    Ok(d.min(1.0))
}

/// Standard deviation of the arrival-time distribution: the Gaussian pulse
/// convolved with synchronisation jitter.
pub fn timing_sigma_ns(pulse_fwhm_ns: f64, jitter_sigma_ns: f64) -> f64 {
    (pulse_fwhm_ns / FWHM_PER_SIGMA).hypot(jitter_sigma_ns)
}

/// Probability that a signal click lands within ±G_W/2 of the slot centre.
pub fn gate_capture_fraction(pulse_fwhm_ns: f64, gate_width_ns: f64, timing_sigma_ns: f64) -> f64 {
    let sigma = self::timing_sigma_ns(pulse_fwhm_ns, timing_sigma_ns);
    capture_for_sigma(gate_width_ns, sigma)
}

pub(crate) fn capture_for_sigma(gate_width_ns: f64, sigma_ns: f64) -> f64 {
    if gate_width_ns <= 0.0 {
        return 0.0;
    }
    if gate_width_ns.is_infinite() || sigma_ns <= 0.0 {
        return 1.0;
    }
    erf(gate_width_ns / (2.0 * std::f64::consts::SQRT_2 * sigma_ns))
}

/// Link and receiver parameters that determine in-gate signal and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub mu: f64,
    pub pulse_fwhm_ns: f64,
    pub rep_rate_hz: f64,
    /// Background plus dark-count click rate summed over all detectors.
    pub noise_rate_hz: f64,
    pub total_loss_db: f64,
    pub gate_width_ns: f64,
    /// Synchronisation jitter (one sigma) added in quadrature to the pulse.
    pub timing_jitter_ns: f64,
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.gate_width_ns > 0.0) {
            return Err(Error::invalid("gate width must be > 0"));
        }
        if !(self.noise_rate_hz >= 0.0) {
            return Err(Error::invalid("noise rate must be >= 0"));
        }
        duty_cycle(self.gate_width_ns, self.rep_rate_hz)?;
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.total_loss_db / 10.0)
    }

    pub fn capture_fraction(&self) -> f64 {
        gate_capture_fraction(self.pulse_fwhm_ns, self.gate_width_ns, self.timing_jitter_ns)
    }

    /// Expected signal clicks per pulse inside the gate, μ·η·capture.
    pub fn signal_per_gate(&self) -> f64 {
        self.mu * self.transmittance() * self.capture_fraction()
    }

    /// Expected noise clicks per gate.
    pub fn noise_per_gate(&self) -> f64 {
        self.noise_rate_hz * self.gate_width_ns * 1e-9
    }
}

/// S/N for given per-gate expectations; infinite when there is no noise.
pub fn esnr_from_parts(signal_per_gate: f64, noise_per_gate: f64) -> f64 {
    if noise_per_gate <= 0.0 {
        return f64::INFINITY;
    }
    signal_per_gate / noise_per_gate
}

pub fn esnr(model: &SignalModel) -> f64 {
    esnr_from_parts(model.signal_per_gate(), model.noise_per_gate())
}

/// QBER implied by an ESNR with the default noise error fraction of one half.
pub fn qber_from_esnr(esnr: f64, e_intrinsic: f64) -> f64 {
    qber_from_esnr_with(esnr, e_intrinsic, NOISE_ERROR_FRACTION)
}

/// `noise_error_fraction` = 1 reproduces the literal N/(S+N) reading.
pub fn qber_from_esnr_with(esnr: f64, e_intrinsic: f64, noise_error_fraction: f64) -> f64 {
    let noise_fraction = if esnr.is_infinite() { 0.0 } else { 1.0 / (esnr + 1.0) };
    flip(e_intrinsic, noise_error_fraction * noise_fraction)
}
