use serde::{Deserialize, Serialize};

use crate::photonsim::Intensity;
use crate::qbermodel::{self, SignalModel};
use crate::{Error, Result};

/// Default error-correction inefficiency.
pub const DEFAULT_F_EC: f64 = 1.2;

/// Error rate assigned to vacuum and noise clicks.
const E0: f64 = 0.5;

/// H₂(p) in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(h2(p))
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// `q·[Q₁(1 − H₂(e₁)) − f·Q·H₂(E)]`, clamped at zero.
fn key_rate(q_sift: f64, q1: f64, e1: f64, gain: f64, qber: f64, f_ec: f64) -> f64 {
    if !(q1 > 0.0) || !(gain > 0.0) {
        return 0.0;
    }
    let r = q_sift * (q1 * (1.0 - h2(e1.clamp(0.0, 0.5))) - f_ec * gain * h2(qber.clamp(0.0, 0.5)));
    r.max(0.0)
}

/// Single-intensity GLLP rate: every multiphoton pulse is assumed to leak
/// its bit, so the single-photon fraction of clicks is at least
/// `Ω = (Q − p_multi)/Q`.
pub fn gllp_rate_single(q_sift: f64, gain: f64, qber: f64, mu: f64, f_ec: f64) -> f64 {
    if !(gain > 0.0) {
        return 0.0;
    }
    let p_multi = 1.0 - (1.0 + mu) * (-mu).exp();
    let omega = ((gain - p_multi) / gain).max(0.0);
    if omega <= 0.0 {
        return 0.0;
    }
    key_rate(q_sift, omega * gain, (qber / omega).min(0.5), gain, qber, f_ec)
}

/// Single-photon yield and error of a characterised channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhoton {
    pub y1: f64,
    pub e1: f64,
}

/// GLLP with the exact single-photon yield and error, the limit an
/// infinite set of decoy intensities would reach.
pub fn infinite_decoy_rate(q_sift: f64, gain: f64, qber: f64, mu: f64, single: SinglePhoton, f_ec: f64) -> f64 {
    let q1 = single.y1 * mu * (-mu).exp();
    key_rate(q_sift, q1, single.e1, gain, qber, f_ec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub q1_lower: f64,
}

/// Observed gain and error rate of one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainObservation {
    pub mu: f64,
    pub gain: f64,
    pub qber: f64,
}

/// Vacuum + weak decoy bounds from a signal `(μ)`, weak decoy `(ν)` and
/// vacuum gain `y0`.
pub fn decoy_bounds(signal: GainObservation, weak: GainObservation, y0: f64) -> Result<DecoyEstimate> {
    let (mu, nu) = (signal.mu, weak.mu);
    if !(nu > 0.0 && mu > nu) {
        return Err(Error::invalid(format!("decoy bounds need mu > nu > 0, got mu={mu}, nu={nu}")));
    }
    let y0 = y0.max(0.0);
    let y1 = mu / (mu * nu - nu * nu)
        * (weak.gain * nu.exp() - signal.gain * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
    if !(y1 > 0.0) {
        return Err(Error::invalid(format!("single-photon yield bound {y1:.3e} is not positive")));
    }
    let y1 = y1.min(1.0);
    let e1 = ((weak.qber * weak.gain * nu.exp() - E0 * y0) / (y1 * nu)).clamp(0.0, 0.5);
    Ok(DecoyEstimate { y1_lower: y1, e1_upper: e1, q1_lower: y1 * mu * (-mu).exp() })
}

pub fn decoy_rate(q_sift: f64, signal: GainObservation, estimate: &DecoyEstimate, f_ec: f64) -> f64 {
    key_rate(q_sift, estimate.q1_lower, estimate.e1_upper, signal.gain, signal.qber, f_ec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBound {
    GllpStrict,
    #[default]
    InfiniteDecoy,
    VacuumWeakDecoy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub raw_rate_per_pulse: f64,
    pub sifted_rate_per_pulse: f64,
    pub secure_rate_per_pulse: f64,
    pub skr_bps: f64,
    pub leakage_bits: u64,
    /// Secure over sifted rate.
    pub nskr: f64,
}

impl KeyRateResult {
    pub fn new(raw: f64, q_sift: f64, secure: f64, rep_rate_hz: f64, leakage_bits: u64) -> Self {
        let sifted = raw * q_sift;
        let secure = secure.clamp(0.0, sifted);
        Self {
            raw_rate_per_pulse: raw,
            sifted_rate_per_pulse: sifted,
            secure_rate_per_pulse: secure,
            skr_bps: secure * rep_rate_hz,
            leakage_bits,
            nskr: if sifted > 0.0 { secure / sifted } else { 0.0 },
        }
    }
}

/// Closed-form description of a gated BB84 link. Noise clicks are spread
/// evenly over the four detectors; slots firing two detectors are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub signal: SignalModel,
    pub e_sp: f64,
    pub e_pbs: f64,
    pub e_a: f64,
    pub basis_bias_px: f64,
    pub f_ec: f64,
    pub bound: RateBound,
    /// Decoy schedule, signal first; empty means one intensity at `signal.mu`.
    pub intensities: Vec<Intensity>,
}

/// Kept signal and noise clicks per pulse for one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatedGain {
    pub signal: f64,
    pub noise: f64,
}

impl GatedGain {
    pub fn total(&self) -> f64 {
        self.signal + self.noise
    }
}

impl LinkModel {
    pub fn sifting_factor(&self) -> f64 {
        let px = self.basis_bias_px;
        px * px + (1.0 - px) * (1.0 - px)
    }

    pub fn signal_error(&self) -> f64 {
        qbermodel::flip(qbermodel::flip(self.e_sp, self.e_pbs), self.e_a)
    }

    fn effective_gate_ns(&self) -> f64 {
        self.signal.gate_width_ns.min(1e9 / self.signal.rep_rate_hz)
    }

    /// Mean noise clicks per gate over all detectors.
    fn noise_mean(&self) -> f64 {
        self.signal.noise_rate_hz * self.effective_gate_ns() * 1e-9
    }

    fn capture(&self) -> f64 {
        qbermodel::gate_capture_fraction(
            self.signal.pulse_fwhm_ns,
            self.effective_gate_ns(),
            self.signal.timing_jitter_ns,
        )
    }

    /// Gated gain for a click probability `p_click` before gating.
    fn gated(&self, p_click: f64) -> GatedGain {
        let lambda = self.noise_mean();
        let p = p_click * self.capture();
        // Each detector sees Poisson(λ/4) noise; a slot survives when at most
        // one detector fires.
        let others_silent = (-0.75 * lambda).exp();
        let one_noise = 4.0 * (-(-0.25 * lambda).exp_m1()) * others_silent;
        GatedGain { signal: p * others_silent, noise: (1.0 - p) * one_noise }
    }

    pub fn gated_gain(&self, mu: f64) -> GatedGain {
        self.gated(-(-mu * self.signal.transmittance()).exp_m1())
    }

    pub fn qber_of(&self, g: GatedGain) -> f64 {
        let total = g.total();
        if total <= 0.0 {
            return 0.0;
        }
        (g.signal * self.signal_error() + E0 * g.noise) / total
    }

    pub fn observation(&self, mu: f64) -> GainObservation {
        let g = self.gated_gain(mu);
        GainObservation { mu, gain: g.total(), qber: self.qber_of(g) }
    }

    pub fn single_photon(&self) -> SinglePhoton {
        let g = self.gated(self.signal.transmittance());
        SinglePhoton { y1: g.total(), e1: self.qber_of(g) }
    }

    /// Schedule with the signal intensity first.
    pub fn schedule(&self) -> Vec<Intensity> {
        if self.intensities.is_empty() {
            vec![Intensity { mu: self.signal.mu, p: 1.0 }]
        } else {
            self.intensities.clone()
        }
    }

    /// Key-generating intensity and the fraction of pulses sent at it.
    pub fn signal_intensity(&self) -> Intensity {
        self.schedule()[0]
    }

    /// Secure bits per pulse for an observed signal gain and error. The
    /// decoy bound uses `classes` (signal, weak, vacuum) when given.
    pub fn secure_rate(&self, signal: GainObservation, classes: Option<&[GainObservation]>) -> Result<f64> {
        let q = self.sifting_factor();
        let p_signal = self.signal_intensity().p;
        let rate = match self.bound {
            RateBound::GllpStrict => gllp_rate_single(q, signal.gain, signal.qber, signal.mu, self.f_ec),
            RateBound::InfiniteDecoy => {
                infinite_decoy_rate(q, signal.gain, signal.qber, signal.mu, self.single_photon(), self.f_ec)
            }
            RateBound::VacuumWeakDecoy => {
                let owned;
                let obs = match classes {
                    Some(c) => c,
                    None => {
                        owned = self.schedule().iter().map(|i| self.observation(i.mu)).collect::<Vec<_>>();
                        &owned
                    }
                };
                let [_, weak, vacuum, ..] = obs else {
                    return Err(Error::invalid("vacuum + weak decoy bound needs three intensities"));
                };
                match decoy_bounds(signal, *weak, vacuum.gain) {
                    Ok(est) => decoy_rate(q, signal, &est, self.f_ec),
                    Err(_) => 0.0,
                }
            }
        };
        Ok(rate * p_signal)
    }

    pub fn analytic(&self) -> Result<AnalyticPoint> {
        self.signal.validate()?;
        let mu = self.signal_intensity().mu;
        let g = self.gated_gain(mu);
        let obs = GainObservation { mu, gain: g.total(), qber: self.qber_of(g) };
        let secure = self.secure_rate(obs, None)?;
        let q = self.sifting_factor();
        let p_signal = self.signal_intensity().p;
        let strict = gllp_rate_single(q, obs.gain, obs.qber, mu, self.f_ec) * p_signal;
        let s = SignalModel { mu, ..self.signal };
        Ok(AnalyticPoint {
            signal_per_gate: s.signal_per_gate(),
            noise_per_gate: s.noise_per_gate(),
            esnr: qbermodel::esnr(&s),
            gated: g,
            qber: obs.qber,
            rate: KeyRateResult::new(obs.gain * p_signal, q, secure, self.signal.rep_rate_hz, 0),
            skr_gllp_strict: strict,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPoint {
    pub signal_per_gate: f64,
    pub noise_per_gate: f64,
    pub esnr: f64,
    pub gated: GatedGain,
    pub qber: f64,
    pub rate: KeyRateResult,
    pub skr_gllp_strict: f64,
}

/// Propagates binomial errors on a measured gain (`n` pulses) and QBER
/// (`m` sifted bits) through `rate` by central differences.
pub fn rate_stderr(rate: impl Fn(f64, f64) -> f64, gain: f64, qber: f64, n: f64, m: f64) -> f64 {
    let sg = if n > 0.0 { (gain * (1.0 - gain) / n).sqrt() } else { 0.0 };
    let se = if m > 0.0 { (qber * (1.0 - qber) / m).sqrt() } else { 0.0 };
    let dg = if sg > 0.0 { (rate(gain + sg, qber) - rate((gain - sg).max(0.0), qber)) / 2.0 } else { 0.0 };
    let de = if se > 0.0 { (rate(gain, (qber + se).min(0.5)) - rate(gain, (qber - se).max(0.0))) / 2.0 } else { 0.0 };
    (dg * dg + de * de).sqrt()
}
