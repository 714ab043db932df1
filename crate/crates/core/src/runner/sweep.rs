use serde::Serialize;

use super::config::ExperimentConfig;
use crate::distill::{
    self, cascade_reconcile, class_statistics, gate_and_match, rate_stderr, sift, AnalyticPoint, GainObservation,
    KeyRateResult,
};
use crate::hdbcsync::{self, ClockModel, DeBruijnIndex};
use crate::par::{self, Exec};
use crate::photonsim::{self, DetectionRecord, SimOutput};
use crate::Result;

const BEACON_TAG: u64 = 0xB3AC_0000_0000_0001;
const CASCADE_TAG: u64 = 0xCA5C_0000_0000_0002;

/// SplitMix64 finaliser, used to derive independent per-point seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn point_seed(seed: u64, sweep: usize, series: usize, point: usize) -> u64 {
    [sweep as u64, series as u64, point as u64].iter().fold(mix(seed), |acc, &x| mix(acc ^ x))
}

/// Measured quantities of one Monte Carlo point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPoint {
    pub n_pulses: u64,
    pub sifted_count: u64,
    pub signal_clicks: u64,
    pub noise_clicks: u64,
    pub gain: f64,
    pub esnr: f64,
    pub qber: f64,
    pub qber_stderr: f64,
    pub rate: KeyRateResult,
    pub skr_stderr: f64,
    pub cascade_failed: bool,
    pub clock_residual_ps: f64,
}

/// One evaluated configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sweep: String,
    pub series: Option<f64>,
    pub axis: String,
    pub value: f64,
    pub channel_loss_db: f64,
    pub total_loss_db: f64,
    pub gate_width_ns: f64,
    pub mu: f64,
    pub noise_rate_hz: f64,
    pub analytic: Option<AnalyticPoint>,
    pub mc: Option<McPoint>,
    pub error: Option<String>,
}

/// Everything the Monte Carlo pipeline produced for one point, kept for
/// event dumps.
pub struct Trace {
    pub sim: SimOutput,
    /// Detections on the receiver clock.
    pub detections: Vec<DetectionRecord>,
    pub beacon_rx_ps: Vec<f64>,
    pub clock: ClockModel,
}

/// Simulates the quantum and beacon channels and recovers the clock.
pub fn trace_point(cfg: &ExperimentConfig, seed: u64, index: Option<&DeBruijnIndex>, exec: Exec) -> Result<Trace> {
    let sim_cfg = cfg.sim_config(seed);
    let sim = photonsim::simulate(&sim_cfg, exec)?;
    if !cfg.sync.enabled {
        let detections = sim.detections.clone();
        return Ok(Trace { sim, detections, beacon_rx_ps: Vec::new(), clock: ClockModel::IDENTITY });
    }
    let owned;
    let index = match index {
        Some(i) => i,
        None => {
            owned = DeBruijnIndex::for_config(&cfg.hdbc)?;
            &owned
        }
    };
    let s = &cfg.sync;
    let truth = ClockModel { offset_ps: s.offset_ps, drift: s.drift, residual_rms_ps: 0.0 };
    let span_ps = sim_cfg.n_pulses as f64 * sim_cfg.period_ps();
    let min_periods = 8 * cfg.hdbc.order_k as usize;
    let n_periods = ((span_ps / cfg.hdbc.period_ps()).ceil() as usize + 1).max(min_periods);
    let link =
        hdbcsync::simulate_beacon(n_periods, &cfg.hdbc, index, &truth, s.beacon_jitter_ps, s.beacon_erasure, seed ^ BEACON_TAG)?;
    let lock = hdbcsync::lock_beacon(&link.rx_ps, &cfg.hdbc, index)?;
    let detections = photonsim::apply_clock_distortion(&sim.detections, s.drift, s.offset_ps, 0.0, seed)?;
    Ok(Trace { sim, detections, beacon_rx_ps: link.rx_ps, clock: lock.clock })
}

/// Gates, sifts and distils a simulated point.
pub fn monte_carlo(cfg: &ExperimentConfig, seed: u64, index: Option<&DeBruijnIndex>, exec: Exec) -> Result<McPoint> {
    let trace = trace_point(cfg, seed, index, exec)?;
    let model = cfg.link_model();
    let signal = model.signal;
    let pairs = gate_and_match(&trace.detections, &trace.sim.tx, &trace.clock, signal.gate_width_ns, signal.rep_rate_hz)?;
    let stats = class_statistics(&pairs, &trace.sim.tx);
    let block = sift(&pairs, Some(0))?;
    let schedule = model.schedule();
    let observations: Vec<GainObservation> = schedule
        .iter()
        .zip(stats.iter().chain(std::iter::repeat(&Default::default())))
        .map(|(i, s)| GainObservation { mu: i.mu, gain: s.gain(), qber: s.error_rate().min(0.5) })
        .collect();
    let obs = observations[0];
    let classes = (schedule.len() > 1).then_some(&observations[..]);
    let secure = model.secure_rate(obs, classes)?;

    let mut leakage = 0;
    let mut cascade_failed = false;
    if cfg.sim.reconcile && block.sifted_count > 0 {
        let n = block.sifted_count.min(cfg.sim.reconcile_max_bits);
        let estimate = block.measured_qber.clamp(1e-3, 0.5);
        let out = cascade_reconcile(&block.alice_bits[..n], &block.bob_bits[..n], estimate, seed ^ CASCADE_TAG)?;
        leakage = out.leakage_bits;
        cascade_failed = out.failed;
    }

    let p_signal = schedule[0].p;
    let rate = KeyRateResult::new(obs.gain * p_signal, model.sifting_factor(), secure, signal.rep_rate_hz, leakage);
    let m = block.sifted_count as f64;
    let n_signal = stats.first().map_or(0, |s| s.pulses) as f64;
    let skr_stderr = rate_stderr(
        |gain, qber| model.secure_rate(GainObservation { mu: obs.mu, gain, qber }, classes).unwrap_or(0.0),
        obs.gain,
        obs.qber,
        n_signal,
        m,
    );
    Ok(McPoint {
        n_pulses: cfg.sim.n_pulses,
        sifted_count: block.sifted_count as u64,
        signal_clicks: block.gated_signal_clicks as u64,
        noise_clicks: block.gated_noise_clicks as u64,
        gain: obs.gain,
        esnr: block.measured_esnr(),
        qber: block.measured_qber,
        qber_stderr: (block.measured_qber * (1.0 - block.measured_qber) / m).sqrt(),
        rate,
        skr_stderr,
        cascade_failed,
        clock_residual_ps: trace.clock.residual_rms_ps,
    })
}

/// Analytic model and, when enabled, the Monte Carlo pipeline at `cfg`.
/// Failures are recorded in the returned point.
pub fn evaluate_point(
    cfg: &ExperimentConfig,
    seed: u64,
    index: Option<&DeBruijnIndex>,
    exec: Exec,
) -> (Option<AnalyticPoint>, Option<McPoint>, Option<String>) {
    let mut errors = Vec::new();
    let analytic = cfg.link_model().analytic().map_err(|e| errors.push(format!("analytic: {e}"))).ok();
    let mc = if cfg.sim.monte_carlo {
        monte_carlo(cfg, seed, index, exec).map_err(|e| errors.push(format!("monte carlo: {e}"))).ok()
    } else {
        None
    };
    (analytic, mc, (!errors.is_empty()).then(|| errors.join("; ")))
}

fn describe(cfg: &ExperimentConfig, sweep: &str, series: Option<f64>, axis: &str, value: f64) -> SweepPoint {
    let model = cfg.link_model();
    SweepPoint {
        sweep: sweep.to_string(),
        series,
        axis: axis.to_string(),
        value,
        channel_loss_db: cfg.channel.loss_db,
        total_loss_db: model.signal.total_loss_db,
        gate_width_ns: model.signal.gate_width_ns,
        mu: model.signal.mu,
        noise_rate_hz: model.signal.noise_rate_hz,
        analytic: None,
        mc: None,
        error: None,
    }
}

/// The base configuration as a single point.
pub fn reference_point(cfg: &ExperimentConfig, index: Option<&DeBruijnIndex>, exec: Exec) -> SweepPoint {
    let mut p = describe(cfg, "reference", None, "", f64::NAN);
    (p.analytic, p.mc, p.error) = evaluate_point(cfg, point_seed(cfg.seed, usize::MAX, 0, 0), index, exec);
    p
}

struct Job {
    sweep: usize,
    series: usize,
    point: usize,
    series_value: Option<f64>,
    value: f64,
}

/// Evaluates every sweep of `cfg`. Rows are ordered by sweep, series and
/// axis value and are identical for any execution back-end.
pub fn run_sweep(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<SweepPoint>> {
    super::validate_config(cfg)?;
    let index = if cfg.sim.monte_carlo && cfg.sync.enabled { Some(DeBruijnIndex::for_config(&cfg.hdbc)?) } else { None };
    let mut jobs = Vec::new();
    for (si, sw) in cfg.sweeps.iter().enumerate() {
        let series: Vec<Option<f64>> =
            if sw.series.is_some() { sw.series_values.iter().map(|&v| Some(v)).collect() } else { vec![None] };
        for (ki, sv) in series.into_iter().enumerate() {
            let mut values = sw.values.clone();
            values.sort_by(f64::total_cmp);
            for (pi, value) in values.into_iter().enumerate() {
                jobs.push(Job { sweep: si, series: ki, point: pi, series_value: sv, value });
            }
        }
    }
    Ok(par::map_indexed(exec, jobs.len(), |j| {
        let job = &jobs[j];
        let sw = &cfg.sweeps[job.sweep];
        let point_cfg = match (&sw.series, job.series_value) {
            (Some(path), Some(v)) => cfg.with_number(path, v),
            _ => Ok(cfg.clone()),
        }
        .and_then(|c| c.with_number(&sw.axis, job.value));
        match point_cfg {
            Ok(pc) => {
                let mut p = describe(&pc, &sw.name, job.series_value, &sw.axis, job.value);
                let seed = point_seed(cfg.seed, job.sweep, job.series, job.point);
                (p.analytic, p.mc, p.error) = evaluate_point(&pc, seed, index.as_ref(), exec);
                p
            }
            Err(e) => {
                let mut p = describe(cfg, &sw.name, job.series_value, &sw.axis, job.value);
                p.error = Some(e.to_string());
                p
            }
        }
    }))
}

/// Channel-loss curve `(loss, skr_bps)` from the analytic or simulated
/// columns of a sweep.
pub fn skr_curve(points: &[SweepPoint], simulated: bool) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter_map(|p| {
            let skr = if simulated { p.mc.map(|m| m.rate.skr_bps) } else { p.analytic.map(|a| a.rate.skr_bps) };
            Some((p.channel_loss_db, skr?))
        })
        .collect()
}

/// Cutoffs of the measured curve before and after the mission shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionSummary {
    pub shift_right_db: f64,
    pub shift_up_db: f64,
    pub analytic_cutoff_db: Option<f64>,
    pub measured_cutoff_db: Option<f64>,
    pub projected_analytic_cutoff_db: Option<f64>,
    pub projected_measured_cutoff_db: Option<f64>,
}

pub fn projection_summary(cfg: &ExperimentConfig, points: &[SweepPoint]) -> ProjectionSummary {
    let (r, u) = (cfg.projection.shift_right_db, cfg.projection.shift_up_db);
    let a = skr_curve(points, false);
    let m = skr_curve(points, true);
    ProjectionSummary {
        shift_right_db: r,
        shift_up_db: u,
        analytic_cutoff_db: distill::cutoff_loss(&a),
        measured_cutoff_db: distill::cutoff_loss(&m),
        projected_analytic_cutoff_db: distill::cutoff_loss(&distill::mission_projection(&a, r, u)),
        projected_measured_cutoff_db: distill::cutoff_loss(&distill::mission_projection(&m, r, u)),
    }
}
