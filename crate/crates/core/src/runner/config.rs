use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distill::{LinkModel, RateBound, DEFAULT_F_EC};
use crate::hdbcsync::HdbcConfig;
use crate::orbitlink::{LinkConfig, OrbitConfig};
use crate::photonsim::{Intensity, SimConfig};
use crate::qbermodel::{self, SignalModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// Parameter sweeps emitted as one CSV.
    #[default]
    Sweep,
    /// Loss sweep plus its shifted mission overlay.
    Projection,
    /// Satellite pass geometry and loss.
    Pass,
    /// Mission parameter gains.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub mu: f64,
    pub pulse_fwhm_ns: f64,
    pub rep_rate_hz: f64,
    /// One-sigma synchronisation jitter, added to the pulse in quadrature.
    pub timing_jitter_ns: f64,
    pub basis_bias_px: f64,
    pub e_sp: f64,
    /// Decoy schedule with the signal intensity first; empty for a single
    /// intensity at `mu`.
    pub intensities: Vec<Intensity>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            pulse_fwhm_ns: 0.9,
            rep_rate_hz: 25e6,
            timing_jitter_ns: 0.015,
            basis_bias_px: 0.5,
            // The quoted 1.5% intrinsic QBER is not split between source
            // and analyser; it is carried entirely by the source term.
            e_sp: 0.015,
            intensities: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub background_rate_hz: f64,
    pub dark_count_rate_hz: f64,
    pub gate_width_ns: f64,
    pub e_pbs: f64,
    pub dead_time_ns: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self { background_rate_hz: 2700.0, dark_count_rate_hz: 2300.0, gate_width_ns: 1.0, e_pbs: 0.0, dead_time_ns: 0.0 }
    }
}

impl ReceiverConfig {
    pub fn noise_rate_hz(&self) -> f64 {
        self.background_rate_hz + self.dark_count_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Variable attenuation between transmitter and receiver.
    pub loss_db: f64,
    /// Fixed transmitter plus receiver optics loss.
    pub system_loss_db: f64,
    pub detector_loss_db: f64,
    pub e_a: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { loss_db: 6.3, system_loss_db: 7.4, detector_loss_db: 0.0, e_a: 0.0 }
    }
}

impl ChannelConfig {
    pub fn total_loss_db(&self) -> f64 {
        self.loss_db + self.system_loss_db + self.detector_loss_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub monte_carlo: bool,
    pub n_pulses: u64,
    pub block_pulses: u64,
    /// Run cascade on the sifted key of each point.
    pub reconcile: bool,
    /// Largest sifted block handed to cascade.
    pub reconcile_max_bits: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { monte_carlo: true, n_pulses: 10_000_000, block_pulses: 1 << 16, reconcile: true, reconcile_max_bits: 1 << 17 }
    }
}

/// Clock distortion applied to the receiver and recovered from the beacon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSettings {
    pub enabled: bool,
    pub drift: f64,
    pub offset_ps: f64,
    pub beacon_jitter_ps: f64,
    pub beacon_erasure: f64,
}

impl Default for SyncSettings {
    fn default() -> Self {
        Self { enabled: true, drift: 3.3e-5, offset_ps: 1e6, beacon_jitter_ps: 50.0, beacon_erasure: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub f_ec: f64,
    pub bound: RateBound,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { f_ec: DEFAULT_F_EC, bound: RateBound::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    /// Dotted parameter path varied along the sweep.
    pub axis: String,
    pub values: Vec<f64>,
    /// Optional second parameter, one curve per value.
    #[serde(default)]
    pub series: Option<String>,
    #[serde(default)]
    pub series_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassSettings {
    pub timestep_s: f64,
}

impl Default for PassSettings {
    fn default() -> Self {
        Self { timestep_s: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSettings {
    pub shift_right_db: f64,
    pub shift_up_db: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self { shift_right_db: 9.3, shift_up_db: 12.0 }
    }
}

/// Laboratory and mission values compared in the gain table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionSettings {
    pub rep_rate_hz: f64,
    pub intrinsic_qber: f64,
    pub dark_count_rate_hz: f64,
    pub system_loss_db: f64,
    pub detector_loss_db: f64,
    pub mu: f64,
}

impl Default for MissionSettings {
    fn default() -> Self {
        Self {
            rep_rate_hz: 400e6,
            intrinsic_qber: 0.005,
            dark_count_rate_hz: 2300.0,
            system_loss_db: 3.8,
            detector_loss_db: 2.2,
            mu: 0.3744,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    /// Write event, transmitter and beacon dumps of the summary point.
    pub dump_events: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub kind: RunKind,
    pub seed: u64,
    pub signal: SignalConfig,
    pub receiver: ReceiverConfig,
    pub channel: ChannelConfig,
    pub sim: SimSettings,
    pub sync: SyncSettings,
    pub distill: DistillConfig,
    pub hdbc: HdbcConfig,
    pub orbit: OrbitConfig,
    pub link: LinkConfig,
    pub pass: PassSettings,
    pub projection: ProjectionSettings,
    pub mission: MissionSettings,
    pub output: OutputSettings,
    pub sweeps: Vec<SweepSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "custom".into(),
            kind: RunKind::default(),
            seed: 1,
            signal: SignalConfig::default(),
            receiver: ReceiverConfig::default(),
            channel: ChannelConfig::default(),
            sim: SimSettings::default(),
            sync: SyncSettings::default(),
            distill: DistillConfig::default(),
            hdbc: HdbcConfig::default(),
            orbit: OrbitConfig::default(),
            link: LinkConfig::default(),
            pass: PassSettings::default(),
            projection: ProjectionSettings::default(),
            mission: MissionSettings::default(),
            output: OutputSettings::default(),
            sweeps: Vec::new(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn to_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(config_err)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        value.try_into().map_err(config_err)
    }

    /// Parses a config file. A top-level `preset = "<name>"` key starts from
    /// that preset and overlays the remaining keys.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(config_err)?;
        let base = match value.as_table_mut().and_then(|t| t.remove("preset")) {
            Some(toml::Value::String(name)) => super::presets::preset(&name)?.to_value()?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => Self::default().to_value()?,
        };
        let mut merged = base;
        merge(&mut merged, value);
        Self::from_value(merged)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `path=value` overrides. Values are parsed as TOML, falling
    /// back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = self.to_value()?;
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form path=value")))?;
            set_path(&mut value, path.trim(), parse_scalar(raw.trim()))?;
        }
        Self::from_value(value)
    }

    /// Copy with one numeric parameter replaced.
    pub fn with_number(&self, path: &str, x: f64) -> Result<Self> {
        let mut value = self.to_value()?;
        let v = match lookup(&value, path) {
            Some(toml::Value::Integer(_)) if x.fract() == 0.0 => toml::Value::Integer(x as i64),
            _ => toml::Value::Float(x),
        };
        set_path(&mut value, path, v)?;
        Self::from_value(value)
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel {
            mu: self.signal.mu,
            pulse_fwhm_ns: self.signal.pulse_fwhm_ns,
            rep_rate_hz: self.signal.rep_rate_hz,
            noise_rate_hz: self.receiver.noise_rate_hz(),
            total_loss_db: self.channel.total_loss_db(),
            gate_width_ns: self.receiver.gate_width_ns,
            timing_jitter_ns: self.signal.timing_jitter_ns,
        }
    }

    pub fn link_model(&self) -> LinkModel {
        let intensities = self.signal.intensities.clone();
        let mut signal = self.signal_model();
        if let Some(first) = intensities.first() {
            signal.mu = first.mu;
        }
        LinkModel {
            signal,
            e_sp: self.signal.e_sp,
            e_pbs: self.receiver.e_pbs,
            e_a: self.channel.e_a,
            basis_bias_px: self.signal.basis_bias_px,
            f_ec: self.distill.f_ec,
            bound: self.distill.bound,
            intensities,
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let model = self.link_model();
        SimConfig {
            n_pulses: self.sim.n_pulses,
            signal: model.signal,
            background_rate_hz: self.receiver.background_rate_hz,
            dark_count_rate_hz: self.receiver.dark_count_rate_hz,
            e_sp: self.signal.e_sp,
            e_pbs: self.receiver.e_pbs,
            e_a: self.channel.e_a,
            basis_bias_px: self.signal.basis_bias_px,
            intensities: model.intensities,
            dead_time_ns: self.receiver.dead_time_ns,
            block_pulses: self.sim.block_pulses,
            seed,
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn lookup<'a>(value: &'a toml::Value, path: &str) -> Option<&'a toml::Value> {
    path.split('.').try_fold(value, |v, key| v.as_table()?.get(key))
}

fn set_path(root: &mut toml::Value, path: &str, new: toml::Value) -> Result<()> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let leaf = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config("empty parameter path".into()))?;
    let mut cur = root;
    for key in keys {
        cur = cur
            .as_table_mut()
            .and_then(|t| t.get_mut(key))
            .filter(|v| v.is_table())
            .ok_or_else(|| Error::Config(format!("unknown parameter path `{path}`")))?;
    }
    let table = cur.as_table_mut().ok_or_else(|| Error::Config(format!("unknown parameter path `{path}`")))?;
    // Integers given for float fields are widened so serde accepts them.
    let new = match (table.get(leaf), new) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(leaf.to_string(), new);
    Ok(())
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    Some(toml::Value::Float(_)) if v.is_integer() => {
                        b.insert(k, toml::Value::Float(v.as_integer().unwrap_or_default() as f64));
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn check(diags: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        diags.push(msg());
    }
}

/// Collects every invariant violation in `cfg` before anything is run.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    let mut d = Vec::new();
    let s = &cfg.signal;
    let r = &cfg.receiver;
    check(&mut d, s.mu > 0.0 && s.mu <= 2.0, || format!("signal.mu = {} outside (0, 2]", s.mu));
    check(&mut d, s.pulse_fwhm_ns > 0.0, || "signal.pulse_fwhm_ns must be > 0".into());
    check(&mut d, s.rep_rate_hz > 0.0, || "signal.rep_rate_hz must be > 0".into());
    check(&mut d, s.timing_jitter_ns >= 0.0, || "signal.timing_jitter_ns must be >= 0".into());
    check(&mut d, (0.0..=1.0).contains(&s.basis_bias_px), || "signal.basis_bias_px outside [0, 1]".into());
    if !s.intensities.is_empty() {
        let total: f64 = s.intensities.iter().map(|i| i.p).sum();
        check(&mut d, (total - 1.0).abs() <= 1e-9, || format!("intensity probabilities sum to {total}, not 1"));
        check(&mut d, s.intensities.iter().all(|i| i.p >= 0.0 && i.mu >= 0.0), || {
            "intensity mu and p must be >= 0".into()
        });
        let first = s.intensities[0].mu;
        check(&mut d, first > 0.0 && first <= 2.0, || format!("signal intensity {first} outside (0, 2]"));
    }
    if cfg.distill.bound == RateBound::VacuumWeakDecoy {
        let ok = matches!(&s.intensities[..], [a, b, c] if a.mu > b.mu && b.mu > 0.0 && c.mu == 0.0);
        check(&mut d, ok, || "vacuum_weak_decoy needs intensities [signal, weak, vacuum] with mu1 > mu2 > 0 = mu3".into());
    }
    check(&mut d, r.gate_width_ns > 0.0, || "receiver.gate_width_ns must be > 0".into());
    if let Err(e) = qbermodel::duty_cycle(r.gate_width_ns, s.rep_rate_hz) {
        d.push(format!("receiver.gate_width_ns at signal.rep_rate_hz: {e}"));
    }
    check(&mut d, r.background_rate_hz >= 0.0, || "receiver.background_rate_hz must be >= 0".into());
    check(&mut d, r.dark_count_rate_hz >= 0.0, || "receiver.dark_count_rate_hz must be >= 0".into());
    check(&mut d, r.dead_time_ns >= 0.0, || "receiver.dead_time_ns must be >= 0".into());
    for (name, e) in [("signal.e_sp", s.e_sp), ("receiver.e_pbs", r.e_pbs), ("channel.e_a", cfg.channel.e_a)] {
        check(&mut d, (0.0..=0.5).contains(&e), || format!("{name} = {e} outside [0, 0.5]"));
    }
    let c = &cfg.channel;
    for (name, v) in [
        ("channel.loss_db", c.loss_db),
        ("channel.system_loss_db", c.system_loss_db),
        ("channel.detector_loss_db", c.detector_loss_db),
    ] {
        check(&mut d, v >= 0.0 && v.is_finite(), || format!("{name} = {v} must be finite and >= 0"));
    }
    check(&mut d, cfg.sim.n_pulses >= 1, || "sim.n_pulses must be >= 1".into());
    check(&mut d, cfg.sim.block_pulses >= 1, || "sim.block_pulses must be >= 1".into());
    check(&mut d, cfg.sync.drift.abs() <= 1e-4, || format!("sync.drift = {} exceeds 100 ppm", cfg.sync.drift));
    check(&mut d, (0.0..1.0).contains(&cfg.sync.beacon_erasure), || "sync.beacon_erasure outside [0, 1)".into());
    check(&mut d, cfg.sync.beacon_jitter_ps >= 0.0, || "sync.beacon_jitter_ps must be >= 0".into());
    check(&mut d, cfg.distill.f_ec >= 1.0, || format!("distill.f_ec = {} must be >= 1", cfg.distill.f_ec));
    check(&mut d, cfg.pass.timestep_s > 0.0, || "pass.timestep_s must be > 0".into());
    if let Err(e) = cfg.orbit.validate() {
        d.push(format!("orbit: {e}"));
    }
    for (name, ch) in [("quantum", &cfg.link.quantum), ("beacon", &cfg.link.beacon)] {
        if let Err(e) = ch.beam.divergence_rad() {
            d.push(format!("link.{name}.beam: {e}"));
        }
    }
    check(&mut d, cfg.link.rx_diameter_m > 0.0, || "link.rx_diameter_m must be > 0".into());
    if let Err(e) = cfg.hdbc.validate() {
        d.push(format!("hdbc: {e}"));
    }
    if matches!(cfg.kind, RunKind::Sweep | RunKind::Projection) && cfg.sweeps.is_empty() {
        d.push(format!("{:?} run needs at least one sweep", cfg.kind));
    }
    for sw in &cfg.sweeps {
        check(&mut d, !sw.values.is_empty(), || format!("sweep `{}` has no values", sw.name));
        let mut paths = vec![(&sw.axis, sw.values.first())];
        if let Some(series) = &sw.series {
            check(&mut d, !sw.series_values.is_empty(), || format!("sweep `{}` has a series but no series values", sw.name));
            paths.push((series, sw.series_values.first()));
        }
        for (path, first) in paths {
            let exists = cfg.to_value().ok().is_some_and(|v| lookup(&v, path).is_some_and(|x| x.is_float() || x.is_integer()));
            if !exists {
                d.push(format!("sweep `{}`: `{path}` is not a numeric parameter", sw.name));
            } else if let Some(&x) = first {
                if let Err(e) = cfg.with_number(path, x) {
                    d.push(format!("sweep `{}`: {e}", sw.name));
                }
            }
        }
    }
    if d.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation { count: d.len(), diagnostics: d })
    }
}
