//! Experiment orchestration: configuration, presets, sweeps and the files
//! each run leaves behind.
//!
//! A run writes `<scenario>.csv`, `<scenario>_summary.json` and
//! `<scenario>.gp` into the output directory, plus `events.csv`, `tx.csv`
//! and `beacon.csv` for the reference point when event dumps are enabled.
//! Nothing time- or host-dependent is written, so identical seeds give
//! identical bytes.

mod config;
mod emit;
mod presets;
mod sweep;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    validate_config, ChannelConfig, DistillConfig, ExperimentConfig, MissionSettings, OutputSettings, PassSettings,
    ProjectionSettings, ReceiverConfig, RunKind, SignalConfig, SimSettings, SweepSpec, SyncSettings,
};
pub use emit::{gain_table, pass_csv, pass_rows, sweep_csv, GainTable, PassRow, TableRow, SWEEP_COLUMNS};
pub use presets::{preset, PRESETS};
pub use sweep::{
    evaluate_point, monte_carlo, point_seed, projection_summary, reference_point, run_sweep, skr_curve, trace_point,
    McPoint, ProjectionSummary, SweepPoint, Trace,
};

use crate::hdbcsync::{self, DeBruijnIndex};
use crate::par::Exec;
use crate::photonsim;
use crate::Result;

#[derive(Debug, Clone)]
pub enum RunData {
    Sweep(Vec<SweepPoint>),
    Projection { points: Vec<SweepPoint>, summary: ProjectionSummary },
    Pass(Vec<PassRow>),
    Table(GainTable),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    /// The base configuration evaluated on its own.
    pub reference: SweepPoint,
    pub data: RunData,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    sifted_count: u64,
    qber: f64,
    esnr: f64,
    skr_per_pulse: f64,
    skr_bps: f64,
    nskr: f64,
    leakage_bits: u64,
    /// Which pipeline the headline numbers come from.
    source: &'static str,
    points: usize,
    failed_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    projection: Option<&'a ProjectionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<&'a GainTable>,
}

impl RunOutput {
    pub fn points(&self) -> &[SweepPoint] {
        match &self.data {
            RunData::Sweep(p) | RunData::Projection { points: p, .. } => p,
            _ => &[],
        }
    }

    pub fn csv(&self) -> String {
        match &self.data {
            RunData::Sweep(p) => sweep_csv(p, self.config.sim.n_pulses, None),
            RunData::Projection { points, summary } => {
                sweep_csv(points, self.config.sim.n_pulses, Some((summary.shift_right_db, summary.shift_up_db)))
            }
            RunData::Pass(rows) => pass_csv(rows),
            RunData::Table(t) => emit::table_csv(t),
        }
    }

    pub fn summary_json(&self) -> Result<String> {
        let r = &self.reference;
        let n = self.config.sim.n_pulses as f64;
        let (source, sifted, qber, esnr, rate) = match (&r.mc, &r.analytic) {
            (Some(m), _) => ("monte_carlo", m.sifted_count, m.qber, m.esnr, m.rate),
            (None, Some(a)) => ("analytic", (a.rate.sifted_rate_per_pulse * n).round() as u64, a.qber, a.esnr, a.rate),
            (None, None) => ("none", 0, f64::NAN, f64::NAN, Default::default()),
        };
        let points = self.points();
        let summary = Summary {
            config: &self.config,
            sifted_count: sifted,
            qber,
            esnr,
            skr_per_pulse: rate.secure_rate_per_pulse,
            skr_bps: rate.skr_bps,
            nskr: rate.nskr,
            leakage_bits: rate.leakage_bits,
            source,
            points: points.len(),
            failed_points: points.iter().filter(|p| p.error.is_some()).count(),
            projection: match &self.data {
                RunData::Projection { summary, .. } => Some(summary),
                _ => None,
            },
            table: match &self.data {
                RunData::Table(t) => Some(t),
                _ => None,
            },
        };
        emit::to_json(&summary)
    }

    pub fn gnuplot(&self) -> String {
        emit::gnuplot_script(&self.config, self.points())
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, exec: Exec) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let name = &self.config.scenario;
        let mut written = Vec::new();
        for (file, contents) in [
            (format!("{name}.csv"), self.csv()),
            (format!("{name}_summary.json"), self.summary_json()?),
            (format!("{name}.gp"), self.gnuplot()),
        ] {
            let path = dir.join(file);
            emit::write_file(&path, &contents)?;
            written.push(path);
        }
        if self.config.output.dump_events {
            let cfg = &self.config;
            let trace = trace_point(cfg, point_seed(cfg.seed, usize::MAX, 0, 0), None, exec)?;
            let events = dir.join("events.csv");
            photonsim::write_events(&events, &trace.detections)?;
            let tx = dir.join("tx.csv");
            photonsim::write_tx(&tx, &trace.sim.tx)?;
            let beacon = dir.join("beacon.csv");
            photonsim::write_events(&beacon, &hdbcsync::beacon_records(&trace.beacon_rx_ps))?;
            written.extend([events, tx, beacon]);
        }
        Ok(written)
    }
}

/// Validates and runs `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<RunOutput> {
    validate_config(cfg)?;
    let index = if cfg.sim.monte_carlo && cfg.sync.enabled { Some(DeBruijnIndex::for_config(&cfg.hdbc)?) } else { None };
    let reference = reference_point(cfg, index.as_ref(), exec);
    let data = match cfg.kind {
        RunKind::Sweep => RunData::Sweep(run_sweep(cfg, exec)?),
        RunKind::Projection => {
            let points = run_sweep(cfg, exec)?;
            let summary = projection_summary(cfg, &points);
            RunData::Projection { points, summary }
        }
        RunKind::Pass => RunData::Pass(pass_rows(cfg)?),
        RunKind::Table => RunData::Table(gain_table(cfg)?),
    };
    Ok(RunOutput { config: cfg.clone(), reference, data })
}
