//! Named experiment configurations, one per reproduced figure or table.

use super::config::{ExperimentConfig, RunKind, SweepSpec};
use crate::{Error, Result};

pub const PRESETS: [&str; 7] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "table3"];

/// `start, start + step, ...` up to and including `end`, rounded to remove
/// accumulated float noise.
fn linspace_step(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6).collect()
}

/// `per_decade` log-spaced values from `lo` to `hi` inclusive.
fn logspace(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n)
        .map(|i| {
            let v = lo * 10f64.powf(i as f64 / per_decade as f64);
            let scale = 10f64.powi(v.log10().floor() as i32 - 5);
            (v / scale).round() * scale
        })
        .collect()
}

fn fig2_losses() -> Vec<f64> {
    let mut v = linspace_step(6.3, 37.3, 1.0);
    v.push(37.7);
    v
}

fn base(name: &str, kind: RunKind) -> ExperimentConfig {
    ExperimentConfig { scenario: name.to_string(), kind, ..ExperimentConfig::default() }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "fig2" => ExperimentConfig {
            sweeps: vec![SweepSpec {
                name: "loss".into(),
                axis: "channel.loss_db".into(),
                values: fig2_losses(),
                series: None,
                series_values: vec![],
            }],
            ..base(name, RunKind::Sweep)
        },
        "fig3" => ExperimentConfig {
            sweeps: vec![SweepSpec {
                name: "noise".into(),
                axis: "receiver.background_rate_hz".into(),
                values: logspace(1e2, 1e7, 8),
                series: Some("channel.loss_db".into()),
                series_values: vec![10.0, 16.0, 25.0],
            }],
            ..base(name, RunKind::Sweep)
        },
        "fig4" => {
            let mut cfg = ExperimentConfig {
                sweeps: vec![SweepSpec {
                    name: "gate".into(),
                    axis: "receiver.gate_width_ns".into(),
                    values: linspace_step(0.1, 7.0, 0.1),
                    series: Some("channel.loss_db".into()),
                    series_values: vec![10.0, 20.0, 30.0, 37.0],
                }],
                ..base(name, RunKind::Sweep)
            };
            cfg.receiver.background_rate_hz = 4e5;
            cfg
        }
        "fig5" => {
            let mut cfg = ExperimentConfig {
                sweeps: vec![
                    SweepSpec {
                        name: "mu".into(),
                        axis: "signal.mu".into(),
                        values: vec![0.1, 0.3, 0.5, 0.8, 1.0],
                        series: None,
                        series_values: vec![],
                    },
                    SweepSpec {
                        name: "noise".into(),
                        axis: "receiver.background_rate_hz".into(),
                        values: logspace(1e3, 1e6, 4),
                        series: Some("channel.loss_db".into()),
                        series_values: vec![10.0, 16.0, 25.0],
                    },
                ],
                ..base(name, RunKind::Sweep)
            };
            cfg.channel.loss_db = 16.0;
            cfg.receiver.background_rate_hz = 1e5;
            cfg
        }
        "fig6" => ExperimentConfig {
            sweeps: vec![SweepSpec {
                name: "loss".into(),
                axis: "channel.loss_db".into(),
                values: fig2_losses(),
                series: None,
                series_values: vec![],
            }],
            ..base(name, RunKind::Projection)
        },
        "fig7" => base(name, RunKind::Pass),
        "table3" => base(name, RunKind::Table),
        other => {
            return Err(Error::Config(format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", "))))
        }
    };
    Ok(cfg)
}
