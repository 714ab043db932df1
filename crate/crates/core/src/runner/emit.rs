use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::sweep::SweepPoint;
use crate::distill::{gain_db, mission_projection, GainKind};
use crate::orbitlink::{self, ChannelKind};
use crate::qbermodel;
use crate::{Error, Result};

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

pub const SWEEP_COLUMNS: [&str; 34] = [
    "sweep",
    "series",
    "axis",
    "value",
    "channel_loss_db",
    "total_loss_db",
    "gate_width_ns",
    "mu",
    "noise_rate_hz",
    "analytic_S",
    "analytic_N",
    "analytic_esnr",
    "analytic_sifted_count",
    "analytic_qber",
    "analytic_skr_per_pulse",
    "analytic_skr_bps",
    "analytic_nskr",
    "analytic_skr_gllp_strict",
    "n_pulses",
    "S",
    "N",
    "esnr",
    "sifted_count",
    "qber",
    "qber_stderr",
    "skr_per_pulse",
    "skr_stderr",
    "skr_bps",
    "nskr",
    "leakage_bits",
    "cascade_failed",
    "clock_residual_ps",
    "gain",
    "error",
];

fn sweep_fields(p: &SweepPoint, n_pulses: u64) -> Vec<String> {
    let n = n_pulses as f64;
    let mut f = vec![
        quote(&p.sweep),
        opt(p.series),
        quote(&p.axis),
        num(p.value),
        num(p.channel_loss_db),
        num(p.total_loss_db),
        num(p.gate_width_ns),
        num(p.mu),
        num(p.noise_rate_hz),
    ];
    match &p.analytic {
        Some(a) => f.extend([
            num(a.gated.signal * n),
            num(a.gated.noise * n),
            num(a.esnr),
            num(a.rate.sifted_rate_per_pulse * n),
            num(a.qber),
            num(a.rate.secure_rate_per_pulse),
            num(a.rate.skr_bps),
            num(a.rate.nskr),
            num(a.skr_gllp_strict),
        ]),
        None => f.extend(std::iter::repeat_n(String::new(), 9)),
    }
    match &p.mc {
        Some(m) => f.extend([
            m.n_pulses.to_string(),
            m.signal_clicks.to_string(),
            m.noise_clicks.to_string(),
            num(m.esnr),
            m.sifted_count.to_string(),
            num(m.qber),
            num(m.qber_stderr),
            num(m.rate.secure_rate_per_pulse),
            num(m.skr_stderr),
            num(m.rate.skr_bps),
            num(m.rate.nskr),
            m.rate.leakage_bits.to_string(),
            u8::from(m.cascade_failed).to_string(),
            num(m.clock_residual_ps),
            num(m.gain),
        ]),
        None => f.extend(std::iter::repeat_n(String::new(), 15)),
    }
    f.push(quote(p.error.as_deref().unwrap_or("")));
    f
}

/// Sweep rows as CSV, with mission-shifted columns when `projection` is set.
pub fn sweep_csv(points: &[SweepPoint], n_pulses: u64, projection: Option<(f64, f64)>) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    if projection.is_some() {
        out.push_str(",mission_loss_db,mission_analytic_skr_bps,mission_skr_bps");
    }
    out.push('\n');
    for p in points {
        let mut fields = sweep_fields(p, n_pulses);
        if let Some((right, up)) = projection {
            let shift = |skr: Option<f64>| skr.map(|s| num(mission_projection(&[(p.channel_loss_db, s)], right, up)[0].1));
            fields.push(num(p.channel_loss_db + right));
            fields.push(shift(p.analytic.map(|a| a.rate.skr_bps)).unwrap_or_default());
            fields.push(shift(p.mc.map(|m| m.rate.skr_bps)).unwrap_or_default());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassRow {
    pub t_s: f64,
    pub elevation_deg: f64,
    pub slant_range_km: f64,
    pub radial_velocity_km_s: f64,
    pub quantum_loss_db: f64,
    pub beacon_loss_db: f64,
}

pub fn pass_rows(cfg: &ExperimentConfig) -> Result<Vec<PassRow>> {
    orbitlink::pass_profile(&cfg.orbit, cfg.pass.timestep_s)?
        .iter()
        .map(|s| {
            Ok(PassRow {
                t_s: s.t,
                elevation_deg: s.elevation_deg,
                slant_range_km: s.slant_range_km,
                radial_velocity_km_s: s.radial_velocity_km_s,
                quantum_loss_db: orbitlink::total_loss_db(&cfg.link.budget(ChannelKind::Quantum, s)?),
                beacon_loss_db: orbitlink::total_loss_db(&cfg.link.budget(ChannelKind::Beacon, s)?),
            })
        })
        .collect()
}

pub fn pass_csv(rows: &[PassRow]) -> String {
    let mut out = String::from("t_s,elevation_deg,slant_range_km,radial_velocity_km_s,quantum_loss_db,beacon_loss_db\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t_s, r.elevation_deg, r.slant_range_km, r.radial_velocity_km_s, r.quantum_loss_db, r.beacon_loss_db
        );
    }
    out
}

/// One laboratory-to-mission parameter change and its dB gain. Changes that
/// do not translate into a loss or rate shift have no gain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub parameter: String,
    pub lab: f64,
    pub mission: f64,
    pub gain_db: Option<f64>,
    /// `horizontal` shifts the loss axis, `vertical` the rate axis.
    pub direction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainTable {
    pub rows: Vec<TableRow>,
    pub horizontal_shift_db: f64,
    pub vertical_shift_db: f64,
}

pub fn gain_table(cfg: &ExperimentConfig) -> Result<GainTable> {
    let m = &cfg.mission;
    let lab_intrinsic = qbermodel::intrinsic_qber(cfg.signal.e_sp, cfg.receiver.e_pbs)?;
    // The laboratory detector loss is folded into the system loss of the
    // lab presets, so the tabulated value comes from the link budget.
    let lab_detector = cfg.channel.detector_loss_db.max(cfg.link.quantum.detector_efficiency_db);
    type Entry<'a> = (&'a str, f64, f64, Option<(GainKind, &'a str)>);
    let spec: [Entry; 6] = [
        ("rep_rate_hz", cfg.signal.rep_rate_hz, m.rep_rate_hz, Some((GainKind::Rate, "vertical"))),
        ("intrinsic_qber", lab_intrinsic, m.intrinsic_qber, None),
        ("dark_count_rate_hz", cfg.receiver.dark_count_rate_hz, m.dark_count_rate_hz, Some((GainKind::Rate, "horizontal"))),
        ("system_loss_db", cfg.channel.system_loss_db, m.system_loss_db, Some((GainKind::Loss, "horizontal"))),
        ("detector_loss_db", lab_detector, m.detector_loss_db, Some((GainKind::Loss, "horizontal"))),
        ("mu", cfg.signal.mu, m.mu, Some((GainKind::Mu, "horizontal"))),
    ];
    let mut rows = Vec::new();
    let (mut h, mut v) = (0.0, 0.0);
    for (name, lab, mission, kind) in spec {
        let (gain, direction) = match kind {
            Some((k, dir)) => {
                // A lower dark count rate is the improvement, so the ratio
                // is inverted.
                let g = if name == "dark_count_rate_hz" { gain_db(mission, lab, k)? } else { gain_db(lab, mission, k)? };
                if dir == "vertical" {
                    v += g;
                } else {
                    h += g;
                }
                (Some(g), Some(dir.to_string()))
            }
            None => (None, None),
        };
        rows.push(TableRow { parameter: name.into(), lab, mission, gain_db: gain, direction });
    }
    Ok(GainTable { rows, horizontal_shift_db: h, vertical_shift_db: v })
}

pub fn table_csv(t: &GainTable) -> String {
    let mut out = String::from("parameter,lab,mission,gain_db,direction\n");
    for r in &t.rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.parameter, r.lab, r.mission, opt(r.gain_db), r.direction.as_deref().unwrap_or(""));
    }
    let _ = writeln!(out, "horizontal_shift,,,{},horizontal", t.horizontal_shift_db);
    let _ = writeln!(out, "vertical_shift,,,{},vertical", t.vertical_shift_db);
    out
}

fn series_plot(csv: &str, points: &[SweepPoint], sweep: &str, x: &str, y: &str, title: &str) -> Vec<String> {
    let mut series: Vec<Option<f64>> = Vec::new();
    for p in points.iter().filter(|p| p.sweep == sweep) {
        if !series.contains(&p.series) {
            series.push(p.series);
        }
    }
    series
        .iter()
        .map(|s| {
            let label = s.map(|v| format!("{title} {v}")).unwrap_or_else(|| title.to_string());
            let filter = match s {
                Some(v) => format!("(strcol(1) eq \"{sweep}\" && column(\"series\") == {v})"),
                None => format!("(strcol(1) eq \"{sweep}\")"),
            };
            format!("'{csv}' using (column(\"{x}\")):({filter} ? column(\"{y}\") : 1/0) with linespoints title \"{label}\"")
        })
        .collect()
}

/// A gnuplot script plotting the CSV emitted next to it.
pub fn gnuplot_script(cfg: &ExperimentConfig, points: &[SweepPoint]) -> String {
    let csv = format!("{}.csv", cfg.scenario);
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{}.png'", cfg.scenario);
    let _ = writeln!(s, "set grid");
    match cfg.kind {
        super::RunKind::Pass => {
            let _ = writeln!(s, "set xlabel 'time from horizon crossing (s)'");
            let _ = writeln!(s, "set ylabel 'loss (dB)'");
            let _ = writeln!(s, "set y2label 'elevation (deg)'\nset y2tics");
            let _ = writeln!(
                s,
                "plot '{csv}' using 1:5 with lines title 'quantum', '' using 1:6 with lines title 'beacon', '' using 1:2 axes x1y2 with lines title 'elevation'"
            );
        }
        super::RunKind::Table => {
            let _ = writeln!(s, "set style data histogram\nset style fill solid 0.6");
            let _ = writeln!(s, "set ylabel 'gain (dB)'");
            let _ = writeln!(s, "plot '{csv}' using 4:xtic(1) title 'gain'");
        }
        super::RunKind::Sweep | super::RunKind::Projection => {
            let _ = writeln!(s, "set logscale y\nset format y '10^{{%L}}'");
            let mut plots = Vec::new();
            for sw in &cfg.sweeps {
                let x = if cfg.kind == super::RunKind::Projection { "channel_loss_db" } else { "value" };
                if sw.axis.ends_with("background_rate_hz") {
                    let _ = writeln!(s, "set logscale x");
                }
                let _ = writeln!(s, "set xlabel '{}'", sw.axis);
                let _ = writeln!(s, "set ylabel 'secure key rate (bit/s)'");
                plots.extend(series_plot(&csv, points, &sw.name, x, "skr_bps", &format!("{} simulated", sw.name)));
                plots.extend(series_plot(&csv, points, &sw.name, x, "analytic_skr_bps", &format!("{} analytic", sw.name)));
                if cfg.kind == super::RunKind::Projection {
                    plots.push(format!("'{csv}' using 35:37 with lines dashtype 2 title 'mission projection'"));
                }
            }
            let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        }
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::presets::preset;

    #[test]
    fn table_gains() {
        let t = gain_table(&preset("table3").unwrap()).unwrap();
        let g = |name: &str| t.rows.iter().find(|r| r.parameter == name).unwrap().gain_db;
        assert!((g("rep_rate_hz").unwrap() - 12.0412).abs() < 1e-3);
        assert!((g("mu").unwrap() - 5.7330).abs() < 1e-3);
        assert!((g("system_loss_db").unwrap() - 3.6).abs() < 1e-12);
        assert_eq!(g("dark_count_rate_hz"), Some(0.0));
        assert_eq!(g("detector_loss_db"), Some(0.0));
        assert_eq!(g("intrinsic_qber"), None);
        assert!((t.horizontal_shift_db - 9.333).abs() < 1e-3);
        assert!((t.vertical_shift_db - 12.041).abs() < 1e-3);
    }

    #[test]
    fn pass_table_columns() {
        let rows = pass_rows(&preset("fig7").unwrap()).unwrap();
        let csv = pass_csv(&rows);
        assert!(csv.starts_with("t_s,elevation_deg,slant_range_km,radial_velocity_km_s,quantum_loss_db,beacon_loss_db\n"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
        let peak = rows.iter().max_by(|a, b| a.elevation_deg.total_cmp(&b.elevation_deg)).unwrap();
        assert!(rows.iter().all(|r| r.quantum_loss_db >= peak.quantum_loss_db - 1e-9));
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(quote("a,b"), "\"a,b\"");
        assert_eq!(quote("plain"), "plain");
        assert_eq!(num(f64::NAN), "");
        assert_eq!(num(0.25), "0.25");
    }
}
