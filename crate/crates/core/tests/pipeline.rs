use qkdbench_core::par::Exec;
use qkdbench_core::runner::{monte_carlo, preset, ExperimentConfig};

fn grid() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for loss in [6.3, 15.0, 22.0] {
        for background in [2.7e3, 1e5] {
            for gate in [0.5, 2.0] {
                let mut cfg = preset("fig2").unwrap();
                cfg.sim.n_pulses = 2_000_000;
                cfg.channel.loss_db = loss;
                cfg.receiver.background_rate_hz = background;
                cfg.receiver.gate_width_ns = gate;
                out.push(cfg);
            }
        }
    }
    out
}

#[test]
fn simulated_qber_and_gain_match_the_closed_form() {
    let configs = grid();
    assert!(configs.len() >= 12);
    let mut outliers = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let a = cfg.link_model().analytic().unwrap();
        let m = monte_carlo(cfg, 100 + i as u64, None, Exec::Parallel).unwrap();
        let n = m.sifted_count as f64;
        let sq = (a.qber * (1.0 - a.qber) / n).sqrt();
        let sg = (a.gated.total() / cfg.sim.n_pulses as f64).sqrt();
        if (m.qber - a.qber).abs() > 3.5 * sq || (m.gain - a.gated.total()).abs() > 3.5 * sg {
            outliers.push((cfg.channel.loss_db, cfg.receiver.background_rate_hz, cfg.receiver.gate_width_ns));
        }
    }
    assert!(outliers.len() <= 1, "{outliers:?}");
}

#[test]
fn dead_time_only_removes_clicks() {
    let mut cfg = preset("fig2").unwrap();
    cfg.sim.n_pulses = 1_000_000;
    cfg.receiver.background_rate_hz = 5e5;
    let free = monte_carlo(&cfg, 9, None, Exec::Parallel).unwrap();
    cfg.receiver.dead_time_ns = 50.0;
    let dead = monte_carlo(&cfg, 9, None, Exec::Parallel).unwrap();
    assert!(dead.sifted_count <= free.sifted_count);
}
