use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shifts an SKR-vs-loss curve right by `shift_right_db` and up by
/// `shift_up_db`.
pub fn mission_projection(curve: &[(f64, f64)], shift_right_db: f64, shift_up_db: f64) -> Vec<(f64, f64)> {
    let scale = 10f64.powf(shift_up_db / 10.0);
    curve.iter().map(|&(loss, skr)| (loss + shift_right_db, skr * scale)).collect()
}

/// Largest loss on the curve that still yields a positive rate.
pub fn cutoff_loss(curve: &[(f64, f64)]) -> Option<f64> {
    curve.iter().filter(|(_, skr)| *skr > 0.0).map(|(loss, _)| *loss).reduce(f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Rate,
    Loss,
    Mu,
}

/// Improvement in dB from `old` to `new`. Losses are given in dB already.
pub fn gain_db(old: f64, new: f64, kind: GainKind) -> Result<f64> {
    match kind {
        GainKind::Rate | GainKind::Mu => {
            if !(old > 0.0 && new > 0.0) {
                return Err(Error::invalid("rate and mu gains need positive values"));
            }
            Ok(10.0 * (new / old).log10())
        }
        GainKind::Loss => Ok(old - new),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let curve = vec![(10.0, 1e3), (20.0, 1e2), (37.7, 1.0), (38.0, 0.0)];
        assert_eq!(mission_projection(&curve, 0.0, 0.0), curve);
        let p = mission_projection(&curve, 9.3, 0.0);
        assert!((cutoff_loss(&p).unwrap() - 47.0).abs() < 1e-9);
        let p = mission_projection(&curve, 0.0, 12.0);
        assert!((p[0].1 / 1e3 - 15.848_931_924_611_14).abs() < 1e-9);
    }

    #[test]
    fn gain_examples() {
        assert!((gain_db(25e6, 400e6, GainKind::Rate).unwrap() - 12.04).abs() < 0.005);
        assert!((gain_db(0.1, 0.3744, GainKind::Mu).unwrap() - 5.73).abs() < 0.005);
        assert!((gain_db(7.4, 3.8, GainKind::Loss).unwrap() - 3.6).abs() < 1e-12);
        assert!(gain_db(0.0, 1.0, GainKind::Rate).is_err());
    }
}
