use serde::Serialize;

use crate::hdbcsync::ClockModel;
use crate::photonsim::{Basis, DetectionRecord, Detector, Origin, TxStream};
use crate::{Error, Result, PS_PER_S};

/// A gated detection paired with the pulse slot it was assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedPair {
    pub slot: u64,
    pub tx_basis: Basis,
    pub tx_bit: u8,
    pub intensity_class: u8,
    pub detector: Detector,
    pub origin: Origin,
}

impl MatchedPair {
    pub fn rx_basis(&self) -> Basis {
        self.detector.measurement().map(|(b, _)| b).unwrap_or(Basis::Z)
    }

    pub fn rx_bit(&self) -> u8 {
        self.detector.measurement().map(|(_, b)| b).unwrap_or(0)
    }
}

/// Corrects timestamps with `clock`, assigns every quantum detection to its
/// nearest pulse slot and keeps those within half a gate of the slot centre.
/// Slots that fired more than one distinct detector are discarded; repeated
/// clicks on one detector count once, attributed to signal if any was.
pub fn gate_and_match(
    detections: &[DetectionRecord],
    tx: &TxStream,
    clock: &ClockModel,
    gate_width_ns: f64,
    rep_rate_hz: f64,
) -> Result<Vec<MatchedPair>> {
    if !(gate_width_ns > 0.0) || !(rep_rate_hz > 0.0) {
        return Err(Error::invalid("gate width and repetition rate must be > 0"));
    }
    let period = PS_PER_S / rep_rate_hz;
    let half_gate = (gate_width_ns * 1e3).min(period) / 2.0;

    let mut hits: Vec<(u64, Detector, Origin)> = detections
        .iter()
        .filter(|r| r.detector != Detector::B)
        .filter_map(|r| {
            let t = clock.invert(r.timestamp_ps as f64);
            let slot = (t / period).round();
            if slot < 0.0 || slot >= tx.len() as f64 || (t - slot * period).abs() > half_gate {
                return None;
            }
            Some((slot as u64, r.detector, r.origin))
        })
        .collect();
    hits.sort_unstable();

    let mut out = Vec::new();
    let mut i = 0;
    while i < hits.len() {
        let slot = hits[i].0;
        let mut j = i;
        while j < hits.len() && hits[j].0 == slot {
            j += 1;
        }
        let group = &hits[i..j];
        i = j;
        if group.iter().any(|h| h.1 != group[0].1) {
            continue;
        }
        let origin = if group.iter().any(|h| h.2 == Origin::Signal) { Origin::Signal } else { group[0].2 };
        let rec = tx.get(slot as usize).expect("slot bounds checked above");
        out.push(MatchedPair {
            slot,
            tx_basis: rec.basis,
            tx_bit: rec.bit,
            intensity_class: rec.intensity_class,
            detector: group[0].1,
            origin,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiftedBlock {
    pub alice_bits: Vec<u8>,
    pub bob_bits: Vec<u8>,
    pub sifted_count: usize,
    pub matched_count: usize,
    pub errors: usize,
    /// Mismatch fraction, capped at one half.
    pub measured_qber: f64,
    pub gated_signal_clicks: usize,
    pub gated_noise_clicks: usize,
}

impl SiftedBlock {
    pub fn sifted_fraction(&self) -> f64 {
        self.sifted_count as f64 / self.matched_count as f64
    }

    /// Truth-tagged signal to noise ratio of the gated clicks.
    pub fn measured_esnr(&self) -> f64 {
        if self.gated_noise_clicks == 0 {
            f64::INFINITY
        } else {
            self.gated_signal_clicks as f64 / self.gated_noise_clicks as f64
        }
    }
}

/// Keeps matched-basis events. `class` restricts to one intensity class.
pub fn sift(pairs: &[MatchedPair], class: Option<u8>) -> Result<SiftedBlock> {
    let selected: Vec<&MatchedPair> = pairs
        .iter()
        .filter(|p| class.is_none_or(|c| p.intensity_class == c))
        .collect();
    let mut block = SiftedBlock {
        alice_bits: Vec::new(),
        bob_bits: Vec::new(),
        sifted_count: 0,
        matched_count: selected.len(),
        errors: 0,
        measured_qber: 0.0,
        gated_signal_clicks: 0,
        gated_noise_clicks: 0,
    };
    for p in &selected {
        if p.origin == Origin::Signal {
            block.gated_signal_clicks += 1;
        } else {
            block.gated_noise_clicks += 1;
        }
        if p.rx_basis() == p.tx_basis {
            block.alice_bits.push(p.tx_bit);
            block.bob_bits.push(p.rx_bit());
            block.errors += usize::from(p.tx_bit != p.rx_bit());
        }
    }
    block.sifted_count = block.alice_bits.len();
    if block.sifted_count == 0 {
        return Err(Error::invalid("sifted block is empty"));
    }
    block.measured_qber = (block.errors as f64 / block.sifted_count as f64).min(0.5);
    Ok(block)
}

/// Gain and error rate of one intensity class, the inputs of the decoy
/// bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ClassStats {
    pub pulses: u64,
    pub clicks: u64,
    pub sifted: u64,
    pub errors: u64,
}

impl ClassStats {
    pub fn gain(&self) -> f64 {
        if self.pulses == 0 {
            0.0
        } else {
            self.clicks as f64 / self.pulses as f64
        }
    }

    pub fn error_rate(&self) -> f64 {
        if self.sifted == 0 {
            0.0
        } else {
            self.errors as f64 / self.sifted as f64
        }
    }
}

pub fn class_statistics(pairs: &[MatchedPair], tx: &TxStream) -> Vec<ClassStats> {
    let mut stats: Vec<ClassStats> = Vec::new();
    let ensure = |stats: &mut Vec<ClassStats>, c: usize| {
        if stats.len() <= c {
            stats.resize(c + 1, ClassStats::default());
        }
    };
    for r in tx.iter() {
        let c = r.intensity_class as usize;
        ensure(&mut stats, c);
        stats[c].pulses += 1;
    }
    for p in pairs {
        let c = p.intensity_class as usize;
        ensure(&mut stats, c);
        stats[c].clicks += 1;
        if p.rx_basis() == p.tx_basis {
            stats[c].sifted += 1;
            stats[c].errors += u64::from(p.tx_bit != p.rx_bit());
        }
    }
    stats
}
