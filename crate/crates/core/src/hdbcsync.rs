//! Beacon timing layer: de Bruijn index sequence, pulse-position encoding
//! and clock offset/drift recovery.
//!
//! The beacon emits one pulse per period. A `1` delays the pulse by a fixed
//! fraction of the period. Because every `k`-bit window of a de Bruijn
//! sequence is unique, a short run of decoded periods pins the absolute
//! pulse index, and matched (transmit, receive) times give the clock model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonsim::{self, DetectionRecord};
use crate::PS_PER_S;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    #[error("de Bruijn order {0} outside 2..=24")]
    InvalidOrder(u32),
    #[error("invalid beacon configuration: {0}")]
    InvalidConfig(String),
    #[error("window matches {matches} placements")]
    AmbiguousWindow { matches: usize },
    #[error("window matches no placement")]
    NoMatch,
    #[error("clock fit needs at least 2 matched pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("no beacon segment could be decoded")]
    NoLock,
}

type SyncResult<T> = std::result::Result<T, SyncError>;

/// How the beacon's de Bruijn sequence is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Concatenated Lyndon words. Highly regular, so distinct windows can
    /// differ in only a handful of bits and erasures make them ambiguous.
    Lyndon,
    /// Seeded random Eulerian circuit of the order-(k-1) de Bruijn graph.
    #[default]
    RandomEulerian,
}

/// Seed of the beacon's random Eulerian circuit; both ends must agree on it.
pub const SEQUENCE_SEED: u64 = 0x4844_4243;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdbcConfig {
    pub order_k: u32,
    pub beacon_rate_hz: f64,
    /// Delay of a `1` pulse as a fraction of the period.
    pub ppm_offset_fraction: f64,
    pub construction: Construction,
}

impl Default for HdbcConfig {
    fn default() -> Self {
        Self { order_k: 16, beacon_rate_hz: 100e3, ppm_offset_fraction: 0.25, construction: Construction::default() }
    }
}

impl HdbcConfig {
    pub fn validate(&self) -> SyncResult<()> {
        if !(2..=24).contains(&self.order_k) {
            return Err(SyncError::InvalidOrder(self.order_k));
        }
        if !(self.beacon_rate_hz > 0.0 && self.beacon_rate_hz.is_finite()) {
            return Err(SyncError::InvalidConfig("beacon_rate_hz must be > 0".into()));
        }
        if !(self.ppm_offset_fraction > 0.0 && self.ppm_offset_fraction <= 0.5) {
            return Err(SyncError::InvalidConfig("ppm_offset_fraction must be in (0, 0.5]".into()));
        }
        Ok(())
    }

    pub fn period_ps(&self) -> f64 {
        PS_PER_S / self.beacon_rate_hz
    }

    fn shift_ps(&self) -> f64 {
        self.ppm_offset_fraction * self.period_ps()
    }
}

/// Linear map from transmitter time to receiver time,
/// `rx = offset + (1 + drift)·tx`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset_ps: f64,
    pub drift: f64,
    pub residual_rms_ps: f64,
}

impl ClockModel {
    pub const IDENTITY: ClockModel = ClockModel { offset_ps: 0.0, drift: 0.0, residual_rms_ps: 0.0 };

    pub fn apply(&self, tx_ps: f64) -> f64 {
        self.offset_ps + (1.0 + self.drift) * tx_ps
    }

    pub fn invert(&self, rx_ps: f64) -> f64 {
        (rx_ps - self.offset_ps) / (1.0 + self.drift)
    }
}

/// Binary de Bruijn sequence B(2, k) by concatenating Lyndon words in
/// lexicographic order.
pub fn debruijn_sequence(order_k: u32) -> SyncResult<Vec<u8>> {
    if !(2..=24).contains(&order_k) {
        return Err(SyncError::InvalidOrder(order_k));
    }
    fn visit(t: usize, p: usize, k: usize, a: &mut [u8], out: &mut Vec<u8>) {
        if t > k {
            if k.is_multiple_of(p) {
                out.extend_from_slice(&a[1..=p]);
            }
            return;
        }
        a[t] = a[t - p];
        visit(t + 1, p, k, a, out);
        for v in a[t - p] + 1..2 {
            a[t] = v;
            visit(t + 1, t, k, a, out);
        }
    }
    let k = order_k as usize;
    let mut a = vec![0u8; k + 1];
    let mut out = Vec::with_capacity(1 << k);
    visit(1, 1, k, &mut a, &mut out);
    Ok(out)
}

/// De Bruijn sequence read off a random Eulerian circuit of the graph whose
/// nodes are (k-1)-bit words. Every k-bit window still occurs exactly once,
/// but the sequence lacks the long near-periodic stretches of the Lyndon
/// construction.
pub fn debruijn_sequence_eulerian(order_k: u32, seed: u64) -> SyncResult<Vec<u8>> {
    if !(2..=24).contains(&order_k) {
        return Err(SyncError::InvalidOrder(order_k));
    }
    let nodes = 1usize << (order_k - 1);
    let mask = nodes - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per node, which outgoing bit is taken first.
    let first: Vec<u8> = (0..nodes).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let mut used = vec![0u8; nodes];
    let mut stack: Vec<(usize, Option<u8>)> = vec![(0, None)];
    let mut circuit = Vec::with_capacity(nodes * 2);
    while let Some(&(v, label)) = stack.last() {
        if used[v] < 2 {
            let bit = first[v] ^ used[v];
            used[v] += 1;
            stack.push((((v << 1) | bit as usize) & mask, Some(bit)));
        } else {
            stack.pop();
            if let Some(bit) = label {
                circuit.push(bit);
            }
        }
    }
    circuit.reverse();
    Ok(circuit)
}

/// Pulse times for consecutive periods starting at zero.
pub fn encode_beacon(bits: &[u8], config: &HdbcConfig) -> Vec<f64> {
    let (period, shift) = (config.period_ps(), config.shift_ps());
    bits.iter()
        .enumerate()
        .map(|(j, &b)| j as f64 * period + if b != 0 { shift } else { 0.0 })
        .collect()
}

/// Slices `n_periods` periods starting with a nominal bit-0 phase at
/// `start_ps`. A period decodes to the nominal phase nearest its pulse when
/// the pulse is within half the shift of it; empty, out-of-guard or
/// conflicting periods are erasures.
pub fn decode_bits(times_ps: &[f64], config: &HdbcConfig, start_ps: f64, n_periods: usize) -> Vec<Option<u8>> {
    let (period, shift) = (config.period_ps(), config.shift_ps());
    let guard = shift / 2.0;
    // Period windows are centred between the two nominal phases.
    let origin = start_ps + shift / 2.0 - period / 2.0;
    let mut slots: Vec<Option<Option<u8>>> = vec![None; n_periods];
    let lo = times_ps.partition_point(|&t| t < origin);
    for &t in &times_ps[lo..] {
        let j = ((t - origin) / period).floor();
        if j >= n_periods as f64 {
            break;
        }
        let j = j as usize;
        let d = t - (start_ps + j as f64 * period);
        let bit = if d.abs() < guard {
            Some(0)
        } else if (d - shift).abs() < guard {
            Some(1)
        } else {
            None
        };
        slots[j] = match slots[j] {
            None => Some(bit),
            Some(prev) if prev == bit => Some(prev),
            Some(_) => Some(None),
        };
    }
    slots.into_iter().map(Option::flatten).collect()
}

/// Position lookup over one cyclic de Bruijn sequence.
#[derive(Debug, Clone)]
pub struct DeBruijnIndex {
    k: u32,
    bits: Vec<u8>,
    /// Sequence bits packed LSB-first, extended cyclically by 128 bits.
    words: Vec<u64>,
    /// Start position of each fully known `k`-bit window.
    table: Vec<u32>,
}

impl DeBruijnIndex {
    /// Index over the Lyndon-word sequence.
    pub fn new(order_k: u32) -> SyncResult<Self> {
        Self::from_sequence(order_k, debruijn_sequence(order_k)?)
    }

    pub fn for_config(config: &HdbcConfig) -> SyncResult<Self> {
        config.validate()?;
        let bits = match config.construction {
            Construction::Lyndon => debruijn_sequence(config.order_k)?,
            Construction::RandomEulerian => debruijn_sequence_eulerian(config.order_k, SEQUENCE_SEED)?,
        };
        Self::from_sequence(config.order_k, bits)
    }

    fn from_sequence(order_k: u32, bits: Vec<u8>) -> SyncResult<Self> {
        let n = bits.len();
        let mut words = vec![0u64; (n + 128).div_ceil(64) + 1];
        for i in 0..n + 128 {
            if bits[i % n] != 0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        let mut idx = Self { k: order_k, bits, words, table: vec![0; n] };
        let mask = (1u64 << order_k) - 1;
        for i in 0..n {
            let w = idx.word_at(i) & mask;
            idx.table[w as usize] = i as u32;
        }
        Ok(idx)
    }

    pub fn order(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn sequence(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, index: usize) -> u8 {
        self.bits[index % self.bits.len()]
    }

    /// 64 sequence bits starting at `i` (cyclic), LSB first.
    fn word_at(&self, i: usize) -> u64 {
        let i = i % self.bits.len();
        let (w, s) = (i / 64, i % 64);
        if s == 0 {
            self.words[w]
        } else {
            (self.words[w] >> s) | (self.words[w + 1] << (64 - s))
        }
    }

    fn matches_at(&self, start: usize, chunks: &[(u64, u64)]) -> bool {
        chunks
            .iter()
            .enumerate()
            .all(|(c, &(mask, val))| (self.word_at(start + 64 * c) ^ val) & mask == 0)
    }

    /// Start index of `window` in the cyclic sequence. `None` entries are
    /// erasures and match either value.
    pub fn decode_index(&self, window: &[Option<u8>]) -> SyncResult<usize> {
        let chunks: Vec<(u64, u64)> = window
            .chunks(64)
            .map(|c| {
                c.iter().enumerate().fold((0u64, 0u64), |(m, v), (b, x)| match x {
                    Some(bit) => (m | 1 << b, v | (u64::from(*bit & 1) << b)),
                    None => (m, v),
                })
            })
            .collect();
        let n = self.len();
        let k = self.k as usize;

        // A fully known k-run fixes the only possible placement.
        let mut run = 0;
        for (i, x) in window.iter().enumerate() {
            run = if x.is_some() { run + 1 } else { 0 };
            if run == k {
                let at = i + 1 - k;
                let key = window[at..=i]
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (b, x)| acc | (usize::from(x.unwrap() & 1) << b));
                let start = (self.table[key] as usize + n - at % n) % n;
                return if self.matches_at(start, &chunks) { Ok(start) } else { Err(SyncError::NoMatch) };
            }
        }

        let mut found = None;
        let mut matches = 0;
        for start in 0..n {
            if self.matches_at(start, &chunks) {
                matches += 1;
                found.get_or_insert(start);
            }
        }
        match (matches, found) {
            (1, Some(start)) => Ok(start),
            (0, _) => Err(SyncError::NoMatch),
            _ => Err(SyncError::AmbiguousWindow { matches }),
        }
    }
}

/// Least-squares fit `rx ≈ offset + (1 + drift)·tx` over matched pairs.
pub fn recover_clock(tx_ps: &[f64], rx_ps: &[f64]) -> SyncResult<ClockModel> {
    let n = tx_ps.len().min(rx_ps.len());
    if n < 2 {
        return Err(SyncError::InsufficientPairs(n));
    }
    let mean = |v: &[f64]| v[..n].iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(tx_ps), mean(rx_ps));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in tx_ps.iter().zip(rx_ps) {
        let dx = x - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 {
        return Err(SyncError::InsufficientPairs(1));
    }
    let slope = sxy / sxx;
    let offset = my - slope * mx;
    let ss: f64 = tx_ps
        .iter()
        .zip(rx_ps)
        .map(|(x, y)| (y - offset - slope * x).powi(2))
        .sum();
    Ok(ClockModel { offset_ps: offset, drift: slope - 1.0, residual_rms_ps: (ss / n as f64).sqrt() })
}

/// Maps receiver timestamps back onto the transmitter clock.
pub fn correct_timestamps(model: &ClockModel, events: &[DetectionRecord]) -> Vec<DetectionRecord> {
    events
        .iter()
        .map(|r| DetectionRecord { timestamp_ps: model.invert(r.timestamp_ps as f64).round() as i64, ..*r })
        .collect()
}

pub fn correct_times(model: &ClockModel, times_ps: &[f64]) -> Vec<f64> {
    times_ps.iter().map(|&t| model.invert(t)).collect()
}

/// Matched beacon pulses and the fitted clock.
#[derive(Debug, Clone)]
pub struct Lock {
    pub clock: ClockModel,
    pub tx_ps: Vec<f64>,
    pub rx_ps: Vec<f64>,
    pub segments: usize,
}

/// Recovers the clock from received beacon pulse times (sorted), assuming
/// the transmitter started the sequence at index 0 at time 0 and that the
/// first decodable segment lies in the first sequence cycle.
///
/// The stream is decoded in segments of `4k` periods. For each segment both
/// phase hypotheses of its first pulse are tried; the absolute index is
/// unwrapped against the previous segment by elapsed time.
pub fn lock_beacon(rx_ps: &[f64], config: &HdbcConfig, index: &DeBruijnIndex) -> crate::Result<Lock> {
    config.validate()?;
    if index.order() != config.order_k {
        return Err(SyncError::InvalidConfig("index order differs from config".into()).into());
    }
    let period = config.period_ps();
    let shift = config.shift_ps();
    let seg_len = 4 * config.order_k as usize;
    let n = index.len() as i64;

    let mut tx = Vec::new();
    let mut rx = Vec::new();
    let mut prev: Option<(f64, i64)> = None;
    let mut segments = 0;
    let mut cursor = 0;
    while cursor < rx_ps.len() {
        let first = rx_ps[cursor];
        let mut decoded = None;
        for start in [first, first - shift] {
            let window = decode_bits(rx_ps, config, start, seg_len);
            if window.iter().filter(|b| b.is_some()).count() < config.order_k as usize {
                continue;
            }
            if let Ok(pos) = index.decode_index(&window) {
                if decoded.is_some() {
                    decoded = None;
                    break;
                }
                decoded = Some((start, pos as i64, window));
            }
        }
        let seg_end = first + seg_len as f64 * period;
        let next = cursor + rx_ps[cursor..].partition_point(|&t| t < seg_end - period / 2.0);
        if let Some((start, pos, window)) = decoded {
            let global = match prev {
                None => pos,
                Some((prev_start, prev_global)) => {
                    let expected = prev_global + ((start - prev_start) / period).round() as i64;
                    let delta = (pos - expected).rem_euclid(n);
                    expected + if delta > n / 2 { delta - n } else { delta }
                }
            };
            prev = Some((start, global));
            segments += 1;
            let origin = start + shift / 2.0 - period / 2.0;
            for &t in &rx_ps[cursor..next.max(cursor + 1)] {
                let j = ((t - origin) / period).floor();
                if j < 0.0 || j >= seg_len as f64 {
                    continue;
                }
                let j = j as usize;
                if let Some(bit) = window[j] {
                    let g = global + j as i64;
                    tx.push(g as f64 * period + if bit != 0 { shift } else { 0.0 });
                    rx.push(t);
                }
            }
        }
        cursor = next.max(cursor + 1);
    }
    if segments == 0 {
        return Err(SyncError::NoLock.into());
    }
    let clock = recover_clock(&tx, &rx)?;
    Ok(Lock { clock, tx_ps: tx, rx_ps: rx, segments })
}

/// A simulated beacon downlink: the transmitted pulse train and what the
/// receiver timestamps after loss, clock distortion and jitter.
#[derive(Debug, Clone)]
pub struct BeaconLink {
    pub tx_ps: Vec<f64>,
    pub rx_ps: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_beacon(
    n_periods: usize,
    config: &HdbcConfig,
    index: &DeBruijnIndex,
    truth: &ClockModel,
    jitter_ps: f64,
    erasure_p: f64,
    seed: u64,
) -> crate::Result<BeaconLink> {
    config.validate()?;
    let bits: Vec<u8> = (0..n_periods).map(|j| index.bit(j)).collect();
    let tx = encode_beacon(&bits, config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<f64> = tx.iter().copied().filter(|_| !rng.random_bool(erasure_p.clamp(0.0, 1.0))).collect();
    let mut rx = photonsim::distort_times(&kept, truth.drift, truth.offset_ps, jitter_ps, seed ^ 0x9e37_79b9)?;
    rx.sort_by(f64::total_cmp);
    Ok(BeaconLink { tx_ps: tx, rx_ps: rx })
}

/// Beacon pulses as event records on detector `B`.
pub fn beacon_records(times_ps: &[f64]) -> Vec<DetectionRecord> {
    times_ps
        .iter()
        .map(|&t| DetectionRecord {
            timestamp_ps: t.round() as i64,
            detector: photonsim::Detector::B,
            origin: photonsim::Origin::Beacon,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn windows_unique(seq: &[u8], k: usize) -> bool {
        let n = seq.len();
        let set: HashSet<Vec<u8>> = (0..n).map(|i| (0..k).map(|b| seq[(i + b) % n]).collect()).collect();
        set.len() == n && n == 1 << k
    }

    #[test]
    fn debruijn_examples() {
        assert_eq!(debruijn_sequence(2).unwrap(), vec![0, 0, 1, 1]);
        for k in [3, 4, 8, 16] {
            assert!(windows_unique(&debruijn_sequence(k).unwrap(), k as usize), "k={k}");
        }
        assert!(debruijn_sequence(1).is_err());
        assert!(debruijn_sequence(25).is_err());
    }

    #[test]
    fn encode_examples() {
        let cfg = HdbcConfig::default();
        let t = encode_beacon(&[0; 5], &cfg);
        assert!(t.windows(2).all(|w| w[1] - w[0] == 10_000_000.0));
        let t = encode_beacon(&[0, 1], &cfg);
        assert_eq!(t[1] - 10_000_000.0, 2_500_000.0);
        let bits = debruijn_sequence(6).unwrap();
        let t = encode_beacon(&bits, &cfg);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let decoded: Vec<u8> = decode_bits(&t, &cfg, 0.0, bits.len()).into_iter().map(Option::unwrap).collect();
        assert_eq!(decoded, bits);
    }

    #[test]
    fn eulerian_sequence_is_de_bruijn() {
        for k in [2, 3, 5, 9, 16] {
            let a = debruijn_sequence_eulerian(k, SEQUENCE_SEED).unwrap();
            assert!(windows_unique(&a, k as usize), "k={k}");
        }
        let a = debruijn_sequence_eulerian(12, 1).unwrap();
        assert_ne!(a, debruijn_sequence_eulerian(12, 2).unwrap());
        assert!(debruijn_sequence_eulerian(25, 0).is_err());
    }

    #[test]
    fn every_window_decodes_k16() {
        let lyndon = DeBruijnIndex::new(16).unwrap();
        let euler = DeBruijnIndex::for_config(&HdbcConfig::default()).unwrap();
        for idx in [lyndon, euler] {
            for i in 0..idx.len() {
                let w: Vec<Option<u8>> = (0..16).map(|b| Some(idx.bit(i + b))).collect();
                assert_eq!(idx.decode_index(&w).unwrap(), i);
            }
        }
    }

    fn brute_force(seq: &[u8], w: &[Option<u8>]) -> Vec<usize> {
        let n = seq.len();
        (0..n)
            .filter(|&s| w.iter().enumerate().all(|(b, x)| x.is_none_or(|v| v == seq[(s + b) % n])))
            .collect()
    }

    #[test]
    fn erased_window_scan_agrees_with_brute_force() {
        let idx = DeBruijnIndex::for_config(&HdbcConfig::default()).unwrap();
        let seq = idx.sequence();
        // One erasure among k + 4 observed bits.
        let start = 12_345;
        let mut w: Vec<Option<u8>> = (0..21).map(|b| Some(seq[(start + b) % seq.len()])).collect();
        w[7] = None;
        assert_eq!(brute_force(seq, &w), vec![start]);
        assert_eq!(idx.decode_index(&w).unwrap(), start);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let start = rng.random_range(0..seq.len());
            let w: Vec<Option<u8>> = (0..24)
                .map(|b| (!rng.random_bool(0.3)).then(|| seq[(start + b) % seq.len()]))
                .collect();
            let brute = brute_force(seq, &w);
            match idx.decode_index(&w) {
                Ok(i) => assert_eq!(brute, vec![i]),
                Err(SyncError::AmbiguousWindow { matches }) => assert_eq!(brute.len(), matches),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn short_window_is_ambiguous() {
        let idx = DeBruijnIndex::new(16).unwrap();
        let w: Vec<Option<u8>> = (0..15).map(|b| Some(idx.bit(100 + b))).collect();
        assert_eq!(idx.decode_index(&w), Err(SyncError::AmbiguousWindow { matches: 2 }));
    }

    #[test]
    fn corrupted_window_no_match() {
        let idx = DeBruijnIndex::new(8).unwrap();
        let mut w: Vec<Option<u8>> = (0..24).map(|b| Some(idx.bit(40 + b))).collect();
        w[20] = w[20].map(|b| b ^ 1);
        assert_eq!(brute_force(idx.sequence(), &w), Vec::<usize>::new());
        assert_eq!(idx.decode_index(&w), Err(SyncError::NoMatch));
    }

    fn erasure_success(idx: &DeBruijnIndex, trials: usize, p: f64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let span = 4 * idx.order() as usize;
        (0..trials)
            .filter(|_| {
                let start = rng.random_range(0..idx.len());
                let w: Vec<Option<u8>> =
                    (0..span).map(|b| (!rng.random_bool(p)).then(|| idx.bit(start + b))).collect();
                idx.decode_index(&w) == Ok(start)
            })
            .count()
    }

    #[test]
    fn loss_tolerance() {
        let idx = DeBruijnIndex::for_config(&HdbcConfig::default()).unwrap();
        assert!(erasure_success(&idx, 1000, 0.3) >= 990);
    }

    #[test]
    fn lyndon_sequence_is_fragile_under_erasure() {
        // Regular stretches leave near-duplicate windows.
        let idx = DeBruijnIndex::new(16).unwrap();
        assert!(erasure_success(&idx, 1000, 0.3) < 990);
    }

    #[test]
    fn exact_fit_recovers_parameters() {
        let tx: Vec<f64> = (0..1000).map(|i| i as f64 * 1e7).collect();
        let truth = ClockModel { offset_ps: 1e9, drift: 3.3e-5, residual_rms_ps: 0.0 };
        let rx: Vec<f64> = tx.iter().map(|&t| truth.apply(t)).collect();
        let m = recover_clock(&tx, &rx).unwrap();
        assert!((m.offset_ps - 1e9).abs() < 1e-3);
        assert!((m.drift - 3.3e-5).abs() < 1e-14);
        let back = correct_times(&m, &rx);
        let mean: f64 = back.iter().zip(&tx).map(|(a, b)| a - b).sum::<f64>() / tx.len() as f64;
        assert!(mean.abs() < 1.0);
        assert_eq!(recover_clock(&tx[..1], &rx[..1]), Err(SyncError::InsufficientPairs(1)));
    }

    #[test]
    fn jittered_fit_within_regression_error() {
        let tx: Vec<f64> = (0..10_000).map(|i| i as f64 * 1e7).collect();
        let rx = photonsim::distort_times(&tx, 3.3e-5, 1e9, 50.0, 11).unwrap();
        let m = recover_clock(&tx, &rx).unwrap();
        let mx = tx.iter().sum::<f64>() / tx.len() as f64;
        let sxx: f64 = tx.iter().map(|x| (x - mx).powi(2)).sum();
        let sigma_drift = 50.0 / sxx.sqrt();
        assert!((m.drift - 3.3e-5).abs() < 3.0 * sigma_drift);
        assert!(m.residual_rms_ps <= 60.0);
    }

    #[test]
    fn identity_correction_is_noop() {
        let recs = beacon_records(&[0.0, 5.0, 1e9]);
        assert_eq!(correct_timestamps(&ClockModel::IDENTITY, &recs), recs);
    }

    #[test]
    fn end_to_end_lock() {
        let cfg = HdbcConfig::default();
        let idx = DeBruijnIndex::for_config(&cfg).unwrap();
        let truth = ClockModel { offset_ps: 3.7e6, drift: 3.3e-5, residual_rms_ps: 0.0 };
        // One second of beacon, beyond the 3-period slip the drift causes.
        let link = simulate_beacon(100_000, &cfg, &idx, &truth, 50.0, 0.2, 5).unwrap();
        let lock = lock_beacon(&link.rx_ps, &cfg, &idx).unwrap();
        assert!((lock.clock.drift - truth.drift).abs() < 1e-9);
        assert!((lock.clock.offset_ps - truth.offset_ps).abs() < 50.0);

        let quantum: Vec<f64> = (0..1000).map(|i| i as f64 * 1e9 + 123.0).collect();
        let rx = photonsim::distort_times(&quantum, truth.drift, truth.offset_ps, 0.0, 0).unwrap();
        let back = correct_times(&lock.clock, &rx);
        let rms = (back.iter().zip(&quantum).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!(rms < 100.0, "{rms}");
    }

    proptest! {
        #[test]
        fn correction_inverts_model(offset in -1e12f64..1e12, drift in -1e-4f64..1e-4, t in 0f64..1e13) {
            let m = ClockModel { offset_ps: offset, drift, residual_rms_ps: 0.0 };
            prop_assert!((m.invert(m.apply(t)) - t).abs() <= 1e-3 + 8.0 * f64::EPSILON * (t.abs() + offset.abs()));
        }

        #[test]
        fn fit_translation_invariant(shift in -1e9f64..1e9, drift in -1e-4f64..1e-4) {
            let tx: Vec<f64> = (0..200).map(|i| i as f64 * 1e7 + (i * i % 7) as f64).collect();
            let rx: Vec<f64> = tx.iter().map(|t| 5e5 + t * (1.0 + drift) + (t * 1e-3).sin() * 30.0).collect();
            let a = recover_clock(&tx, &rx).unwrap();
            let tx2: Vec<f64> = tx.iter().map(|t| t + shift).collect();
            let rx2: Vec<f64> = rx.iter().map(|t| t + shift).collect();
            let b = recover_clock(&tx2, &rx2).unwrap();
            prop_assert!((a.drift - b.drift).abs() < 1e-12);
        }

        #[test]
        fn window_round_trip(k in 2u32..12, start in 0usize..4096, extra in 0usize..8) {
            let idx = DeBruijnIndex::new(k).unwrap();
            let start = start % idx.len();
            let w: Vec<Option<u8>> = (0..k as usize + extra).map(|b| Some(idx.bit(start + b))).collect();
            prop_assert_eq!(idx.decode_index(&w).unwrap(), start);
        }
    }
}
