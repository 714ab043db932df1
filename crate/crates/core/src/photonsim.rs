//! Seeded Monte Carlo of the BB84 transmitter, lossy channel and
//! four-detector passive-basis receiver.
//!
//! The pulse stream is cut into fixed-size blocks. Each block draws from its
//! own ChaCha stream keyed by `(seed, purpose, block index)`, so output does
//! not depend on how blocks are scheduled across threads.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::qbermodel::{self, SignalModel};
use crate::{Error, Result, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// Rectilinear, H/V.
    Z,
    /// Diagonal, D/A.
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    H,
    V,
    D,
    A,
    /// Beacon APD.
    B,
}

impl Detector {
    pub const QUANTUM: [Detector; 4] = [Detector::H, Detector::V, Detector::D, Detector::A];

    pub fn for_measurement(basis: Basis, bit: u8) -> Self {
        match (basis, bit) {
            (Basis::Z, 0) => Detector::H,
            (Basis::Z, _) => Detector::V,
            (Basis::X, 0) => Detector::D,
            (Basis::X, _) => Detector::A,
        }
    }

    /// Basis and bit value reported by a quantum detector.
    pub fn measurement(self) -> Option<(Basis, u8)> {
        match self {
            Detector::H => Some((Basis::Z, 0)),
            Detector::V => Some((Basis::Z, 1)),
            Detector::D => Some((Basis::X, 0)),
            Detector::A => Some((Basis::X, 1)),
            Detector::B => None,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "H" => Ok(Detector::H),
            "V" => Ok(Detector::V),
            "D" => Ok(Detector::D),
            "A" => Ok(Detector::A),
            "B" => Ok(Detector::B),
            other => Err(format!("unknown detector `{other}`")),
        }
    }
}

/// Simulation-only truth tag for a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Signal,
    Background,
    Dark,
    Beacon,
}

impl Origin {
    pub fn is_noise(self) -> bool {
        matches!(self, Origin::Background | Origin::Dark)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Signal => "signal",
            Origin::Background => "background",
            Origin::Dark => "dark",
            Origin::Beacon => "beacon",
        })
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "signal" => Ok(Origin::Signal),
            "background" => Ok(Origin::Background),
            "dark" => Ok(Origin::Dark),
            "beacon" => Ok(Origin::Beacon),
            other => Err(format!("unknown origin `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub timestamp_ps: i64,
    pub detector: Detector,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub pulse_index: u64,
    pub basis: Basis,
    pub bit: u8,
    pub intensity_class: u8,
}

/// Transmitter log, one byte per pulse: bit 0 is the key bit, bit 1 the
/// basis (set for X), the upper bits the intensity class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TxStream {
    packed: Vec<u8>,
}

impl TxStream {
    fn pack(basis: Basis, bit: u8, class: u8) -> u8 {
        (bit & 1) | (u8::from(basis == Basis::X) << 1) | (class << 2)
    }

    pub fn from_records(records: &[TxRecord]) -> Self {
        Self {
            packed: records
                .iter()
                .map(|r| Self::pack(r.basis, r.bit, r.intensity_class))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.packed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packed.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<TxRecord> {
        self.packed.get(index).map(|&b| TxRecord {
            pulse_index: index as u64,
            basis: if b & 2 != 0 { Basis::X } else { Basis::Z },
            bit: b & 1,
            intensity_class: b >> 2,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = TxRecord> + '_ {
        (0..self.len()).map(move |i| self.get(i).unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub mu: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_pulses: u64,
    /// Pulse and link parameters. `signal.noise_rate_hz` is informational;
    /// the simulation uses the background/dark split below.
    pub signal: SignalModel,
    pub background_rate_hz: f64,
    pub dark_count_rate_hz: f64,
    pub e_sp: f64,
    pub e_pbs: f64,
    pub e_a: f64,
    /// Probability of choosing the X basis, shared by both ends.
    pub basis_bias_px: f64,
    /// Decoy schedule; empty means a single intensity at `signal.mu`.
    pub intensities: Vec<Intensity>,
    pub dead_time_ns: f64,
    pub block_pulses: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn schedule(&self) -> Vec<Intensity> {
        if self.intensities.is_empty() {
            vec![Intensity { mu: self.signal.mu, p: 1.0 }]
        } else {
            self.intensities.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses < 1 {
            return Err(Error::invalid("n_pulses must be >= 1"));
        }
        if self.block_pulses < 1 {
            return Err(Error::invalid("block_pulses must be >= 1"));
        }
        let schedule = self.schedule();
        if schedule.len() > 63 {
            return Err(Error::invalid("at most 63 intensity classes"));
        }
        let total: f64 = schedule.iter().map(|i| i.p).sum();
        if (total - 1.0).abs() > 1e-9 || schedule.iter().any(|i| !(i.p >= 0.0) || !(i.mu >= 0.0)) {
            return Err(Error::invalid(format!("intensity probabilities must be >= 0 and sum to 1, got {total}")));
        }
        if !(0.0..=1.0).contains(&self.basis_bias_px) {
            return Err(Error::invalid("basis_bias_px outside [0, 1]"));
        }
        if !(self.background_rate_hz >= 0.0 && self.dark_count_rate_hz >= 0.0) {
            return Err(Error::invalid("noise rates must be >= 0"));
        }
        if !(self.signal.rep_rate_hz > 0.0) {
            return Err(Error::invalid("rep_rate_hz must be > 0"));
        }
        qbermodel::intrinsic_qber(self.e_sp, self.e_pbs)?;
        qbermodel::external_qber(self.e_a, 0.0, 0.0)?;
        Ok(())
    }

    pub fn period_ps(&self) -> f64 {
        PS_PER_S / self.signal.rep_rate_hz
    }

    /// Error probability of a signal click measured in the matching basis.
    pub fn signal_error(&self) -> f64 {
        qbermodel::flip(qbermodel::flip(self.e_sp, self.e_pbs), self.e_a)
    }

    pub fn timing_sigma_ps(&self) -> f64 {
        qbermodel::timing_sigma_ns(self.signal.pulse_fwhm_ns, self.signal.timing_jitter_ns) * 1e3
    }

    fn n_blocks(&self) -> u64 {
        self.n_pulses.div_ceil(self.block_pulses)
    }

    fn block_range(&self, block: u64) -> (u64, u64) {
        let start = block * self.block_pulses;
        (start, (start + self.block_pulses).min(self.n_pulses))
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Tx = 1,
    Channel = 2,
    Distortion = 3,
}

fn block_rng(seed: u64, stream: Stream, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&block.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn pick_class(u: f64, cumulative: &[f64]) -> u8 {
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1) as u8
}

/// Draws basis, bit and intensity class for every pulse.
pub fn generate_tx_stream(config: &SimConfig, exec: Exec) -> Result<TxStream> {
    config.validate()?;
    let schedule = config.schedule();
    let cumulative: Vec<f64> = schedule
        .iter()
        .scan(0.0, |acc, i| {
            *acc += i.p;
            Some(*acc)
        })
        .collect();
    let px = config.basis_bias_px;

    let blocks = par::map_indexed(exec, config.n_blocks() as usize, |b| {
        let (start, end) = config.block_range(b as u64);
        let mut rng = block_rng(config.seed, Stream::Tx, b as u64);
        (start..end)
            .map(|_| {
                let basis = if rng.random_bool(px) { Basis::X } else { Basis::Z };
                let bit = u8::from(rng.random_bool(0.5));
                let class = pick_class(rng.random::<f64>(), &cumulative);
                TxStream::pack(basis, bit, class)
            })
            .collect::<Vec<u8>>()
    });
    Ok(TxStream { packed: blocks.concat() })
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Detections produced by the channel and receiver for a transmitted stream,
/// sorted by timestamp.
pub fn simulate_channel(tx: &TxStream, config: &SimConfig, exec: Exec) -> Result<Vec<DetectionRecord>> {
    config.validate()?;
    if tx.len() as u64 != config.n_pulses {
        return Err(Error::invalid(format!(
            "transmit log has {} pulses, config expects {}",
            tx.len(),
            config.n_pulses
        )));
    }
    let eta = config.signal.transmittance();
    if !eta.is_finite() {
        return Err(Error::invalid("total loss must be finite"));
    }
    // Poisson photon number thinned by η: at least one photon survives with
    // probability 1 - exp(-μη), and a non-resolving detector clicks once.
    let click_p: Vec<f64> = config.schedule().iter().map(|i| -(-i.mu * eta).exp_m1()).collect();
    let period = config.period_ps();
    let sigma = config.timing_sigma_ps();
    let jitter = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let e_sig = config.signal_error();
    let px = config.basis_bias_px;

    let blocks = par::map_indexed(exec, config.n_blocks() as usize, |b| {
        let (start, end) = config.block_range(b as u64);
        let mut rng = block_rng(config.seed, Stream::Channel, b as u64);
        let mut out = Vec::new();
        for i in start..end {
            let rec = tx.packed[i as usize];
            let p = click_p[(rec >> 2) as usize];
            if p <= 0.0 || rng.random::<f64>() >= p {
                continue;
            }
            let t = i as f64 * period + jitter.sample(&mut rng);
            let tx_basis = if rec & 2 != 0 { Basis::X } else { Basis::Z };
            let rx_basis = if rng.random_bool(px) { Basis::X } else { Basis::Z };
            let bit = if rx_basis == tx_basis {
                (rec & 1) ^ u8::from(rng.random_bool(e_sig))
            } else {
                u8::from(rng.random_bool(0.5))
            };
            out.push(DetectionRecord {
                timestamp_ps: t.round() as i64,
                detector: Detector::for_measurement(rx_basis, bit),
                origin: Origin::Signal,
            });
        }

        // Noise windows tile the time axis around each slot centre.
        let t0 = (start as f64 - 0.5) * period;
        let span = (end - start) as f64 * period;
        for (rate, origin) in [
            (config.background_rate_hz, Origin::Background),
            (config.dark_count_rate_hz, Origin::Dark),
        ] {
            let n = poisson_count(&mut rng, rate * span / PS_PER_S);
            for _ in 0..n {
                let t = t0 + rng.random::<f64>() * span;
                out.push(DetectionRecord {
                    timestamp_ps: t.round() as i64,
                    detector: Detector::QUANTUM[rng.random_range(0..4)],
                    origin,
                });
            }
        }
        out
    });

    let mut records = blocks.concat();
    par::sort_by_key(exec, &mut records, |r| *r);
    if config.dead_time_ns > 0.0 {
        records = apply_dead_time(&records, config.dead_time_ns * 1e3);
    }
    Ok(records)
}

/// Drops clicks arriving within `dead_time_ps` of the previous kept click on
/// the same detector. Input must be time-sorted.
pub fn apply_dead_time(records: &[DetectionRecord], dead_time_ps: f64) -> Vec<DetectionRecord> {
    let mut last: [Option<i64>; 5] = [None; 5];
    records
        .iter()
        .filter(|r| {
            let slot = &mut last[r.detector as usize];
            match *slot {
                Some(prev) if ((r.timestamp_ps - prev) as f64) < dead_time_ps => false,
                _ => {
                    *slot = Some(r.timestamp_ps);
                    true
                }
            }
        })
        .copied()
        .collect()
}

/// Transmitter log plus sorted detections for one simulated block.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub tx: TxStream,
    pub detections: Vec<DetectionRecord>,
}

pub fn simulate(config: &SimConfig, exec: Exec) -> Result<SimOutput> {
    let tx = generate_tx_stream(config, exec)?;
    let detections = simulate_channel(&tx, config, exec)?;
    Ok(SimOutput { tx, detections })
}

/// Maps true time onto a receiver clock: `offset + t·(1 + drift)` plus
/// Gaussian jitter. Record order is preserved, so the output may need
/// re-sorting when jitter exceeds the spacing between events.
pub fn apply_clock_distortion(
    records: &[DetectionRecord],
    drift: f64,
    offset_ps: f64,
    jitter_ps: f64,
    seed: u64,
) -> Result<Vec<DetectionRecord>> {
    if drift.abs() > 1e-4 {
        return Err(Error::invalid(format!("|drift| {drift} exceeds 100 ppm")));
    }
    let times: Vec<f64> = records.iter().map(|r| r.timestamp_ps as f64).collect();
    let distorted = distort_times(&times, drift, offset_ps, jitter_ps, seed)?;
    Ok(records
        .iter()
        .zip(distorted)
        .map(|(r, t)| DetectionRecord { timestamp_ps: t.round() as i64, ..*r })
        .collect())
}

/// Same mapping on raw timestamps in picoseconds.
pub fn distort_times(times_ps: &[f64], drift: f64, offset_ps: f64, jitter_ps: f64, seed: u64) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0, jitter_ps.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = block_rng(seed, Stream::Distortion, 0);
    Ok(times_ps
        .iter()
        .map(|&t| {
            let j = if jitter_ps > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            offset_ps + t * (1.0 + drift) + j
        })
        .collect())
}

pub fn write_events(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "timestamp_ps,detector,origin")?;
        for r in records {
            writeln!(w, "{},{},{}", r.timestamp_ps, r.detector, r.origin)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(i, l)| !(*i == 1 && l.as_ref().is_ok_and(|s| s.starts_with(|c: char| c.is_ascii_alphabetic())))))
}

pub fn read_events(path: &Path) -> Result<Vec<DetectionRecord>> {
    let parse_err = |line, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut out = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, d, o] = fields[..] else {
            return Err(parse_err(line_no, format!("expected 3 fields, got {}", fields.len())));
        };
        out.push(DetectionRecord {
            timestamp_ps: t.parse().map_err(|e| parse_err(line_no, format!("{e}")))?,
            detector: d.parse().map_err(|e| parse_err(line_no, e))?,
            origin: o.parse().map_err(|e| parse_err(line_no, e))?,
        });
    }
    Ok(out)
}

pub fn write_tx(path: &Path, tx: &TxStream) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "index,basis,bit,class")?;
        for r in tx.iter() {
            writeln!(w, "{},{:?},{},{}", r.pulse_index, r.basis, r.bit, r.intensity_class)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_tx(path: &Path) -> Result<TxStream> {
    let parse_err = |line, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut records = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [i, b, bit, class] = fields[..] else {
            return Err(parse_err(line_no, format!("expected 4 fields, got {}", fields.len())));
        };
        let index: u64 = i.parse().map_err(|e| parse_err(line_no, format!("{e}")))?;
        if index != records.len() as u64 {
            return Err(parse_err(line_no, format!("index {index} out of sequence")));
        }
        let basis = match b {
            "Z" => Basis::Z,
            "X" => Basis::X,
            other => return Err(parse_err(line_no, format!("unknown basis `{other}`"))),
        };
        records.push(TxRecord {
            pulse_index: index,
            basis,
            bit: bit.parse().map_err(|e| parse_err(line_no, format!("{e}")))?,
            intensity_class: class.parse().map_err(|e| parse_err(line_no, format!("{e}")))?,
        });
    }
    Ok(TxStream::from_records(&records))
}
