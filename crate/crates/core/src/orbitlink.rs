//! Satellite pass geometry and the downlink optical loss budget.
//!
//! The pass is a circular orbit crossing directly over the ground station;
//! Earth rotation and inclination are ignored. Beam spreading follows the
//! diffraction-limited Gaussian model: a 1/e² half-angle divergence sets the
//! footprint radius at the receiver, and the receiver collects the fraction of
//! the Gaussian intensity that falls inside its aperture.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT_KM_S};

/// Standard gravitational parameter of the Earth, km³/s².
pub const EARTH_GM_KM3_S2: f64 = 398_600.441_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub altitude_km: f64,
    pub earth_radius_km: f64,
    pub min_elevation_deg: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self { altitude_km: 500.0, earth_radius_km: 6371.0, min_elevation_deg: 10.0 }
    }
}

impl OrbitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.altitude_km > 0.0) {
            return Err(Error::invalid(format!("altitude_km must be > 0, got {}", self.altitude_km)));
        }
        if !(self.earth_radius_km > 0.0) {
            return Err(Error::invalid("earth_radius_km must be > 0"));
        }
        if !(self.min_elevation_deg > 0.0 && self.min_elevation_deg < 90.0) {
            return Err(Error::invalid(format!(
                "min_elevation_deg must be in (0, 90), got {}",
                self.min_elevation_deg
            )));
        }
        Ok(())
    }

    fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.altitude_km
    }

    /// Orbital angular rate in rad/s for a circular orbit.
    pub fn angular_rate(&self) -> f64 {
        (EARTH_GM_KM3_S2 / self.orbit_radius_km().powi(3)).sqrt()
    }

    /// Slant range and elevation when the satellite is `phi` radians of
    /// geocentric angle away from the zenith of the station.
    fn geometry_at_angle(&self, phi: f64) -> (f64, f64) {
        let r = self.orbit_radius_km();
        let re = self.earth_radius_km;
        let range = (r * r + re * re - 2.0 * r * re * phi.cos()).sqrt();
        let sin_el = ((r * phi.cos() - re) / range).clamp(-1.0, 1.0);
        (range, sin_el.asin().to_degrees())
    }

    fn range_at(&self, t: f64) -> f64 {
        self.geometry_at_angle(self.angular_rate() * t).0
    }
}

/// Geometry of the link at one instant of the pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassSample {
    /// Seconds from culmination.
    pub t: f64,
    pub elevation_deg: f64,
    pub slant_range_km: f64,
    /// Rate of change of slant range; negative while approaching.
    pub radial_velocity_km_s: f64,
}

/// Line-of-sight distance from the station to a satellite at `elevation_deg`.
pub fn slant_range(elevation_deg: f64, orbit: &OrbitConfig) -> Result<f64> {
    if !(0.0..=90.0).contains(&elevation_deg) {
        return Err(Error::invalid(format!("elevation {elevation_deg} outside [0, 90]")));
    }
    let re = orbit.earth_radius_km;
    let r = orbit.orbit_radius_km();
    let e = elevation_deg.to_radians();
    Ok((r * r - re * re * e.cos().powi(2)).sqrt() - re * e.sin())
}

/// Samples an overhead pass at `timestep_s`, symmetric about culmination and
/// clipped to the elevation mask.
pub fn pass_profile(orbit: &OrbitConfig, timestep_s: f64) -> Result<Vec<PassSample>> {
    orbit.validate()?;
    if !(timestep_s > 0.0) {
        return Err(Error::invalid(format!("timestep must be > 0, got {timestep_s}")));
    }
    let r = orbit.orbit_radius_km();
    let min_el = orbit.min_elevation_deg.to_radians();
    // Geocentric angle at which the satellite sits on the elevation mask.
    let phi_max = (orbit.earth_radius_km * min_el.cos() / r).acos() - min_el;
    let omega = orbit.angular_rate();
    let steps = (phi_max / omega / timestep_s).floor() as i64;

    let samples = (-steps..=steps)
        .map(|k| {
            let t = k as f64 * timestep_s;
            let (range, elevation) = orbit.geometry_at_angle(omega * t);
            let radial = (orbit.range_at(t + timestep_s) - orbit.range_at(t - timestep_s))
                / (2.0 * timestep_s);
            PassSample {
                t,
                elevation_deg: elevation,
                slant_range_km: range,
                radial_velocity_km_s: radial,
            }
        })
        .filter(|s| s.elevation_deg >= orbit.min_elevation_deg)
        .collect();
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub wavelength_nm: f64,
    pub waist_radius_mm: f64,
    pub m_squared: f64,
    /// When set, overrides the waist-derived divergence.
    pub divergence_half_angle_urad: Option<f64>,
    /// Treat `divergence_half_angle_urad` as a full angle and halve it.
    pub divergence_is_full_angle: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 785.0,
            waist_radius_mm: 25.0,
            m_squared: 1.0,
            divergence_half_angle_urad: None,
            divergence_is_full_angle: false,
        }
    }
}

impl BeamConfig {
    pub fn with_divergence_urad(wavelength_nm: f64, divergence_urad: f64) -> Self {
        Self {
            wavelength_nm,
            divergence_half_angle_urad: Some(divergence_urad),
            ..Self::default()
        }
    }

    /// Effective 1/e² half-angle divergence in radians.
    pub fn divergence_rad(&self) -> Result<f64> {
        if !(self.m_squared >= 1.0) {
            return Err(Error::invalid(format!("M² must be >= 1, got {}", self.m_squared)));
        }
        let theta = match self.divergence_half_angle_urad {
            Some(urad) => {
                let urad = if self.divergence_is_full_angle { urad / 2.0 } else { urad };
                urad * 1e-6
            }
            None => divergence_from_waist(self)?,
        };
        if !(theta > 0.0) {
            return Err(Error::invalid("divergence must be > 0"));
        }
        Ok(theta)
    }
}

/// Diffraction-limited 1/e² half-angle, λ·M²/(π·w₀), in radians.
pub fn divergence_from_waist(beam: &BeamConfig) -> Result<f64> {
    if !(beam.waist_radius_mm > 0.0) {
        return Err(Error::invalid(format!(
            "waist radius must be > 0, got {}",
            beam.waist_radius_mm
        )));
    }
    let lambda_m = beam.wavelength_nm * 1e-9;
    let w0_m = beam.waist_radius_mm * 1e-3;
    Ok(lambda_m / (std::f64::consts::PI * w0_m) * beam.m_squared)
}

/// Fraction of a centred Gaussian footprint collected by a circular aperture.
pub fn aperture_transmission(footprint_radius_m: f64, rx_diameter_m: f64) -> f64 {
    let x = rx_diameter_m * rx_diameter_m / (2.0 * footprint_radius_m * footprint_radius_m);
    -(-x).exp_m1()
}

/// Far-field approximation of [`aperture_transmission`], D²/(2R²).
pub fn aperture_transmission_far_field(footprint_radius_m: f64, rx_diameter_m: f64) -> f64 {
    rx_diameter_m * rx_diameter_m / (2.0 * footprint_radius_m * footprint_radius_m)
}

pub fn footprint_radius_m(divergence_half_angle_rad: f64, distance_km: f64) -> f64 {
    divergence_half_angle_rad.tan() * distance_km * 1e3
}

/// Geometric (beam-spreading) loss in dB.
pub fn geometric_loss_db(
    divergence_half_angle_rad: f64,
    distance_km: f64,
    rx_diameter_m: f64,
) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::invalid(format!("distance must be > 0, got {distance_km}")));
    }
    if !(divergence_half_angle_rad > 0.0) || !(rx_diameter_m > 0.0) {
        return Err(Error::invalid("divergence and aperture must be > 0"));
    }
    let r = footprint_radius_m(divergence_half_angle_rad, distance_km);
    Ok(-10.0 * aperture_transmission(r, rx_diameter_m).log10())
}

/// Atmospheric band with calibrated absorption anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Quantum785,
    Beacon905,
}

impl Band {
    /// (zenith, 10° elevation) absorption in dB.
    fn anchors_db(self) -> (f64, f64) {
        match self {
            Band::Quantum785 => (2.5, 7.9),
            Band::Beacon905 => (0.2, 7.9),
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Quantum785 => "quantum_785",
            Band::Beacon905 => "beacon_905",
        })
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum_785" | "785" => Ok(Band::Quantum785),
            "beacon_905" | "905" => Ok(Band::Beacon905),
            other => Err(Error::invalid(format!("unknown band `{other}`"))),
        }
    }
}

const ANCHOR_LOW_ELEVATION_DEG: f64 = 10.0;

pub fn airmass(elevation_deg: f64) -> f64 {
    1.0 / elevation_deg.to_radians().sin()
}

/// Absorption loss, linear in airmass between the zenith and 10° anchors and
/// clamped to the anchor values outside that span.
pub fn atmospheric_loss_db(elevation_deg: f64, band: Band) -> Result<f64> {
    if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
        return Err(Error::invalid(format!("elevation {elevation_deg} outside (0, 90]")));
    }
    let (zenith_db, low_db) = band.anchors_db();
    let am_low = airmass(ANCHOR_LOW_ELEVATION_DEG);
    let frac = ((airmass(elevation_deg) - 1.0) / (am_low - 1.0)).clamp(0.0, 1.0);
    Ok(zenith_db + (low_db - zenith_db) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Quantum,
    Beacon,
}

/// Named attenuation terms, all in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub tx_internal_db: f64,
    pub geometric_db: f64,
    pub turbulence_pointing_db: f64,
    pub atmospheric_db: f64,
    pub ogs_internal_db: f64,
    pub detector_efficiency_db: f64,
    pub channel_kind: ChannelKind,
}

impl LossBudget {
    fn terms(&self) -> [f64; 6] {
        [
            self.tx_internal_db,
            self.geometric_db,
            self.turbulence_pointing_db,
            self.atmospheric_db,
            self.ogs_internal_db,
            self.detector_efficiency_db,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms().iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid(format!("negative or NaN loss term in {self:?}")));
        }
        Ok(())
    }
}

pub fn total_loss_db(budget: &LossBudget) -> f64 {
    budget.terms().iter().sum()
}

/// Signed v/c for a radial velocity in km/s.
pub fn doppler_relative_shift(radial_velocity_km_s: f64) -> f64 {
    debug_assert!(radial_velocity_km_s.abs() < 30.0, "implausible radial velocity");
    radial_velocity_km_s / SPEED_OF_LIGHT_KM_S
}

/// Fixed loss terms of one optical channel; the geometric and atmospheric
/// terms are evaluated per pass sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelTerms {
    pub beam: BeamConfig,
    pub band: Band,
    pub tx_internal_db: f64,
    pub turbulence_pointing_db: f64,
    pub ogs_internal_db: f64,
    pub detector_efficiency_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub rx_diameter_m: f64,
    pub quantum: ChannelTerms,
    pub beacon: ChannelTerms,
}

impl Default for LinkConfig {
    /// The SPOQC downlink: 70 cm receiver, 10 µrad quantum and 18.7 µrad
    /// beacon divergence.
    fn default() -> Self {
        Self {
            rx_diameter_m: 0.7,
            quantum: ChannelTerms {
                beam: BeamConfig::with_divergence_urad(785.0, 10.0),
                band: Band::Quantum785,
                tx_internal_db: 0.0,
                turbulence_pointing_db: 3.0,
                ogs_internal_db: 3.8,
                detector_efficiency_db: 2.2,
            },
            beacon: ChannelTerms {
                beam: BeamConfig::with_divergence_urad(905.0, 18.7),
                band: Band::Beacon905,
                tx_internal_db: 3.0,
                turbulence_pointing_db: 3.0,
                ogs_internal_db: 3.0,
                detector_efficiency_db: 0.0,
            },
        }
    }
}

impl LinkConfig {
    pub fn channel(&self, kind: ChannelKind) -> &ChannelTerms {
        match kind {
            ChannelKind::Quantum => &self.quantum,
            ChannelKind::Beacon => &self.beacon,
        }
    }

    pub fn budget(&self, kind: ChannelKind, sample: &PassSample) -> Result<LossBudget> {
        let ch = self.channel(kind);
        let budget = LossBudget {
            tx_internal_db: ch.tx_internal_db,
            geometric_db: geometric_loss_db(
                ch.beam.divergence_rad()?,
                sample.slant_range_km,
                self.rx_diameter_m,
            )?,
            turbulence_pointing_db: ch.turbulence_pointing_db,
            atmospheric_db: atmospheric_loss_db(sample.elevation_deg, ch.band)?,
            ogs_internal_db: ch.ogs_internal_db,
            detector_efficiency_db: ch.detector_efficiency_db,
            channel_kind: kind,
        };
        budget.validate()?;
        Ok(budget)
    }
}
