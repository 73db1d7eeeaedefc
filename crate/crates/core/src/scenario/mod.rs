//! Physical constants, deployment geometry and seeded randomness.

mod config;
mod rng;

pub use config::{ApLayoutConfig, Config, HarnessConfig, ScenarioConfig, SelectionConfig, SolverConfig};
pub use rng::SeededRng;

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2D position in meters.
pub type Pos = Vector2<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant in J/K, at the precision used for the reference noise floor.
pub const BOLTZMANN: f64 = 1.38e-23;

/// Tolerance on |s| - 1 for the pilot symbol.
const PILOT_MODULUS_TOL: f64 = 1e-12;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Thermal noise power `k_B * T * W` in watts.
pub fn thermal_noise_power(bandwidth: f64, temp: f64) -> Result<f64> {
    if !(bandwidth > 0.0) || !(temp > 0.0) {
        return Err(Error::domain(format!(
            "thermal noise needs positive bandwidth and temperature (got {bandwidth} Hz, {temp} K)"
        )));
    }
    Ok(BOLTZMANN * temp * bandwidth)
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Area {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(Error::Scenario(format!(
                "degenerate area [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// A `width` x `height` rectangle centered on the origin.
    pub fn centered(width: f64, height: f64) -> Result<Self> {
        Self::new(-width / 2.0, -height / 2.0, width / 2.0, height / 2.0)
    }

    /// A `width` x `height` rectangle centered on `c`.
    pub fn around(c: Pos, width: f64, height: f64) -> Result<Self> {
        Self::new(c.x - width / 2.0, c.y - height / 2.0, c.x + width / 2.0, c.y + height / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn size(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Pos {
        Pos::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn contains(&self, p: &Pos) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    pub fn contains_with_margin(&self, p: &Pos, margin: f64) -> bool {
        p.x >= self.x_min - margin
            && p.x <= self.x_max + margin
            && p.y >= self.y_min - margin
            && p.y <= self.y_max + margin
    }

    pub fn expanded(&self, margin: f64) -> Area {
        Area {
            x_min: self.x_min - margin,
            y_min: self.y_min - margin,
            x_max: self.x_max + margin,
            y_max: self.y_max + margin,
        }
    }

    /// Corners in counter-clockwise order starting at the lower-left one.
    pub fn corners(&self) -> [Pos; 4] {
        [
            Pos::new(self.x_min, self.y_min),
            Pos::new(self.x_max, self.y_min),
            Pos::new(self.x_max, self.y_max),
            Pos::new(self.x_min, self.y_max),
        ]
    }

    /// Centers of a regular `spacing` grid tiling the area, row-major from the
    /// lower-left corner. Used for candidate AP sites.
    pub fn grid_sites(&self, spacing: f64) -> Result<Vec<Pos>> {
        if !(spacing > 0.0) {
            return Err(Error::Scenario(format!("grid spacing must be positive, got {spacing}")));
        }
        let nx = (self.width() / spacing).round().max(1.0) as usize;
        let ny = (self.height() / spacing).round().max(1.0) as usize;
        let (dx, dy) = (self.width() / nx as f64, self.height() / ny as f64);
        let mut sites = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                sites.push(Pos::new(
                    self.x_min + (i as f64 + 0.5) * dx,
                    self.y_min + (j as f64 + 0.5) * dy,
                ));
            }
        }
        Ok(sites)
    }
}

/// Radio parameters of a scenario, in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub carrier_freq: f64,
    pub tx_power: f64,
    pub phase_offset: f64,
    pub pilot: Complex64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub bandwidth: f64,
    pub noise_temp: f64,
    /// Overrides the thermal noise floor when set.
    pub noise_power: Option<f64>,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            carrier_freq: 3.5e9,
            tx_power: dbm_to_watts(5.0),
            phase_offset: 10f64.to_radians(),
            pilot: Complex64::new(1.0, 0.0),
            tx_gain: 1.0,
            rx_gain: 1.0,
            bandwidth: 120e3,
            noise_temp: 290.0,
            noise_power: None,
        }
    }
}

/// The simulated world: AP layout, coverage area and radio constants.
///
/// Immutable once built; derive variants with the `with_*` methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    ap_positions: Vec<Pos>,
    area: Area,
    wavelength: f64,
    carrier_freq: f64,
    tx_power: f64,
    phase_offset: f64,
    pilot: Complex64,
    tx_gain: f64,
    rx_gain: f64,
    noise_power: f64,
    bandwidth: f64,
    noise_temp: f64,
}

impl Scenario {
    pub fn new(ap_positions: Vec<Pos>, area: Area, rf: RfParams) -> Result<Self> {
        if ap_positions.len() < 3 {
            return Err(Error::Scenario(format!(
                "at least 3 APs are required, got {}",
                ap_positions.len()
            )));
        }
        for (i, p) in ap_positions.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) || !area.contains(p) {
                return Err(Error::Scenario(format!("AP {i} at ({}, {}) lies outside the area", p.x, p.y)));
            }
            if let Some(j) = ap_positions[..i].iter().position(|q| q == p) {
                return Err(Error::Scenario(format!("APs {j} and {i} coincide")));
            }
        }
        if ((rf.pilot.norm() - 1.0).abs()) > PILOT_MODULUS_TOL {
            return Err(Error::Scenario(format!("pilot must have unit modulus, |s| = {}", rf.pilot.norm())));
        }
        if !(rf.carrier_freq > 0.0) || !(rf.tx_power > 0.0) {
            return Err(Error::Scenario("carrier frequency and transmit power must be positive".into()));
        }
        if !(rf.tx_gain > 0.0) || !(rf.rx_gain > 0.0) {
            return Err(Error::Scenario("antenna gains must be positive".into()));
        }
        let noise_power = match rf.noise_power {
            Some(p) => p,
            None => thermal_noise_power(rf.bandwidth, rf.noise_temp)?,
        };
        if !(noise_power > 0.0) {
            return Err(Error::Scenario(format!("noise power must be positive, got {noise_power}")));
        }
        Ok(Self {
            ap_positions,
            area,
            wavelength: SPEED_OF_LIGHT / rf.carrier_freq,
            carrier_freq: rf.carrier_freq,
            tx_power: rf.tx_power,
            phase_offset: rf.phase_offset,
            pilot: rf.pilot,
            tx_gain: rf.tx_gain,
            rx_gain: rf.rx_gain,
            noise_power,
            bandwidth: rf.bandwidth,
            noise_temp: rf.noise_temp,
        })
    }

    /// `count` APs drawn uniformly over `area` from stream 0 of `seed`.
    pub fn random(count: usize, area: Area, rf: RfParams, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed, 0);
        let aps = (0..count)
            .map(|_| Pos::new(rng.uniform(area.x_min, area.x_max), rng.uniform(area.y_min, area.y_max)))
            .collect();
        Self::new(aps, area, rf)
    }

    pub fn rf(&self) -> RfParams {
        RfParams {
            carrier_freq: self.carrier_freq,
            tx_power: self.tx_power,
            phase_offset: self.phase_offset,
            pilot: self.pilot,
            tx_gain: self.tx_gain,
            rx_gain: self.rx_gain,
            bandwidth: self.bandwidth,
            noise_temp: self.noise_temp,
            noise_power: Some(self.noise_power),
        }
    }

    pub fn with_tx_power(&self, watts: f64) -> Result<Self> {
        let mut rf = self.rf();
        rf.tx_power = watts;
        Self::new(self.ap_positions.clone(), self.area, rf)
    }

    pub fn with_tx_power_dbm(&self, dbm: f64) -> Result<Self> {
        self.with_tx_power(dbm_to_watts(dbm))
    }

    pub fn with_noise_power(&self, watts: f64) -> Result<Self> {
        let mut rf = self.rf();
        rf.noise_power = Some(watts);
        Self::new(self.ap_positions.clone(), self.area, rf)
    }

    pub fn with_phase_offset(&self, radians: f64) -> Result<Self> {
        let mut rf = self.rf();
        rf.phase_offset = radians;
        Self::new(self.ap_positions.clone(), self.area, rf)
    }

    pub fn with_aps(&self, aps: Vec<Pos>) -> Result<Self> {
        Self::new(aps, self.area, self.rf())
    }

    pub fn with_area(&self, area: Area) -> Result<Self> {
        Self::new(self.ap_positions.clone(), area, self.rf())
    }

    pub fn ap_positions(&self) -> &[Pos] {
        &self.ap_positions
    }

    pub fn ap(&self, m: usize) -> Pos {
        self.ap_positions[m]
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn carrier_freq(&self) -> f64 {
        self.carrier_freq
    }

    pub fn tx_power(&self) -> f64 {
        self.tx_power
    }

    pub fn phase_offset(&self) -> f64 {
        self.phase_offset
    }

    pub fn pilot(&self) -> Complex64 {
        self.pilot
    }

    pub fn tx_gain(&self) -> f64 {
        self.tx_gain
    }

    pub fn rx_gain(&self) -> f64 {
        self.rx_gain
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn noise_temp(&self) -> f64 {
        self.noise_temp
    }

    /// Stable 64-bit fingerprint of every field, for run metadata.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the IEEE bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.ap_positions {
            eat(p.x);
            eat(p.y);
        }
        for v in [
            self.area.x_min,
            self.area.y_min,
            self.area.x_max,
            self.area.y_max,
            self.carrier_freq,
            self.tx_power,
            self.phase_offset,
            self.pilot.re,
            self.pilot.im,
            self.tx_gain,
            self.rx_gain,
            self.noise_power,
            self.bandwidth,
            self.noise_temp,
        ] {
            eat(v);
        }
        h
    }
}

/// Reference deployment: 20 APs uniform over a 20 m x 20 m area centered on
/// the origin, 3.5 GHz carrier, 5 dBm, 10 degree phase offset, unit gains and
/// a 120 kHz / 290 K thermal noise floor.
pub fn default_scenario(seed: u64) -> Scenario {
    let area = Area::centered(20.0, 20.0).expect("static area");
    Scenario::random(20, area, RfParams::default(), seed).expect("default scenario is valid")
}
