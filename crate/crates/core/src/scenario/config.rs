//! TOML experiment configuration.
//!
//! Powers are written in dBm and angles in degrees; everything is converted
//! to SI units when the [`Scenario`] is built.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{dbm_to_watts, Area, Pos, RfParams, Scenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub selection: SelectionConfig,
    pub solver: SolverConfig,
    pub harness: HarnessConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario: ScenarioConfig::default(),
            selection: SelectionConfig::default(),
            solver: SolverConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds the scenario; random layouts draw from `self.seed`.
    pub fn build_scenario(&self) -> Result<Scenario> {
        self.scenario.build(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `[x_min, y_min, x_max, y_max]` in meters.
    pub area: [f64; 4],
    pub carrier_freq_hz: f64,
    pub tx_power_dbm: f64,
    pub phase_offset_deg: f64,
    /// Argument of the unit-modulus pilot symbol.
    pub pilot_phase_deg: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub bandwidth_hz: f64,
    pub noise_temp_k: f64,
    /// Replaces the thermal noise floor when present.
    pub noise_power_dbm: Option<f64>,
    pub aps: ApLayoutConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area: [-10.0, -10.0, 10.0, 10.0],
            carrier_freq_hz: 3.5e9,
            tx_power_dbm: 5.0,
            phase_offset_deg: 10.0,
            pilot_phase_deg: 0.0,
            tx_gain: 1.0,
            rx_gain: 1.0,
            bandwidth_hz: 120e3,
            noise_temp_k: 290.0,
            noise_power_dbm: None,
            aps: ApLayoutConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn area(&self) -> Result<Area> {
        let [x0, y0, x1, y1] = self.area;
        Area::new(x0, y0, x1, y1)
    }

    pub fn rf(&self) -> RfParams {
        RfParams {
            carrier_freq: self.carrier_freq_hz,
            tx_power: dbm_to_watts(self.tx_power_dbm),
            phase_offset: self.phase_offset_deg.to_radians(),
            pilot: Complex64::from_polar(1.0, self.pilot_phase_deg.to_radians()),
            tx_gain: self.tx_gain,
            rx_gain: self.rx_gain,
            bandwidth: self.bandwidth_hz,
            noise_temp: self.noise_temp_k,
            noise_power: self.noise_power_dbm.map(dbm_to_watts),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Scenario> {
        let area = self.area()?;
        let rf = self.rf();
        match &self.aps {
            ApLayoutConfig::Random { count } => Scenario::random(*count, area, rf, seed),
            ApLayoutConfig::Grid { spacing_m } => Scenario::new(area.grid_sites(*spacing_m)?, area, rf),
            ApLayoutConfig::Explicit { positions } => {
                Scenario::new(positions.iter().map(|p| Pos::new(p[0], p[1])).collect(), area, rf)
            }
        }
    }
}

/// How AP positions are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase", deny_unknown_fields)]
pub enum ApLayoutConfig {
    /// Uniform over the area, drawn from the config seed.
    Random { count: usize },
    /// One AP at the center of every `spacing_m` square of the area.
    Grid { spacing_m: f64 },
    Explicit { positions: Vec<[f64; 2]> },
}

impl Default for ApLayoutConfig {
    fn default() -> Self {
        ApLayoutConfig::Random { count: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Collinearity tolerance for triplet filtering.
    pub epsilon_deg: f64,
    /// Distance threshold for triplets and AP pairs.
    pub gamma_m: f64,
    /// PEB threshold for coverage; one wavelength when absent.
    pub coverage_threshold_m: Option<f64>,
    /// UE grid used when scoring triplet coverage.
    pub grid_res_m: f64,
    /// Angular tolerance for flagging high-error candidates.
    pub high_error_tol_deg: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            epsilon_deg: 10.0,
            gamma_m: 15.0,
            coverage_threshold_m: None,
            grid_res_m: 0.5,
            high_error_tol_deg: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gd_max_iters: usize,
    /// Initial line-search step; a tenth of a wavelength when absent.
    pub gd_step_init_m: Option<f64>,
    pub gd_shrink: f64,
    pub gd_grad_tol: f64,
    pub gd_step_tol_m: f64,
    pub newton_max_iters: usize,
    pub newton_tol_m: f64,
    /// Candidates farther than this outside the area are dropped.
    pub candidate_margin_m: f64,
    /// EGS grid resolution in wavelengths.
    pub egs_k: f64,
    /// Resolution of the EGS fallback used when no candidate survives.
    pub fallback_k: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gd_max_iters: 100,
            gd_step_init_m: None,
            gd_shrink: 0.5,
            gd_grad_tol: 1e-9,
            gd_step_tol_m: 1e-12,
            newton_max_iters: 30,
            newton_tol_m: 1e-8,
            candidate_margin_m: 2.0,
            egs_k: 0.1,
            fallback_k: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub map_grid_res_m: f64,
    pub map_trials: usize,
    pub curve_trials: usize,
    pub powers_dbm: Vec<f64>,
    pub ue: [f64; 2],
    /// Spacing of candidate AP sites in the trade-off study.
    pub ap_site_spacing_m: f64,
    /// UE grid for trade-off coverage scoring.
    pub tradeoff_grid_res_m: f64,
    /// Sparse UE grid for trade-off runtime and evaluation counts.
    pub tradeoff_ue_res_m: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            map_grid_res_m: 0.25,
            map_trials: 20,
            curve_trials: 200,
            powers_dbm: vec![-30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0],
            ue: [1.0, 2.0],
            ap_site_spacing_m: 2.5,
            tradeoff_grid_res_m: 1.0,
            tradeoff_ue_res_m: 5.0,
        }
    }
}
