//! Experiment driver: RMSE and PEB maps, RMSE against transmit power,
//! coverage statistics, the coverage/complexity trade-off study and export.

mod render;
mod tradeoff;

use std::io::{Read, Write};

pub use render::{render_heatmap, render_png, render_svg, ColorScale};
pub use tradeoff::{
    spearman, tradeoff_study, write_tradeoff_csv, TradeoffMethod, TradeoffPoint, TradeoffSettings, TradeoffStudy,
};

use crate::channel::{observe, observe_noiseless};
use crate::error::{Error, Result};
use crate::exec;
use crate::fim::{efim_full, efim_quadruplet_ref, efim_triplet, efim_two_pairs, peb_full};
use crate::pipeline::{Estimator, PipelineConfig};
use crate::scenario::{Config, Pos, Scenario, SeededRng};
use crate::selection::{cell_centers, select_polo2, select_strategy1, select_strategy2, Strategy2Params};

/// Estimation method, including the triplet selection rule for POLO-I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Polo1S1,
    Polo1S2,
    Polo2,
    Egs,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Polo1S1 => "polo1-s1",
            Method::Polo1S2 => "polo1-s2",
            Method::Polo2 => "polo2",
            Method::Egs => "egs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "polo1-s1" | "s1" => Ok(Method::Polo1S1),
            "polo1" | "polo1-s2" | "s2" => Ok(Method::Polo1S2),
            "polo2" => Ok(Method::Polo2),
            "egs" => Ok(Method::Egs),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// AP-selection parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSettings {
    pub strategy2: Strategy2Params,
    /// Bound on the mean intra-pair distance for POLO-II, meters.
    pub polo2_gamma: f64,
}

impl SelectionSettings {
    pub fn for_scenario(sc: &Scenario) -> Self {
        Self {
            strategy2: Strategy2Params {
                epsilon_deg: 10.0,
                gamma: 15.0,
                coverage_threshold: sc.wavelength(),
                grid_res: 0.5,
            },
            polo2_gamma: 15.0,
        }
    }

    pub fn from_config(cfg: &Config, sc: &Scenario) -> Self {
        let s = &cfg.selection;
        Self {
            strategy2: Strategy2Params {
                epsilon_deg: s.epsilon_deg,
                gamma: s.gamma_m,
                coverage_threshold: s.coverage_threshold_m.unwrap_or(sc.wavelength()),
                grid_res: s.grid_res_m,
            },
            polo2_gamma: s.gamma_m,
        }
    }
}

/// Runs AP selection for `method` and binds the result to an estimator.
pub fn resolve_estimator(method: Method, sc: &Scenario, sel: &SelectionSettings) -> Result<Estimator> {
    Ok(match method {
        Method::Polo1S1 => Estimator::Polo1(select_strategy1(sc)?),
        Method::Polo1S2 => Estimator::Polo1(select_strategy2(sc, &sel.strategy2)?),
        Method::Polo2 => Estimator::Polo2(select_polo2(sc, sel.polo2_gamma)?),
        Method::Egs => Estimator::Egs(None),
    })
}

/// What produced a map, enough to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct MapMeta {
    pub scenario_hash: u64,
    pub method: String,
    pub trials: usize,
    pub seed: u64,
    pub grid_res: f64,
}

/// Per-cell values over a UE grid. `+inf` marks cells without a finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub cells: Vec<Pos>,
    pub values: Vec<f64>,
    /// CSV column name of the values, with unit suffix.
    pub value_name: String,
    pub meta: MapMeta,
}

impl MapResult {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Writes `x_m,y_m,<value_name>` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_m", "y_m", self.value_name.as_str()])?;
        for (c, v) in self.cells.iter().zip(&self.values) {
            w.write_record([c.x.to_string(), c.y.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a map written by [`Self::write_csv`]; metadata is not stored in
    /// the CSV and comes back empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.len() != 3 || &headers[0] != "x_m" || &headers[1] != "y_m" {
            return Err(Error::Config("map CSV needs columns x_m,y_m,<value>".into()));
        }
        let mut cells = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {:?}: {e}", &rec[i])))
            };
            cells.push(Pos::new(parse(0)?, parse(1)?));
            values.push(parse(2)?);
        }
        Ok(Self {
            cells,
            values,
            value_name: headers[2].to_string(),
            meta: MapMeta { scenario_hash: 0, method: String::new(), trials: 0, seed: 0, grid_res: 0.0 },
        })
    }

    pub fn write_meta<W: Write>(&self, mut out: W) -> Result<()> {
        let m = &self.meta;
        writeln!(out, "scenario_hash = \"{:016x}\"", m.scenario_hash)?;
        writeln!(out, "method = \"{}\"", m.method)?;
        writeln!(out, "trials = {}", m.trials)?;
        writeln!(out, "seed = {}", m.seed)?;
        writeln!(out, "grid_res_m = {}", m.grid_res)?;
        Ok(())
    }
}

/// Root-mean-square position error of `estimator` at every cell center of
/// the scenario area, over `trials` independent noise draws per cell.
/// With `noiseless`, each trial sees the noise-free observation.
#[allow(clippy::too_many_arguments)]
pub fn rmse_map(
    sc: &Scenario,
    estimator: &Estimator,
    grid_res: f64,
    trials: usize,
    seed: u64,
    cfg: &PipelineConfig,
    noiseless: bool,
    method_name: &str,
) -> Result<MapResult> {
    if trials == 0 {
        return Err(Error::domain("an RMSE map needs at least one trial"));
    }
    let cells = cell_centers(&sc.area(), grid_res, sc)?;
    let sq_errors = exec::map_indexed(cells.len() * trials, |k| -> Result<f64> {
        let (cell, trial) = (k / trials, k % trials);
        let u = cells[cell];
        let obs = if noiseless {
            observe_noiseless(&u, sc)?
        } else {
            observe(&u, sc, &mut SeededRng::for_task(seed, &[cell as u64, trial as u64]))?
        };
        let rep = estimator.estimate(&obs, sc, cfg)?;
        Ok((rep.estimate - u).norm_squared())
    });
    let mut values = vec![0.0; cells.len()];
    for (k, e) in sq_errors.into_iter().enumerate() {
        values[k / trials] += e?;
    }
    for v in values.iter_mut() {
        *v = (*v / trials as f64).sqrt();
    }
    Ok(MapResult {
        cells,
        values,
        value_name: "rmse_m".into(),
        meta: MapMeta {
            scenario_hash: sc.fingerprint(),
            method: method_name.to_string(),
            trials,
            seed,
            grid_res,
        },
    })
}

/// Which information matrix a PEB map evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PebVariant {
    Triplet([usize; 3]),
    TwoPairs([(usize, usize); 2]),
    QuadRef([usize; 4]),
    Full,
}

impl PebVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PebVariant::Triplet(_) => "triplet",
            PebVariant::TwoPairs(_) => "two_pairs",
            PebVariant::QuadRef(_) => "quad_ref",
            PebVariant::Full => "full",
        }
    }

    pub fn peb(&self, u: &Pos, sc: &Scenario) -> Result<f64> {
        Ok(match self {
            PebVariant::Triplet(t) => efim_triplet(u, *t, sc)?.peb,
            PebVariant::TwoPairs(p) => efim_two_pairs(u, *p, sc)?.peb,
            PebVariant::QuadRef(q) => efim_quadruplet_ref(u, *q, sc)?.peb,
            PebVariant::Full => efim_full(u, sc)?.peb,
        })
    }
}

/// PEB at every cell center of the scenario area.
pub fn peb_map(sc: &Scenario, variant: PebVariant, grid_res: f64) -> Result<MapResult> {
    let cells = cell_centers(&sc.area(), grid_res, sc)?;
    let values = exec::map_indexed(cells.len(), |i| variant.peb(&cells[i], sc)).into_iter().collect::<Result<_>>()?;
    Ok(MapResult {
        cells,
        values,
        value_name: "peb_m".into(),
        meta: MapMeta {
            scenario_hash: sc.fingerprint(),
            method: variant.name().to_string(),
            trials: 0,
            seed: 0,
            grid_res,
        },
    })
}

/// Fraction of cells whose value is strictly below `threshold`; infinite
/// cells count in the denominator.
pub fn coverage_fraction(map: &MapResult, threshold: f64) -> f64 {
    if map.values.is_empty() {
        return 0.0;
    }
    map.values.iter().filter(|v| **v < threshold).count() as f64 / map.values.len() as f64
}

/// Empirical CDF over the finite values: `(v, fraction of cells <= v)` at
/// each distinct finite value, ascending.
pub fn coverage_cdf(map: &MapResult) -> Result<Vec<(f64, f64)>> {
    if map.values.is_empty() {
        return Err(Error::domain("coverage CDF of an empty map"));
    }
    let n = map.values.len() as f64;
    let mut finite: Vec<f64> = map.values.iter().copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in finite.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

pub fn write_cdf_csv<W: Write>(cdf: &[(f64, f64)], value_name: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([value_name, "fraction"])?;
    for (v, f) in cdf {
        w.write_record([v.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the RMSE-against-power table.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub method: String,
    pub power_dbm: f64,
    pub rmse_m: f64,
    pub peb_m: f64,
}

/// RMSE of each estimator at a fixed UE for every transmit power, next to
/// the all-AP PEB. Trial `t` at power index `p` draws its noise from the
/// same stream for every method.
pub fn rmse_vs_power(
    sc: &Scenario,
    methods: &[(String, Estimator)],
    powers_dbm: &[f64],
    ue: &Pos,
    trials: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<Vec<PowerRow>> {
    if trials < 50 {
        return Err(Error::domain(format!("RMSE curves need at least 50 trials, got {trials}")));
    }
    let mut rows = Vec::new();
    for (pi, &p) in powers_dbm.iter().enumerate() {
        let sc_p = sc.with_tx_power_dbm(p)?;
        let peb = peb_full(ue, &sc_p)?;
        for (name, est) in methods {
            let errs = exec::map_indexed(trials, |t| -> Result<f64> {
                let mut rng = SeededRng::for_task(seed, &[pi as u64, t as u64]);
                let obs = observe(ue, &sc_p, &mut rng)?;
                Ok((est.estimate(&obs, &sc_p, cfg)?.estimate - ue).norm_squared())
            });
            let mut sum = 0.0;
            for e in errs {
                sum += e?;
            }
            rows.push(PowerRow {
                method: name.clone(),
                power_dbm: p,
                rmse_m: (sum / trials as f64).sqrt(),
                peb_m: peb,
            });
        }
    }
    Ok(rows)
}

/// Writes `method,power_dbm,rmse_m,peb_m` rows.
pub fn write_power_csv<W: Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "power_dbm", "rmse_m", "peb_m"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.power_dbm.to_string(), r.rmse_m.to_string(), r.peb_m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
