//! End-to-end estimators: candidate generation from hyperbola intersections,
//! ML scoring with all APs, and gradient refinement. EGS goes through the
//! same scoring path with a dense grid as its candidate set.

use std::time::Instant;

use crate::channel::Observation;
use crate::error::{Error, Result};
use crate::exec;
use crate::fim::{high_error_membership, DEFAULT_HIGH_ERROR_TOL_DEG};
use crate::hyperbola::{
    branches_for_pair, intersect_common_focus, intersect_disjoint_pairs, refine_least_squares, Candidate,
    CandidateSet, CandidateSource, HyperbolaBranch, NewtonConfig,
};
use crate::mle::{argmin_over_candidates, egs_estimate_in, refine_gd, CostField, EgsGrid, GdConfig, GdOutcome};
use crate::scenario::{Area, Config, Pos, Scenario};
use crate::selection::{QuadChoice, TripletChoice};

/// Solver settings shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub gd: GdConfig,
    pub newton: NewtonConfig,
    /// Candidates farther than this outside the area are discarded, meters.
    pub candidate_margin: f64,
    /// EGS resolution in wavelengths.
    pub egs_k: f64,
    /// Resolution of the EGS fallback when no candidate survives.
    pub fallback_k: f64,
    /// Angular tolerance of the high-error test, degrees.
    pub high_error_tol_deg: f64,
    /// Run the least-squares refinement of high-error POLO-II candidates.
    pub polo2_step2: bool,
}

impl PipelineConfig {
    pub fn for_scenario(sc: &Scenario) -> Self {
        Self {
            gd: GdConfig::for_wavelength(sc.wavelength()),
            newton: NewtonConfig::default(),
            candidate_margin: 2.0,
            egs_k: 0.1,
            fallback_k: 1.0,
            high_error_tol_deg: DEFAULT_HIGH_ERROR_TOL_DEG,
            polo2_step2: true,
        }
    }

    pub fn from_config(cfg: &Config, sc: &Scenario) -> Result<Self> {
        let s = &cfg.solver;
        let gd = GdConfig {
            max_iters: s.gd_max_iters,
            step_init: s.gd_step_init_m.unwrap_or(sc.wavelength() / 10.0),
            shrink_factor: s.gd_shrink,
            grad_tol: s.gd_grad_tol,
            step_tol: s.gd_step_tol_m,
        };
        gd.validate()?;
        let newton = NewtonConfig { max_iters: s.newton_max_iters, tol: s.newton_tol_m, ..NewtonConfig::default() };
        let out = Self {
            gd,
            newton,
            candidate_margin: s.candidate_margin_m,
            egs_k: s.egs_k,
            fallback_k: s.fallback_k,
            high_error_tol_deg: cfg.selection.high_error_tol_deg,
            polo2_step2: true,
        };
        if !(out.candidate_margin >= 0.0 && out.newton.max_iters > 0 && out.newton.tol > 0.0) {
            return Err(Error::Config("invalid solver settings".into()));
        }
        Ok(out)
    }
}

/// What one estimator call produced and what it cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub estimate: Pos,
    /// Best candidate before gradient refinement.
    pub initial: Pos,
    pub initial_cost: f64,
    pub cost: f64,
    /// ML cost evaluations spent on candidate scoring.
    pub ml_evals: usize,
    /// Calls into a hyperbola intersection routine.
    pub intersection_calls: usize,
    /// Candidates replaced by their least-squares refinement.
    pub refined_candidates: usize,
    /// Seconds spent on candidate generation, scoring and refinement.
    pub wall_time: f64,
    /// No candidate survived and a coarse grid search was used instead.
    pub fallback: bool,
    pub gd: GdOutcome,
}

/// An estimator bound to its AP subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Polo1(TripletChoice),
    Polo2(QuadChoice),
    /// Grid search over the given area, or the scenario area.
    Egs(Option<Area>),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Polo1(_) => "polo1",
            Estimator::Polo2(_) => "polo2",
            Estimator::Egs(_) => "egs",
        }
    }

    pub fn estimate(&self, obs: &Observation, sc: &Scenario, cfg: &PipelineConfig) -> Result<EstimateReport> {
        match self {
            Estimator::Polo1(t) => polo1_estimate(obs, t, sc, cfg),
            Estimator::Polo2(q) => polo2_estimate(obs, q, sc, cfg),
            Estimator::Egs(area) => egs_report(obs, sc, area.unwrap_or_else(|| sc.area()), cfg.egs_k, cfg),
        }
    }
}

/// Scores `candidates` with the full ML cost, refines the best one, and
/// falls back to a coarse grid search when the set is empty.
pub fn estimate_from_candidates(
    field: &CostField<'_>,
    candidates: &[Pos],
    cfg: &PipelineConfig,
) -> Result<EstimateReport> {
    if candidates.is_empty() {
        let sc = field.scenario();
        let egs = egs_estimate_in(field, sc.area(), cfg.fallback_k, &cfg.gd)?;
        return Ok(EstimateReport {
            estimate: egs.estimate,
            initial: egs.grid_best,
            initial_cost: egs.grid_cost,
            cost: egs.gd.cost,
            ml_evals: egs.eval_count,
            intersection_calls: 0,
            refined_candidates: 0,
            wall_time: 0.0,
            fallback: true,
            gd: egs.gd,
        });
    }
    let (_, initial, initial_cost) = argmin_over_candidates(candidates, field)?;
    let gd = refine_gd(initial, field, &cfg.gd);
    Ok(EstimateReport {
        estimate: gd.point,
        initial,
        initial_cost,
        cost: gd.cost,
        ml_evals: candidates.len(),
        intersection_calls: 0,
        refined_candidates: 0,
        wall_time: 0.0,
        fallback: false,
        gd,
    })
}

/// Intersects every branch of `first` with every branch of `second`,
/// keeping points within the candidate margin of the area.
fn intersect_families<F>(
    first: &[HyperbolaBranch],
    second: &[HyperbolaBranch],
    keep: &Area,
    source: CandidateSource,
    intersect: F,
) -> Result<(Vec<Candidate>, usize)>
where
    F: Fn(&HyperbolaBranch, &HyperbolaBranch) -> Result<crate::hyperbola::IntersectionOutcome> + Sync,
{
    let rows = exec::map_indexed(first.len(), |i| -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        for h2 in second {
            for p in intersect(&first[i], h2)?.points {
                if keep.contains(&p) {
                    out.push(Candidate { pos: p, z: (first[i].ambiguity, h2.ambiguity), source });
                }
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in rows {
        all.extend(r?);
    }
    Ok((all, first.len() * second.len()))
}

/// Closed-form candidates of a triplet: intersections of the `(r, s1)` and
/// `(r, s2)` branch families. Returns the set and the number of
/// intersection calls.
pub fn polo1_candidates(
    obs: &Observation,
    triplet: &TripletChoice,
    sc: &Scenario,
    cfg: &PipelineConfig,
) -> Result<(CandidateSet, usize)> {
    let [r, s1, s2] = triplet.indices();
    let f1 = branches_for_pair(obs, r, s1, sc)?;
    let f2 = branches_for_pair(obs, r, s2, sc)?;
    let keep = sc.area().expanded(cfg.candidate_margin);
    let (candidates, calls) =
        intersect_families(&f1, &f2, &keep, CandidateSource::ClosedForm, intersect_common_focus)?;
    Ok((CandidateSet { candidates }, calls))
}

pub fn polo1_estimate(
    obs: &Observation,
    triplet: &TripletChoice,
    sc: &Scenario,
    cfg: &PipelineConfig,
) -> Result<EstimateReport> {
    let start = Instant::now();
    let field = CostField::new(obs, sc)?;
    let (set, calls) = polo1_candidates(obs, triplet, sc, cfg)?;
    let mut report = estimate_from_candidates(&field, &set.points(), cfg)?;
    report.intersection_calls = calls;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// POLO-II candidates: numeric intersections of the two pair families
/// (step 1), then least-squares refinement of the candidates that sit in a
/// high-error region (step 2, when enabled). Returns the set, the number of
/// intersection calls and the number of refined candidates.
pub fn polo2_candidates(
    obs: &Observation,
    quad: &QuadChoice,
    sc: &Scenario,
    cfg: &PipelineConfig,
) -> Result<(CandidateSet, usize, usize)> {
    let (a1, b1) = quad.pair1;
    let (a2, b2) = quad.pair2;
    let f1 = branches_for_pair(obs, a1, b1, sc)?;
    let f2 = branches_for_pair(obs, a2, b2, sc)?;
    let area = sc.area();
    let keep = area.expanded(cfg.candidate_margin);
    let (mut candidates, calls) = intersect_families(&f1, &f2, &keep, CandidateSource::Numeric, |a, b| {
        intersect_disjoint_pairs(a, b, &area, &cfg.newton)
    })?;

    let mut refined = 0;
    if cfg.polo2_step2 {
        let pairs = quad.pairs();
        let quad_idx = quad.indices();
        let updates = exec::map_indexed(candidates.len(), |i| -> Result<Option<Pos>> {
            let u = candidates[i].pos;
            if !high_error_membership(&u, pairs, sc, cfg.high_error_tol_deg)? {
                return Ok(None);
            }
            let out = refine_least_squares(&u, obs, quad_idx, sc)?;
            Ok((out.refined && keep.contains(&out.point)).then_some(out.point))
        });
        for (c, up) in candidates.iter_mut().zip(updates) {
            // a candidate on top of an AP cannot be tested; keep it as is
            if let Ok(Some(p)) = up {
                c.pos = p;
                c.source = CandidateSource::Refined;
                refined += 1;
            }
        }
    }
    Ok((CandidateSet { candidates }, calls, refined))
}

pub fn polo2_estimate(
    obs: &Observation,
    quad: &QuadChoice,
    sc: &Scenario,
    cfg: &PipelineConfig,
) -> Result<EstimateReport> {
    let start = Instant::now();
    let field = CostField::new(obs, sc)?;
    let (set, calls, refined) = polo2_candidates(obs, quad, sc, cfg)?;
    let mut report = estimate_from_candidates(&field, &set.points(), cfg)?;
    report.intersection_calls = calls;
    report.refined_candidates = refined;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Exhaustive grid search over `area` at `k` wavelengths, reported in the
/// same shape as the POLO estimators.
pub fn egs_report(obs: &Observation, sc: &Scenario, area: Area, k: f64, cfg: &PipelineConfig) -> Result<EstimateReport> {
    let start = Instant::now();
    let field = CostField::new(obs, sc)?;
    let egs = egs_estimate_in(&field, area, k, &cfg.gd)?;
    Ok(EstimateReport {
        estimate: egs.estimate,
        initial: egs.grid_best,
        initial_cost: egs.grid_cost,
        cost: egs.gd.cost,
        ml_evals: egs.eval_count,
        intersection_calls: 0,
        refined_candidates: 0,
        wall_time: start.elapsed().as_secs_f64(),
        fallback: false,
        gd: egs.gd,
    })
}

/// Number of grid points EGS evaluates over `area` at `k` wavelengths.
pub fn egs_eval_count(area: &Area, k: f64, sc: &Scenario) -> Result<usize> {
    Ok(EgsGrid::new(*area, k * sc.wavelength())?.count())
}
