//! Compressed maximum-likelihood cost, candidate scoring, exhaustive grid
//! search and gradient-descent refinement.
//!
//! Amplitudes and the UE phase offset are eliminated in closed form, which
//! leaves a cost that depends on position only:
//! `C(u) = -|sum_m (y_m^*)^2 s exp(-j 4 pi d_m(u) / lambda)|`.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use num_complex::Complex64;

use crate::channel::Observation;
use crate::error::{Error, Result};
use crate::exec;
use crate::scenario::{Area, Pos, Scenario};

/// Armijo sufficient-decrease constant.
const ARMIJO_C1: f64 = 1e-4;

/// Round to nearest (ties to even) for `|v| < 2^51`, using only additions so
/// that it vectorizes on baseline SSE2.
#[inline(always)]
fn round_small(v: f64) -> f64 {
    const MAGIC: f64 = 6755399441055744.0; // 1.5 * 2^52
    (v + MAGIC) - MAGIC
}

#[inline(always)]
fn sin_cos_reduced(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let sin = x * (1.0
        + x2 * (-1.0 / 6.0
            + x2 * (1.0 / 120.0
                + x2 * (-1.0 / 5040.0
                    + x2 * (1.0 / 362880.0
                        + x2 * (-1.0 / 39916800.0 + x2 * (1.0 / 6227020800.0 + x2 * (-1.0 / 1307674368000.0))))))));
    let cos = 1.0
        + x2 * (-0.5
            + x2 * (1.0 / 24.0
                + x2 * (-1.0 / 720.0
                    + x2 * (1.0 / 40320.0
                        + x2 * (-1.0 / 3628800.0
                            + x2 * (1.0 / 479001600.0
                                + x2 * (-1.0 / 87178291200.0 + x2 * (1.0 / 20922789888000.0))))))));
    (sin, cos)
}

/// `(sin, cos)` of `2 pi cycles`. The argument is reduced to the nearest
/// quarter cycle and the quadrant is applied with selects instead of
/// branches, so loops over many points vectorize.
#[inline(always)]
fn sin_cos_cycles(cycles: f64) -> (f64, f64) {
    let q = round_small(cycles * 4.0);
    let (s0, c0) = sin_cos_reduced(TAU * (cycles - 0.25 * q));
    let quadrant = q - 4.0 * round_small(0.25 * q - 0.375);
    let odd = quadrant == 1.0 || quadrant == 3.0;
    let (s, c) = if odd { (c0, s0) } else { (s0, c0) };
    let s = if quadrant >= 2.0 { -s } else { s };
    let c = if quadrant == 1.0 || quadrant == 2.0 { -c } else { c };
    (s, c)
}

/// `exp(-j 2 pi cycles)`.
#[inline]
pub(crate) fn phasor(cycles: f64) -> Complex64 {
    let (s, c) = sin_cos_cycles(cycles);
    Complex64::new(c, -s)
}

/// Result of the closed-form phase-offset estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOffsetEstimate {
    pub radians: f64,
    /// The coherent sum vanished, so any offset is optimal.
    pub degenerate: bool,
}

/// The ML cost for one observation, ready to be evaluated anywhere.
#[derive(Debug, Clone)]
pub struct CostField<'a> {
    sc: &'a Scenario,
    terms: Vec<Complex64>,
    inv_half_wavelength: f64,
}

impl<'a> CostField<'a> {
    pub fn new(obs: &Observation, sc: &'a Scenario) -> Result<Self> {
        if obs.len() != sc.num_aps() {
            return Err(Error::domain(format!(
                "observation has {} samples for {} APs",
                obs.len(),
                sc.num_aps()
            )));
        }
        Ok(Self {
            sc,
            terms: Self::compute_terms(obs, sc),
            inv_half_wavelength: 2.0 / sc.wavelength(),
        })
    }

    /// `(y_m^*)^2 s` for every AP.
    pub fn compute_terms(obs: &Observation, sc: &Scenario) -> Vec<Complex64> {
        obs.samples().iter().map(|y| y.conj() * y.conj() * sc.pilot()).collect()
    }

    pub fn terms(&self) -> &[Complex64] {
        &self.terms
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.sc
    }

    /// `sum_m t_m exp(-j 4 pi d_m(u) / lambda)`.
    pub fn coherent_sum(&self, u: &Pos) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, t) in self.sc.ap_positions().iter().zip(&self.terms) {
            let (dx, dy) = (u.x - p.x, u.y - p.y);
            let d = (dx * dx + dy * dy).sqrt();
            acc += t * phasor(d * self.inv_half_wavelength);
        }
        acc
    }

    pub fn phase_offset_hat(&self, u: &Pos) -> PhaseOffsetEstimate {
        let s = self.coherent_sum(u);
        if s.norm_sqr() == 0.0 {
            return PhaseOffsetEstimate { radians: 0.0, degenerate: true };
        }
        PhaseOffsetEstimate { radians: -0.5 * s.arg(), degenerate: false }
    }

    /// `C` at `(x_min + i h, y)` for every `i < out.len()`, with `x` clamped
    /// to `x_max`. Same values as [`Self::cost`] up to rounding.
    pub fn row_costs(&self, y: f64, x_min: f64, h: f64, x_max: f64, out: &mut [f64]) {
        let xs: Vec<f64> = (0..out.len()).map(|i| (x_min + i as f64 * h).min(x_max)).collect();
        let ys = vec![y; out.len()];
        self.costs_into(&xs, &ys, out);
    }

    /// `C` at every point, in order.
    pub fn costs_at(&self, points: &[Pos]) -> Vec<f64> {
        const CHUNK: usize = 512;
        let chunks = exec::map_indexed(points.len().div_ceil(CHUNK), |c| {
            let pts = &points[c * CHUNK..((c + 1) * CHUNK).min(points.len())];
            let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
            let mut out = vec![0.0; pts.len()];
            self.costs_into(&xs, &ys, &mut out);
            out
        });
        chunks.concat()
    }

    /// Structure-of-arrays kernel behind [`Self::row_costs`] and
    /// [`Self::costs_at`]; the inner loop is branch-free so it vectorizes.
    fn costs_into(&self, xs: &[f64], ys: &[f64], out: &mut [f64]) {
        let n = out.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for (p, t) in self.sc.ap_positions().iter().zip(&self.terms) {
            let (tr, ti) = (t.re, t.im);
            for (((x, y), r), m) in xs.iter().zip(ys).zip(re.iter_mut()).zip(im.iter_mut()) {
                let (dx, dy) = (x - p.x, y - p.y);
                let (s, c) = sin_cos_cycles((dx * dx + dy * dy).sqrt() * self.inv_half_wavelength);
                // t * (c - j s)
                *r += tr * c + ti * s;
                *m += ti * c - tr * s;
            }
        }
        for ((o, r), m) in out.iter_mut().zip(&re).zip(&im) {
            *o = -(r * r + m * m).sqrt();
        }
    }

    /// `C(u)`, evaluated as `-|coherent_sum(u)|`.
    pub fn cost(&self, u: &Pos) -> f64 {
        -self.coherent_sum(u).norm()
    }

    /// `C(u)` through the explicit phase-offset substitution
    /// `-Re{exp(j 2 phi_hat) sum}`. Agrees with [`Self::cost`] up to rounding.
    pub fn cost_with_phase_offset(&self, u: &Pos) -> f64 {
        let s = self.coherent_sum(u);
        let phi = self.phase_offset_hat(u).radians;
        -(Complex64::from_polar(1.0, 2.0 * phi) * s).re
    }

    /// Cost and its analytic gradient with respect to `u`.
    pub fn cost_and_gradient(&self, u: &Pos) -> (f64, Vector2<f64>) {
        let k = 2.0 * TAU / self.sc.wavelength();
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = [Complex64::new(0.0, 0.0); 2];
        for (p, t) in self.sc.ap_positions().iter().zip(&self.terms) {
            let (dx, dy) = (u.x - p.x, u.y - p.y);
            let d = (dx * dx + dy * dy).sqrt();
            let term = t * phasor(d * self.inv_half_wavelength);
            s += term;
            if d > 0.0 {
                // d/du exp(-j k d) = -j k exp(-j k d) (u - p) / d
                let g = term * Complex64::new(0.0, -k / d);
                ds[0] += g * dx;
                ds[1] += g * dy;
            }
        }
        let mag = s.norm();
        if mag == 0.0 {
            return (0.0, Vector2::zeros());
        }
        let grad = Vector2::new(
            -(s.conj() * ds[0]).re / mag,
            -(s.conj() * ds[1]).re / mag,
        );
        (-mag, grad)
    }
}

/// Index, position and cost of the best candidate. Ties go to the lowest index.
pub fn argmin_over_candidates(cands: &[Pos], field: &CostField<'_>) -> Result<(usize, Pos, f64)> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let costs = field.costs_at(cands);
    let i = exec::argmin_by_key(&costs).ok_or(Error::EmptyCandidates)?;
    Ok((i, cands[i], costs[i]))
}

/// Gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub max_iters: usize,
    /// Upper bound on the length of a trial step, meters.
    pub step_init: f64,
    pub shrink_factor: f64,
    /// Stop when `|grad C| <= grad_tol * |C|`.
    pub grad_tol: f64,
    /// Stop once the backtracked step drops below this length, meters.
    pub step_tol: f64,
}

impl GdConfig {
    pub fn for_wavelength(wavelength: f64) -> Self {
        Self {
            max_iters: 100,
            step_init: wavelength / 10.0,
            shrink_factor: 0.5,
            grad_tol: 1e-9,
            step_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters >= 1
            && self.shrink_factor > 0.0
            && self.shrink_factor < 1.0
            && self.step_init > 0.0
            && self.grad_tol > 0.0
            && self.step_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid gradient-descent settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOutcome {
    pub point: Pos,
    pub cost: f64,
    pub iterations: usize,
    pub cost_evals: usize,
    /// False when the iteration budget ran out first.
    pub converged: bool,
}

/// Steepest descent on `C(u)` with Armijo backtracking.
///
/// Each trial step starts from the Barzilai-Borwein length (capped by
/// `step_init`) and is shrunk until sufficient decrease. Only decreasing steps
/// are accepted, so the returned cost never exceeds the cost at `u0`.
pub fn refine_gd(u0: Pos, field: &CostField<'_>, cfg: &GdConfig) -> GdOutcome {
    let mut u = u0;
    let (mut c, mut g) = field.cost_and_gradient(&u);
    let mut evals = 1;
    let mut trial_len = cfg.step_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let gn = g.norm();
        if gn == 0.0 || gn <= cfg.grad_tol * c.abs() {
            converged = true;
            break;
        }
        let dir = -g / gn;
        let mut alpha = trial_len.min(cfg.step_init);
        let accepted = loop {
            let cand = u + dir * alpha;
            let ct = field.cost(&cand);
            evals += 1;
            if ct <= c - ARMIJO_C1 * alpha * gn {
                break Some((cand, ct));
            }
            alpha *= cfg.shrink_factor;
            if alpha < cfg.step_tol {
                break None;
            }
        };
        iterations += 1;
        let Some((next, _)) = accepted else {
            converged = true;
            break;
        };
        let (cn, gnext) = field.cost_and_gradient(&next);
        evals += 1;
        let s = next - u;
        let y = gnext - g;
        let sy = s.dot(&y);
        trial_len = if sy > 0.0 { s.norm_squared() / sy * gnext.norm() } else { cfg.step_init };
        u = next;
        c = cn;
        g = gnext;
    }
    GdOutcome { point: u, cost: c, iterations, cost_evals: evals, converged }
}

/// Regular grid anchored at the lower-left corner of an area, with both edges
/// included: `ceil(W / h) + 1` points per axis, the last one clamped to the
/// upper edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgsGrid {
    pub area: Area,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl EgsGrid {
    pub fn new(area: Area, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::domain(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            area,
            spacing,
            nx: Self::points_per_axis(area.width(), spacing),
            ny: Self::points_per_axis(area.height(), spacing),
        })
    }

    fn points_per_axis(extent: f64, spacing: f64) -> usize {
        // the epsilon keeps exact multiples like 1.0 / 0.1 from gaining a point
        (extent / spacing - 1e-9).ceil().max(0.0) as usize + 1
    }

    pub fn count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn point(&self, i: usize, j: usize) -> Pos {
        Pos::new(
            (self.area.x_min + i as f64 * self.spacing).min(self.area.x_max),
            (self.area.y_min + j as f64 * self.spacing).min(self.area.y_max),
        )
    }

    /// All points, row-major (x fastest).
    pub fn points(&self) -> Vec<Pos> {
        (0..self.ny).flat_map(|j| (0..self.nx).map(move |i| self.point(i, j))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgsOutcome {
    pub estimate: Pos,
    pub grid_best: Pos,
    pub grid_cost: f64,
    /// Cost evaluations spent on the grid.
    pub eval_count: usize,
    pub gd: GdOutcome,
}

/// Exhaustive grid search over the scenario area at spacing `k * lambda`,
/// followed by gradient refinement of the best grid point.
pub fn egs_estimate(field: &CostField<'_>, resolution_k: f64, gd: &GdConfig) -> Result<EgsOutcome> {
    egs_estimate_in(field, field.scenario().area(), resolution_k, gd)
}

/// As [`egs_estimate`] over an arbitrary search area.
pub fn egs_estimate_in(
    field: &CostField<'_>,
    area: Area,
    resolution_k: f64,
    gd: &GdConfig,
) -> Result<EgsOutcome> {
    if !(resolution_k > 0.0 && resolution_k <= 1.0) {
        return Err(Error::domain(format!("grid resolution k must lie in (0, 1], got {resolution_k}")));
    }
    let grid = EgsGrid::new(area, resolution_k * field.scenario().wavelength())?;
    let rows = exec::map_indexed(grid.ny, |j| {
        let mut costs = vec![0.0; grid.nx];
        let y = grid.point(0, j).y;
        field.row_costs(y, area.x_min, grid.spacing, area.x_max, &mut costs);
        let mut best = (f64::INFINITY, 0usize);
        for (i, &c) in costs.iter().enumerate() {
            if c < best.0 {
                best = (c, i);
            }
        }
        best
    });
    // rows are scanned in order and a row only wins on strict improvement,
    // so ties resolve to the lowest row-major index
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (j, &(c, i)) in rows.iter().enumerate() {
        if c < best.0 {
            best = (c, i, j);
        }
    }
    let grid_best = grid.point(best.1, best.2);
    let gd_out = refine_gd(grid_best, field, gd);
    Ok(EgsOutcome {
        estimate: gd_out.point,
        grid_best,
        grid_cost: best.0,
        eval_count: grid.count(),
        gd: gd_out,
    })
}
