//! Differential-phase hyperbolas, integer-ambiguity enumeration and
//! hyperbola intersection.
//!
//! A branch is the signed range-difference constraint
//! `|focus_a - u| - |focus_b - u| = offset`. Two branches sharing `focus_a`
//! intersect in closed form; branches over four distinct foci are intersected
//! with a damped Newton iteration on the unsquared residuals, which keeps the
//! branch sign and so never produces mirror-branch roots.

use std::f64::consts::TAU;
use std::io::Write;

use arrayvec::ArrayVec;
use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};

use crate::channel::{wrap_phase, Observation};
use crate::error::{Error, Result};
use crate::scenario::{Area, Pos, Scenario};

/// Residual tolerance for admitting a closed-form root, meters.
pub const CLOSED_FORM_RESIDUAL_TOL: f64 = 1e-6;

/// `|‖beta‖^2 - 1|` below which the quadratic is solved as a linear equation.
const LINEAR_QUADRATIC_TOL: f64 = 1e-12;

/// Roots returned by an intersection routine.
pub type Roots = ArrayVec<Pos, 2>;

/// One member of a differential-phase hyperbola family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolaBranch {
    pub focus_a: Pos,
    pub focus_b: Pos,
    /// Signed range difference `d_a - d_b`, meters.
    pub offset: f64,
    /// Integer ambiguity that produced `offset`.
    pub ambiguity: i64,
}

impl HyperbolaBranch {
    pub fn new(focus_a: Pos, focus_b: Pos, offset: f64) -> Self {
        Self { focus_a, focus_b, offset, ambiguity: 0 }
    }

    pub fn focal_distance(&self) -> f64 {
        (self.focus_a - self.focus_b).norm()
    }

    /// A branch exists iff `|offset|` is strictly below the focal distance.
    pub fn is_feasible(&self) -> bool {
        self.offset.abs() < self.focal_distance()
    }

    /// `|focus_a - u| - |focus_b - u| - offset`.
    pub fn residual(&self, u: &Pos) -> f64 {
        (self.focus_a - u).norm() - (self.focus_b - u).norm() - self.offset
    }

    pub fn gradient(&self, u: &Pos) -> Vector2<f64> {
        unit(u - self.focus_a) - unit(u - self.focus_b)
    }

    /// Point of the branch seen from `focus_a` at angle `psi` from the
    /// direction of `focus_b`, or `None` outside the open arc
    /// `L cos(psi) > offset` where the branch exists.
    ///
    /// Substituting `u = a + r e` into the branch equation leaves
    /// `r = (L^2 - offset^2) / (2 (L cos(psi) - offset))`.
    pub fn polar_point(&self, psi: f64) -> Option<Pos> {
        let ab = self.focus_b - self.focus_a;
        let l = ab.norm();
        let denom = 2.0 * (l * psi.cos() - self.offset);
        if !(l > 0.0 && denom > 0.0) {
            return None;
        }
        let w = ab / l;
        let (s, c) = psi.sin_cos();
        let e = Vector2::new(c * w.x - s * w.y, s * w.x + c * w.y);
        Some(self.focus_a + e * ((l * l - self.offset * self.offset) / denom))
    }

    /// Half-width of the angular range, around the direction of `focus_b`,
    /// over which [`Self::polar_point`] stays within `radius` of `focus_a`.
    pub fn polar_half_width(&self, radius: f64) -> f64 {
        let l = self.focal_distance();
        if l == 0.0 {
            return 0.0;
        }
        let k = (l * l - self.offset * self.offset) / (2.0 * radius);
        ((self.offset + k) / l).clamp(-1.0, 1.0).acos()
    }
}

fn unit(v: Vector2<f64>) -> Vector2<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vector2::zeros()
    }
}

/// Symmetric range of differential integer ambiguities for one AP pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmbiguityRange {
    pub z_min: i64,
    pub z_max: i64,
}

impl AmbiguityRange {
    pub fn values(&self) -> impl Iterator<Item = i64> {
        self.z_min..=self.z_max
    }

    pub fn len(&self) -> usize {
        (self.z_max - self.z_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `z_max = round(|p_a - p_b| / lambda)`, `z_min = -z_max`.
pub fn ambiguity_range(p_a: &Pos, p_b: &Pos, wavelength: f64) -> Result<AmbiguityRange> {
    let d = (p_a - p_b).norm();
    if d == 0.0 {
        return Err(Error::domain("ambiguity range of coincident APs"));
    }
    let z_max = (d / wavelength).round() as i64;
    Ok(AmbiguityRange { z_min: -z_max, z_max })
}

/// `(lambda / 2pi) * wrap(r_a - r_b)`, in `[0, lambda)`.
///
/// With the phase model `r = -2pi d / lambda - phi + 2pi z`, this is
/// congruent to `d_b - d_a` modulo one wavelength.
pub fn differential_phase(obs: &Observation, a: usize, b: usize, wavelength: f64) -> f64 {
    let r = obs.phases();
    wavelength / TAU * wrap_phase(r[a] - r[b])
}

/// All feasible branches `d_a - d_b = offset` for the AP pair `(a, b)`,
/// in ascending ambiguity order.
///
/// The base offset lies in `[0, lambda)`, so the symmetric ambiguity range
/// is extended by one at the top: `z_max + 1` is the only value that can
/// reach offsets near `-|p_a - p_b|`, and it is dropped when infeasible.
pub fn branches_for_pair(obs: &Observation, a: usize, b: usize, sc: &Scenario) -> Result<Vec<HyperbolaBranch>> {
    if a == b {
        return Err(Error::domain("a hyperbola needs two distinct APs"));
    }
    let lam = sc.wavelength();
    let (pa, pb) = (sc.ap(a), sc.ap(b));
    let base = differential_phase(obs, b, a, lam);
    let range = ambiguity_range(&pa, &pb, lam)?;
    Ok((range.z_min..=range.z_max + 1)
        .map(|z| HyperbolaBranch { focus_a: pa, focus_b: pb, offset: base - z as f64 * lam, ambiguity: z })
        .filter(HyperbolaBranch::is_feasible)
        .collect())
}

/// Intersection points plus a flag for rank-deficient geometry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntersectionOutcome {
    pub points: Roots,
    pub degenerate: bool,
}

/// Real roots of `a t^2 + b t + c = 0`; linear when `|a|` is negligible.
fn quadratic_roots(a: f64, b: f64, c: f64) -> ArrayVec<f64, 2> {
    let mut out = ArrayVec::new();
    if a.abs() < LINEAR_QUADRATIC_TOL {
        if b != 0.0 {
            out.push(-c / b);
        }
        return out;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return out;
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    if q != 0.0 {
        out.push(q / a);
        out.push(c / q);
    } else {
        out.push(-b / (2.0 * a));
    }
    out
}

/// Newton polish on the unsquared residuals. Returns the improved point,
/// or the input when no step reduces the residual.
fn polish(u: Pos, h1: &HyperbolaBranch, h2: &HyperbolaBranch, iters: usize) -> Pos {
    let mut best = u;
    let mut best_res = h1.residual(&u).abs().max(h2.residual(&u).abs());
    for _ in 0..iters {
        let j = Matrix2::from_rows(&[h1.gradient(&best).transpose(), h2.gradient(&best).transpose()]);
        let f = Vector2::new(h1.residual(&best), h2.residual(&best));
        let Some(inv) = j.try_inverse() else { break };
        let next = best - inv * f;
        let res = h1.residual(&next).abs().max(h2.residual(&next).abs());
        if !(res < best_res) {
            break;
        }
        best = next;
        best_res = res;
    }
    best
}

/// Closed-form intersection of two branches sharing `focus_a` (the
/// reference AP), admitting roots whose signed residuals are within `tol`.
///
/// Works in coordinates relative to the reference, `p~_i = p_r - p_si` and
/// `u~ = p_r - u`, where each branch reads `c_i = v_i |u~| + p~_i . u~` with
/// `v_i = -offset_i`. Solving the linear part for `u~ = alpha - beta |u~|`
/// leaves a quadratic in `|u~|`.
pub fn intersect_common_focus_with(h1: &HyperbolaBranch, h2: &HyperbolaBranch, tol: f64) -> Result<IntersectionOutcome> {
    if h1.focus_a != h2.focus_a {
        return Err(Error::domain("common-focus intersection needs a shared reference focus"));
    }
    let pr = h1.focus_a;
    let (pt1, pt2) = (pr - h1.focus_b, pr - h2.focus_b);
    let (v1, v2) = (-h1.offset, -h2.offset);
    let scale = pt1.norm() * pt2.norm();
    if scale == 0.0 {
        return Err(Error::domain("secondary focus coincides with the reference"));
    }
    let c = Vector2::new(0.5 * (pt1.norm_squared() - v1 * v1), 0.5 * (pt2.norm_squared() - v2 * v2));
    let b = Matrix2::from_rows(&[pt1.transpose(), pt2.transpose()]);

    let mut points = Roots::new();
    let mut admit = |raw: Pos| {
        let res = h1.residual(&raw).abs().max(h2.residual(&raw).abs());
        // only near-roots are polished; spurious mirror roots must stay put
        let u = if res < 1e3 * tol { polish(raw, h1, h2, 3) } else { raw };
        if h1.residual(&u).abs() <= tol
            && h2.residual(&u).abs() <= tol
            && !points.iter().any(|q: &Pos| (q - u).norm() < 1e-9)
        {
            points.push(u);
        }
    };

    if b.determinant().abs() <= 1e-12 * scale {
        // Foci on one line through the reference. Along that line the
        // equations are linear in (e . u~, |u~|); the perpendicular part
        // follows from |u~| and gives a mirror pair.
        let e = pt1 / pt1.norm();
        let n = Vector2::new(-e.y, e.x);
        let (a1, a2) = (pt1.dot(&e), pt2.dot(&e));
        let m = Matrix2::new(a1, v1, a2, v2);
        if m.determinant().abs() <= 1e-12 * scale {
            return Ok(IntersectionOutcome { points, degenerate: true });
        }
        let sol = m.try_inverse().expect("determinant checked") * c;
        let (x, t) = (sol[0], sol[1]);
        if t >= 0.0 {
            let y2 = t * t - x * x;
            if y2 >= -tol * t.max(1.0) {
                let y = y2.max(0.0).sqrt();
                admit(pr - (e * x + n * y));
                admit(pr - (e * x - n * y));
            }
        }
        return Ok(IntersectionOutcome { points, degenerate: false });
    }

    let b_inv = b.try_inverse().expect("determinant checked");
    let alpha = b_inv * c;
    let beta = b_inv * Vector2::new(v1, v2);
    // |alpha - beta t|^2 = t^2
    for t in quadratic_roots(beta.norm_squared() - 1.0, -2.0 * alpha.dot(&beta), alpha.norm_squared()) {
        if t >= 0.0 {
            admit(pr - (alpha - beta * t));
        }
    }
    Ok(IntersectionOutcome { points, degenerate: false })
}

/// [`intersect_common_focus_with`] at the default residual tolerance.
pub fn intersect_common_focus(h1: &HyperbolaBranch, h2: &HyperbolaBranch) -> Result<IntersectionOutcome> {
    intersect_common_focus_with(h1, h2, CLOSED_FORM_RESIDUAL_TOL)
}

/// Settings for the numeric intersection of branches over disjoint AP pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Convergence threshold on both residuals, meters.
    pub tol: f64,
    /// Roots closer than this are merged, meters.
    pub dedupe: f64,
    /// Longest single Newton step, meters.
    pub max_step: f64,
    /// Seeds whose iterates stray this far outside the search area are abandoned.
    pub escape_margin: f64,
    /// Polar samples of the first branch scanned for seeds.
    pub scan_samples: usize,
    /// Scan gaps longer than 0.5 m are subdivided only within this margin
    /// around the search area, meters.
    pub fine_margin: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { max_iters: 30, tol: 1e-8, dedupe: 1e-4, max_step: 5.0, escape_margin: 10.0, scan_samples: 128, fine_margin: 2.0 }
    }
}

/// Deterministic Newton seeds from a scan of `h2`'s residual along `h1`.
/// `h1` is sampled at `samples` evenly spaced polar angles over the part of
/// its arc within reach of `bounds`. Every sign change is narrowed by a few
/// bisection steps in angle and its midpoint becomes a seed; a sample where
/// `|residual|` has a local minimum without a sign change, and is small
/// compared with the sample spacing, is a seed too (the branches may touch or
/// cross twice between samples). Inside `fine`, neighbouring samples are at
/// most 0.5 m apart.
pub fn disjoint_seeds(h1: &HyperbolaBranch, h2: &HyperbolaBranch, bounds: &Area, fine: &Area, samples: usize) -> Vec<Pos> {
    const BISECTIONS: usize = 6;
    const MAX_GAP: f64 = 0.5;
    const MAX_SUBDIVISIONS: usize = 64;
    let ab = h1.focus_b - h1.focus_a;
    let l = ab.norm();
    if l == 0.0 {
        return Vec::new();
    }
    let reach = bounds.corners().iter().map(|c| (c - h1.focus_a).norm()).fold(0.0, f64::max);
    let half = h1.polar_half_width(reach);
    let n = samples.max(3);
    let step = 2.0 * half / (n - 1) as f64;

    // the scan direction is advanced by a fixed rotation instead of
    // recomputing sin/cos at every sample
    let w = ab / l;
    let numer = l * l - h1.offset * h1.offset;
    let (s0, c0) = (-half).sin_cos();
    let mut e = Vector2::new(c0 * w.x - s0 * w.y, s0 * w.x + c0 * w.y);
    let (rs, rc) = step.sin_cos();
    let mut coarse: Vec<(f64, Option<(Pos, f64)>)> = Vec::with_capacity(n);
    for i in 0..n {
        let denom = 2.0 * (l * e.dot(&w) - h1.offset);
        let psi = -half + i as f64 * step;
        coarse.push((psi, (denom > 0.0).then(|| {
            let p = h1.focus_a + e * (numer / denom);
            (p, h2.residual(&p))
        })));
        e = Vector2::new(rc * e.x - rs * e.y, rs * e.x + rc * e.y);
    }

    // near the asymptotes equal angle steps cover metres of branch, enough
    // to hide a pair of close crossings, so long gaps are subdivided
    let mut scan: Vec<(f64, Option<(Pos, f64)>)> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            if let (Some((pa, _)), Some((pb, _))) = (coarse[i - 1].1, coarse[i].1) {
                let overlaps = pa.x.min(pb.x) <= fine.x_max
                    && pa.x.max(pb.x) >= fine.x_min
                    && pa.y.min(pb.y) <= fine.y_max
                    && pa.y.max(pb.y) >= fine.y_min;
                let extra = if overlaps { ((pa - pb).norm() / MAX_GAP).ceil() as usize } else { 0 };
                let extra = extra.min(MAX_SUBDIVISIONS);
                for k in 1..extra {
                    let psi = coarse[i - 1].0 + step * k as f64 / extra as f64;
                    scan.push((psi, h1.polar_point(psi).map(|q| (q, h2.residual(&q)))));
                }
            }
        }
        scan.push(coarse[i]);
    }

    let mut seeds = Vec::new();
    for i in 0..scan.len() {
        let Some((p, g)) = scan[i].1 else { continue };
        if g == 0.0 {
            seeds.push(p);
            continue;
        }
        if let Some(Some((_, g0))) = i.checked_sub(1).map(|k| scan[k].1) {
            if g0 != 0.0 && (g0 < 0.0) != (g < 0.0) {
                seeds.extend(bracket_seed(h1, h2, scan[i - 1].0, scan[i].0, g0, BISECTIONS));
                continue;
            }
        }
        if let (Some(Some((pa, ga))), Some(Some((pb, gb)))) = (i.checked_sub(1).map(|k| scan[k].1), scan.get(i + 1).map(|s| s.1)) {
            let touching = (ga < 0.0) == (g < 0.0) && (gb < 0.0) == (g < 0.0);
            let spacing = (pa - p).norm().max((pb - p).norm());
            if touching && g.abs() < ga.abs() && g.abs() <= gb.abs() && g.abs() < 2.0 * spacing {
                // two crossings can hide inside one window; the minimum of
                // |g| separates them
                let (psi, gm) = min_abs_residual(h1, h2, scan[i - 1].0, scan[i + 1].0, g);
                if gm != 0.0 && (gm < 0.0) != (g < 0.0) {
                    seeds.extend(bracket_seed(h1, h2, scan[i - 1].0, psi, ga, BISECTIONS));
                    seeds.extend(bracket_seed(h1, h2, psi, scan[i + 1].0, gm, BISECTIONS));
                } else {
                    seeds.extend(h1.polar_point(psi).or(Some(p)));
                }
            }
        }
    }
    seeds
}

/// Bisects a sign change of h2's residual along h1 between polar angles `lo`
/// and `hi`; `glo` is the residual at `lo`.
fn bracket_seed(h1: &HyperbolaBranch, h2: &HyperbolaBranch, mut lo: f64, mut hi: f64, mut glo: f64, steps: usize) -> Option<Pos> {
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        match h1.polar_point(mid).map(|q| h2.residual(&q)) {
            Some(gm) if (gm < 0.0) == (glo < 0.0) => {
                lo = mid;
                glo = gm;
            }
            Some(_) => hi = mid,
            None => break,
        }
    }
    h1.polar_point(0.5 * (lo + hi))
}

/// Golden-section search for the smallest |residual| of h2 along h1 on
/// `[lo, hi]`, where the residual has the sign of `outer` at both ends. Stops
/// early at the first probe of the opposite sign. Returns the angle and the
/// signed residual there.
fn min_abs_residual(h1: &HyperbolaBranch, h2: &HyperbolaBranch, mut lo: f64, mut hi: f64, outer: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let g = |psi: f64| h1.polar_point(psi).map_or(f64::INFINITY, |q| h2.residual(&q));
    let flipped = |v: f64| v != 0.0 && (v < 0.0) != (outer < 0.0);
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut ga, mut gb) = (g(a), g(b));
    for _ in 0..40 {
        if flipped(ga) {
            return (a, ga);
        }
        if flipped(gb) {
            return (b, gb);
        }
        if ga.abs() <= gb.abs() {
            hi = b;
            (b, gb) = (a, ga);
            a = hi - INV_PHI * (hi - lo);
            ga = g(a);
        } else {
            lo = a;
            (a, ga) = (b, gb);
            b = lo + INV_PHI * (hi - lo);
            gb = g(b);
        }
    }
    if ga.abs() <= gb.abs() { (a, ga) } else { (b, gb) }
}

fn residuals(h1: &HyperbolaBranch, h2: &HyperbolaBranch, u: &Pos) -> Vector2<f64> {
    Vector2::new(h1.residual(u), h2.residual(u))
}

/// Damped Newton from one seed; `Some(root)` on convergence.
fn newton_from(
    seed: Pos,
    h1: &HyperbolaBranch,
    h2: &HyperbolaBranch,
    bounds: &Area,
    cfg: &NewtonConfig,
) -> Option<Pos> {
    let mut u = seed;
    let mut f = residuals(h1, h2, &u);
    for _ in 0..cfg.max_iters {
        if f.amax() < cfg.tol {
            return Some(u);
        }
        let j = Matrix2::from_rows(&[h1.gradient(&u).transpose(), h2.gradient(&u).transpose()]);
        let scale = j.norm_squared();
        if scale == 0.0 {
            return None;
        }
        let mut step = if j.determinant().abs() > 1e-10 * scale {
            -(j.try_inverse()? * f)
        } else {
            // near-singular Jacobian: Levenberg-regularized normal equations
            let jt = j.transpose();
            let reg = jt * j + Matrix2::identity() * (1e-8 * scale);
            -(reg.try_inverse()? * (jt * f))
        };
        let len = step.norm();
        if len > cfg.max_step {
            step *= cfg.max_step / len;
        }
        let fnorm = f.norm();
        let mut t = 1.0;
        loop {
            let trial = u + step * t;
            let ft = residuals(h1, h2, &trial);
            if ft.norm() < fnorm {
                u = trial;
                f = ft;
                break;
            }
            t *= 0.5;
            if t < 1e-6 {
                return None;
            }
        }
        if !bounds.contains(&u) {
            return None;
        }
    }
    (f.amax() < cfg.tol).then_some(u)
}

/// Intersections of two branches over four distinct foci, found by damped
/// Newton from [`disjoint_seeds`]. At most two distinct roots are returned,
/// in scan order.
pub fn intersect_disjoint_pairs(
    h1: &HyperbolaBranch,
    h2: &HyperbolaBranch,
    area: &Area,
    cfg: &NewtonConfig,
) -> Result<IntersectionOutcome> {
    let foci = [h1.focus_a, h1.focus_b, h2.focus_a, h2.focus_b];
    for i in 0..4 {
        for j in 0..i {
            if foci[i] == foci[j] {
                return Err(Error::domain("disjoint-pair intersection needs four distinct foci"));
            }
        }
    }
    let bounds = area.expanded(cfg.escape_margin);
    let mut points = Roots::new();
    let fine = area.expanded(cfg.fine_margin);
    for seed in disjoint_seeds(h1, h2, &bounds, &fine, cfg.scan_samples) {
        if let Some(root) = newton_from(seed, h1, h2, &bounds, cfg) {
            if !points.iter().any(|q: &Pos| (q - root).norm() < cfg.dedupe) {
                points.push(root);
                if points.is_full() {
                    break;
                }
            }
        }
    }
    Ok(IntersectionOutcome { points, degenerate: false })
}

/// How a candidate position was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    ClosedForm,
    Numeric,
    Refined,
    Grid,
}

impl CandidateSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CandidateSource::ClosedForm => "closed_form",
            CandidateSource::Numeric => "numeric",
            CandidateSource::Refined => "refined",
            CandidateSource::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub pos: Pos,
    /// Ambiguities of the two generating branches.
    pub z: (i64, i64),
    pub source: CandidateSource,
}

/// Candidate UE positions with their provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn points(&self) -> Vec<Pos> {
        self.candidates.iter().map(|c| c.pos).collect()
    }

    /// Writes `x,y,z1,z2,source` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z1", "z2", "source"])?;
        for c in &self.candidates {
            w.write_record([
                c.pos.x.to_string(),
                c.pos.y.to_string(),
                c.z.0.to_string(),
                c.z.1.to_string(),
                c.source.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of the three-hyperbola least-squares refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsRefinement {
    pub point: Pos,
    /// False when no admissible root existed and the input was returned.
    pub refined: bool,
    /// Ambiguities fixed at the input candidate.
    pub ambiguities: [i64; 3],
}

/// Refines a candidate with the three differential phases of a quadruplet,
/// taking `quad[0]` as reference.
///
/// Ambiguities are fixed by rounding at `u_hat` (ties to even), giving three
/// branches `d_i - d_ref = v_i` that share the reference focus; the common
/// focus construction is then solved with the 3x2 pseudo-inverse.
pub fn refine_least_squares(u_hat: &Pos, obs: &Observation, quad: [usize; 4], sc: &Scenario) -> Result<LsRefinement> {
    for i in 0..4 {
        for j in 0..i {
            if quad[i] == quad[j] {
                return Err(Error::domain("refinement needs four distinct APs"));
            }
        }
    }
    if !u_hat.iter().all(|v| v.is_finite()) {
        return Err(Error::domain("refinement needs a finite candidate"));
    }
    let lam = sc.wavelength();
    let pr = sc.ap(quad[0]);
    let d_ref = (pr - u_hat).norm();
    let mut b = Matrix3x2::zeros();
    let mut c = Vector3::zeros();
    let mut v = Vector3::zeros();
    let mut ambiguities = [0i64; 3];
    let mut others = [Pos::zeros(); 3];
    for i in 0..3 {
        let pi = sc.ap(quad[i + 1]);
        others[i] = pi;
        // congruent to d_i - d_ref modulo lambda
        let delta = differential_phase(obs, quad[0], quad[i + 1], lam);
        let predicted = (pi - u_hat).norm() - d_ref;
        let z = ((delta - predicted) / lam).round_ties_even();
        ambiguities[i] = z as i64;
        let vi = delta - z * lam;
        let pt = pr - pi;
        b.set_row(i, &pt.transpose());
        c[i] = 0.5 * (pt.norm_squared() - vi * vi);
        v[i] = vi;
    }
    let unchanged = LsRefinement { point: *u_hat, refined: false, ambiguities };
    let Some(normal_inv) = (b.transpose() * b).try_inverse() else {
        return Ok(unchanged);
    };
    let pinv = normal_inv * b.transpose();
    let alpha = pinv * c;
    let beta = pinv * v;
    let qa = beta.norm_squared() - 1.0;
    let qb = -2.0 * alpha.dot(&beta);
    let qc = alpha.norm_squared();
    let mut roots = quadratic_roots(qa, qb, qc);
    if roots.is_empty() && qa.abs() >= LINEAR_QUADRATIC_TOL {
        // inconsistent measurements push the discriminant below zero; the
        // vertex is the least-squares compromise
        roots.push(-qb / (2.0 * qa));
    }
    let sq_residual = |u: &Pos| -> f64 {
        let dr = (pr - u).norm();
        (0..3).map(|i| ((others[i] - u).norm() - dr - v[i]).powi(2)).sum()
    };
    let best = roots
        .iter()
        .filter(|t| **t >= 0.0)
        .map(|&t| pr - (alpha - beta * t))
        .filter(|u| u.iter().all(|x| x.is_finite()))
        .map(|u| (sq_residual(&u), u))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    Ok(match best {
        Some((_, point)) => LsRefinement { point, refined: true, ambiguities },
        None => unchanged,
    })
}
