//! Fisher information for the uplink phase model: full FIM, position EFIM
//! by Schur complement, the closed-form subset EFIMs and position error bounds.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

use crate::channel::path_loss;
use crate::error::{Error, Result};
use crate::scenario::{Pos, Scenario};

/// Eigenvalue ratio at or below which an EFIM is treated as singular.
pub const RANK_TOL: f64 = 1e-12;

/// Default angular tolerance for the high-error test, degrees.
pub const DEFAULT_HIGH_ERROR_TOL_DEG: f64 = 3.0;

/// A 2x2 position information matrix with its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherResult {
    /// Information matrix, 1/m^2.
    pub matrix: Matrix2<f64>,
    /// `sqrt(trace(matrix^-1))` in meters, or `+inf` when rank-deficient.
    pub peb: f64,
    pub min_eigenvalue: f64,
    pub rank_deficient: bool,
    /// The nuisance block had to be pseudo-inverted.
    pub nuisance_singular: bool,
}

impl FisherResult {
    pub fn from_matrix(m: Matrix2<f64>) -> Self {
        // symmetrize away roundoff before the eigen-decomposition
        let m = 0.5 * (m + m.transpose());
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let rank_deficient = !(hi > 0.0) || lo / hi <= RANK_TOL;
        let peb = if rank_deficient {
            f64::INFINITY
        } else {
            // trace of the inverse of a 2x2 is trace / det
            (m.trace() / m.determinant()).sqrt()
        };
        Self { matrix: m, peb, min_eigenvalue: lo, rank_deficient, nuisance_singular: false }
    }
}

/// Unit vector from `u` towards `p`.
pub fn unit_towards(p: &Pos, u: &Pos) -> Result<Vector2<f64>> {
    let d = (p - u).norm();
    if d == 0.0 {
        return Err(Error::domain("UE coincides with an AP"));
    }
    Ok((p - u) / d)
}

fn check_subset(subset: &[usize], sc: &Scenario) -> Result<()> {
    for (i, &m) in subset.iter().enumerate() {
        if m >= sc.num_aps() {
            return Err(Error::domain(format!("AP index {m} out of range")));
        }
        if subset[..i].contains(&m) {
            return Err(Error::domain(format!("AP {m} listed twice")));
        }
    }
    Ok(())
}

/// True path gains `rho_m` at `u` for the listed APs.
pub fn path_gains(u: &Pos, subset: &[usize], sc: &Scenario) -> Result<Vec<f64>> {
    subset.iter().map(|&m| path_loss((sc.ap(m) - u).norm(), sc)).collect()
}

/// FIM over `eta = [u_x, u_y, phi, rho_1..rho_n]` for the AP `subset`, with
/// `rho[i]` the amplitude of `subset[i]`.
pub fn full_fim(u: &Pos, phi: f64, rho: &[f64], sc: &Scenario, subset: &[usize]) -> Result<DMatrix<f64>> {
    check_subset(subset, sc)?;
    if rho.len() != subset.len() {
        return Err(Error::domain("one amplitude per subset AP is required"));
    }
    if rho.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::domain("amplitudes must be positive"));
    }
    let n = subset.len();
    let dim = n + 3;
    let lam = sc.wavelength();
    let k = TAU / lam;
    let sqrt_p = sc.tx_power().sqrt();
    let mut j = DMatrix::zeros(dim, dim);
    let mut g = vec![Complex64::new(0.0, 0.0); dim];
    for (i, &m) in subset.iter().enumerate() {
        let v = unit_towards(&sc.ap(m), u)?;
        let d = (sc.ap(m) - u).norm();
        let mu = sqrt_p * rho[i] * Complex64::from_polar(1.0, -k * d - phi) * sc.pilot();
        g.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        // d mu / d u = j k v mu, d mu / d phi = -j mu, d mu / d rho = mu / rho
        g[0] = Complex64::i() * k * v.x * mu;
        g[1] = Complex64::i() * k * v.y * mu;
        g[2] = -Complex64::i() * mu;
        g[3 + i] = mu / rho[i];
        for a in 0..dim {
            for b in 0..dim {
                j[(a, b)] += (g[a].conj() * g[b]).re;
            }
        }
    }
    Ok(j * (2.0 / sc.noise_power()))
}

/// Position EFIM `J_uu - J_uw J_ww^-1 J_wu` from a full FIM.
pub fn efim_position(full: &DMatrix<f64>) -> Result<FisherResult> {
    let dim = full.nrows();
    if dim < 3 || full.ncols() != dim {
        return Err(Error::domain("full FIM must be square with at least 3 rows"));
    }
    let juu = full.view((0, 0), (2, 2)).into_owned();
    let juw = full.view((0, 2), (2, dim - 2)).into_owned();
    let jww = full.view((2, 2), (dim - 2, dim - 2)).into_owned();
    // equilibrate so phase and amplitude rows share one scale
    let scale: Vec<f64> =
        jww.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }).collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(scale));
    let scaled = &d * &jww * &d;
    let (scaled_inv, singular) = match scaled.clone().cholesky() {
        Some(ch) => (ch.inverse(), false),
        None => (
            scaled.clone().pseudo_inverse(1e-12 * scaled.amax()).map_err(|e| Error::domain(e.to_string()))?,
            true,
        ),
    };
    let jww_inv = &d * scaled_inv * &d;
    let s = juu - &juw * jww_inv * juw.transpose();
    let mut out = FisherResult::from_matrix(Matrix2::new(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]));
    out.nuisance_singular = singular;
    Ok(out)
}

/// `8 pi^2 P / (sigma^2 lambda^2)`.
pub fn information_scale(sc: &Scenario) -> f64 {
    8.0 * PI * PI * sc.tx_power() / (sc.noise_power() * sc.wavelength().powi(2))
}

/// Closed-form EFIM for any AP subset, summed over the reference-free form
/// `K_c sum_m rho_m^2 v_m (beta_m v_m - sum_{m' != m} rho_m'^2 v_m')^T`
/// with `K_c = 8 pi^2 P / (sigma^2 lambda^2 sum rho^2)`.
pub fn efim_subset(u: &Pos, subset: &[usize], sc: &Scenario) -> Result<FisherResult> {
    check_subset(subset, sc)?;
    if subset.len() < 2 {
        return Err(Error::domain("an EFIM needs at least two APs"));
    }
    let rho2: Vec<f64> = path_gains(u, subset, sc)?.iter().map(|r| r * r).collect();
    let v: Vec<Vector2<f64>> = subset.iter().map(|&m| unit_towards(&sc.ap(m), u)).collect::<Result<_>>()?;
    let total: f64 = rho2.iter().sum();
    let kc = information_scale(sc) / total;
    let mut j = Matrix2::zeros();
    for a in 0..subset.len() {
        let beta = total - rho2[a];
        let mut row = v[a] * beta;
        for b in 0..subset.len() {
            if b != a {
                row -= v[b] * rho2[b];
            }
        }
        j += v[a] * row.transpose() * rho2[a];
    }
    Ok(FisherResult::from_matrix(j * kc))
}

/// EFIM of a selected triplet. Symmetric in the three APs, so no reference
/// needs to be named.
pub fn efim_triplet(u: &Pos, triplet: [usize; 3], sc: &Scenario) -> Result<FisherResult> {
    efim_subset(u, &triplet, sc)
}

/// EFIM of a quadruplet when all three differential phases against one
/// reference are used.
pub fn efim_quadruplet_ref(u: &Pos, quad: [usize; 4], sc: &Scenario) -> Result<FisherResult> {
    efim_subset(u, &quad, sc)
}

/// EFIM from two independent pairwise differential phases:
/// `B_c (g1 (v1 - v2)(v1 - v2)^T + g2 (v3 - v4)(v3 - v4)^T)`,
/// `g_i = rho_a^2 rho_b^2 / (rho_a^2 + rho_b^2)`.
pub fn efim_two_pairs(u: &Pos, pairs: [(usize, usize); 2], sc: &Scenario) -> Result<FisherResult> {
    let idx = [pairs[0].0, pairs[0].1, pairs[1].0, pairs[1].1];
    check_subset(&idx, sc)?;
    let bc = information_scale(sc);
    let mut j = Matrix2::zeros();
    for &(a, b) in &pairs {
        let r = path_gains(u, &[a, b], sc)?;
        let (ra, rb) = (r[0] * r[0], r[1] * r[1]);
        let gamma = ra * rb / (ra + rb);
        let dv = unit_towards(&sc.ap(a), u)? - unit_towards(&sc.ap(b), u)?;
        j += dv * dv.transpose() * gamma;
    }
    Ok(FisherResult::from_matrix(j * bc))
}

/// Position EFIM with every AP of the scenario, evaluated in closed form.
pub fn efim_full(u: &Pos, sc: &Scenario) -> Result<FisherResult> {
    let all: Vec<usize> = (0..sc.num_aps()).collect();
    efim_subset(u, &all, sc)
}

/// Position error bound using all APs, meters.
pub fn peb_full(u: &Pos, sc: &Scenario) -> Result<f64> {
    Ok(efim_full(u, sc)?.peb)
}

fn angle_deg(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// True when `u_hat` lies, within `tol_deg`, in one of the three regions where
/// the two-pair EFIM degenerates: on either pair's line outside its segment
/// (`v1 = v2` or `v3 = v4`), or where the difference directions `v1 - v2`
/// and `v3 - v4` are parallel.
pub fn high_error_membership(u_hat: &Pos, pairs: [(usize, usize); 2], sc: &Scenario, tol_deg: f64) -> Result<bool> {
    let idx = [pairs[0].0, pairs[0].1, pairs[1].0, pairs[1].1];
    check_subset(&idx, sc)?;
    let v: Vec<Vector2<f64>> = idx.iter().map(|&m| unit_towards(&sc.ap(m), u_hat)).collect::<Result<_>>()?;
    if angle_deg(&v[0], &v[1]) <= tol_deg || angle_deg(&v[2], &v[3]) <= tol_deg {
        return Ok(true);
    }
    let line_angle = angle_deg(&(v[0] - v[1]), &(v[2] - v[3]));
    Ok(line_angle.min(180.0 - line_angle) <= tol_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Area, RfParams};
    use approx::assert_relative_eq;

    fn scenario(aps: Vec<Pos>) -> Scenario {
        Scenario::new(aps, Area::centered(20.0, 20.0).unwrap(), RfParams::default()).unwrap()
    }

    fn square() -> Scenario {
        scenario(vec![Pos::new(-5.0, -5.0), Pos::new(5.0, -5.0), Pos::new(5.0, 5.0), Pos::new(-5.0, 5.0)])
    }

    #[test]
    fn amplitude_block_is_diagonal() {
        let sc = square();
        let u = Pos::new(1.0, 2.0);
        let rho = path_gains(&u, &[0, 1, 2], &sc).unwrap();
        let j = full_fim(&u, 0.3, &rho, &sc, &[0, 1, 2]).unwrap();
        let expect = 2.0 * sc.tx_power() / sc.noise_power();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { expect } else { 0.0 };
                assert_relative_eq!(j[(3 + a, 3 + b)], want, max_relative = 1e-12);
            }
            // amplitude and position are orthogonal
            assert_eq!(j[(0, 3 + a)], 0.0);
        }
    }

    #[test]
    fn noise_scaling() {
        let sc = square();
        let u = Pos::new(1.0, 2.0);
        let rho = path_gains(&u, &[0, 1, 2, 3], &sc).unwrap();
        let a = full_fim(&u, 0.0, &rho, &sc, &[0, 1, 2, 3]).unwrap();
        let sc2 = sc.with_noise_power(sc.noise_power() * 4.0).unwrap();
        let b = full_fim(&u, 0.0, &rho, &sc2, &[0, 1, 2, 3]).unwrap();
        assert!((&a / 4.0 - &b).norm() <= 1e-12 * b.norm());
    }

    #[test]
    fn schur_matches_closed_form_on_square() {
        let sc = square();
        let u = Pos::new(1.0, 2.0);
        let sub = [0, 1, 2, 3];
        let rho = path_gains(&u, &sub, &sc).unwrap();
        let schur = efim_position(&full_fim(&u, 0.1, &rho, &sc, &sub).unwrap()).unwrap();
        let closed = efim_subset(&u, &sub, &sc).unwrap();
        assert!((schur.matrix - closed.matrix).norm() <= 1e-8 * closed.matrix.norm());
        assert!(!schur.nuisance_singular);
    }

    #[test]
    fn triplet_on_line_extension_is_rank_one() {
        let sc = scenario(vec![Pos::new(0.0, 0.0), Pos::new(3.0, 0.0), Pos::new(1.0, 4.0)]);
        let r = efim_triplet(&Pos::new(-4.0, 0.0), [0, 1, 2], &sc).unwrap();
        assert!(r.rank_deficient && r.peb.is_infinite());
        let r = efim_triplet(&Pos::new(1.5, 0.0), [0, 1, 2], &sc).unwrap();
        assert!(!r.rank_deficient && r.peb.is_finite());
    }

    #[test]
    fn two_pairs_full_rank_in_quadrant() {
        let sc = square();
        let r = efim_two_pairs(&Pos::new(2.5, 2.5), [(0, 1), (2, 3)], &sc).unwrap();
        assert!(!r.rank_deficient);
    }

    #[test]
    fn peb_scales_with_power() {
        let sc = square();
        let u = Pos::new(0.7, -1.3);
        let a = peb_full(&u, &sc).unwrap();
        let b = peb_full(&u, &sc.with_tx_power(2.0 * sc.tx_power()).unwrap()).unwrap();
        assert_relative_eq!(a / b, 2f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn membership_cases() {
        let sc = square();
        // on the extension of the (0, 1) side
        assert!(high_error_membership(&Pos::new(8.0, -5.0), [(0, 1), (2, 3)], &sc, 0.1).unwrap());
        assert!(!high_error_membership(&Pos::new(1.3, 2.1), [(0, 2), (1, 3)], &sc, 5.0).unwrap());
    }

    #[test]
    fn coincident_ue_is_rejected() {
        let sc = square();
        assert!(efim_triplet(&Pos::new(-5.0, -5.0), [0, 1, 2], &sc).is_err());
        assert!(efim_subset(&Pos::new(0.0, 0.0), &[0, 0, 1], &sc).is_err());
    }
}
