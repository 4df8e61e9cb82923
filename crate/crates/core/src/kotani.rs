//! Kotani theory for deformed families: the `m`-functions, the `q`-function, the
//! identities linking them to `L^d`, boundary diagnostics as `t -> 0` and the
//! reconstruction of generators from `m^-`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle_engine::{self, BasePoint, LyapunovMethod, SampleSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::rotation_module::{self, DeformedFamily};
use crate::siegel_geometry::{self, DiscVariant};

pub const DEFAULT_TOL_M: f64 = 1e-9;
pub const DEFAULT_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

/// Values of `m^+(sigma + i t, x)` or `m^-(sigma - i t, x)` at a set of base points.
#[derive(Debug, Clone)]
pub struct MField {
    pub sigma: f64,
    /// Always positive; the `m^-` side is evaluated at `sigma - i t`.
    pub t: f64,
    pub side: Side,
    pub points: Vec<BasePoint>,
    pub values: Vec<CMat>,
    /// Largest number of single steps used at any point.
    pub iterations: usize,
    /// Largest final Cauchy difference.
    pub cauchy_residual: f64,
}

impl MField {
    pub fn z(&self) -> C64 {
        match self.side {
            Side::Plus => c(self.sigma, self.t),
            Side::Minus => c(self.sigma, -self.t),
        }
    }

    /// `max ||m(f x) - A_z(x) . m(x)||` over the stored points.
    pub fn invariance_residual<F: DeformedFamily + ?Sized>(&self, family: &F, max_steps: usize, tol: f64) -> Result<f64> {
        let next = shifted_points(family, &self.points)?;
        let fm = m_field(family, self.side, self.sigma, self.t, &next, max_steps, tol)?;
        let z = self.z();
        let mut worst: f64 = 0.0;
        for ((x, m), mf) in self.points.iter().zip(&self.values).zip(&fm.values) {
            let pushed = siegel_geometry::mobius(&family.disc_at(x, z)?, m)?;
            worst = worst.max(linalg::op_norm(&(pushed - mf)));
        }
        Ok(worst)
    }
}

/// Every site of a periodic base.
pub fn all_sites<F: DeformedFamily + ?Sized>(family: &F) -> Result<Vec<BasePoint>> {
    let p = family.base().period().ok_or_else(|| Error::Domain("needs a periodic base".into()))?;
    Ok((0..p).map(BasePoint::Index).collect())
}

fn shifted_points<F: DeformedFamily + ?Sized>(family: &F, points: &[BasePoint]) -> Result<Vec<BasePoint>> {
    points.iter().map(|x| family.base().step(x, 1)).collect()
}

fn periodic_site_field<F: DeformedFamily + ?Sized>(family: &F, side: Side, z: C64, max_steps: usize, tol: f64) -> Result<(Vec<CMat>, usize, f64)> {
    let p = family.base().period().unwrap_or(1);
    let d = family.d();
    let mats: Vec<CMat> = (0..p).map(|i| family.disc_at(&BasePoint::Index(i), z)).collect::<Result<_>>()?;
    let max_iter = (max_steps / p).max(1);
    match side {
        Side::Plus => {
            let (m0, it, diff) = siegel_geometry::attracting_fixed_point(&mats, &linalg::zeros(d, d), tol, max_iter)?;
            let mut out = Vec::with_capacity(p);
            let mut zc = m0;
            for m in &mats {
                out.push(zc.clone());
                zc = siegel_geometry::mobius(m, &zc)?;
            }
            Ok((out, it * p, diff))
        }
        Side::Minus => {
            let inv: Vec<CMat> = mats.iter().map(linalg::inverse).collect::<Result<_>>()?;
            let rev: Vec<CMat> = inv.iter().rev().cloned().collect();
            let (m0, it, diff) = siegel_geometry::attracting_fixed_point(&rev, &linalg::zeros(d, d), tol, max_iter)?;
            // backward propagation m(x_i) = A(x_i)^{-1} . m(x_{i+1}) stays contracting
            let mut out = vec![m0.clone(); p];
            let mut zc = m0;
            for i in (1..p).rev() {
                zc = siegel_geometry::mobius(&inv[i], &zc)?;
                out[i] = zc.clone();
            }
            Ok((out, it * p, diff))
        }
    }
}

/// `m` at one point by pushing `0` along `k` steps, `k` doubling until the Cauchy test passes.
fn orbit_value<F: DeformedFamily + ?Sized>(family: &F, side: Side, z: C64, x: &BasePoint, max_steps: usize, tol: f64) -> Result<(CMat, usize, f64)> {
    let d = family.d();
    let base = family.base();
    let eval = |k: usize| -> Result<CMat> {
        let mut zc = linalg::zeros(d, d);
        match side {
            Side::Plus => {
                let mut y = base.step(x, -(k as i64))?;
                for _ in 0..k {
                    zc = siegel_geometry::mobius(&family.disc_at(&y, z)?, &zc)?;
                    y = base.step(&y, 1)?;
                }
            }
            Side::Minus => {
                let mut y = base.step(x, k as i64 - 1)?;
                for _ in 0..k {
                    zc = siegel_geometry::mobius(&linalg::inverse(&family.disc_at(&y, z)?)?, &zc)?;
                    y = base.step(&y, -1)?;
                }
            }
        }
        Ok(zc)
    };
    let mut k = 16;
    let mut prev = eval(k)?;
    let mut diff = f64::INFINITY;
    while 2 * k <= max_steps {
        k *= 2;
        let next = eval(k)?;
        diff = linalg::op_norm(&(&next - &prev));
        prev = next;
        if diff < tol {
            return Ok((prev, k, diff));
        }
    }
    Err(Error::Convergence { iterations: k, residual: diff })
}

/// `m^+(sigma + i t)` (`side = Plus`) or `m^-(sigma - i t)` (`side = Minus`) at `points`.
pub fn m_field<F: DeformedFamily + ?Sized>(family: &F, side: Side, sigma: f64, t: f64, points: &[BasePoint], max_steps: usize, tol: f64) -> Result<MField> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("m-functions need t > 0, got {t}")));
    }
    let z = match side {
        Side::Plus => c(sigma, t),
        Side::Minus => c(sigma, -t),
    };
    let (values, iterations, cauchy_residual) = if let Some(p) = family.base().period() {
        let (sites, it, diff) = periodic_site_field(family, side, z, max_steps, tol)?;
        let vals = points
            .iter()
            .map(|x| match x {
                BasePoint::Index(i) => Ok(sites[i % p].clone()),
                _ => Err(Error::Domain("periodic base needs index points".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        (vals, it, diff)
    } else {
        let res: Vec<(CMat, usize, f64)> = points.par_iter().map(|x| orbit_value(family, side, z, x, max_steps, tol)).collect::<Result<_>>()?;
        let it = res.iter().map(|r| r.1).max().unwrap_or(0);
        let diff = res.iter().map(|r| r.2).fold(0.0, f64::max);
        (res.into_iter().map(|r| r.0).collect(), it, diff)
    };
    Ok(MField { sigma, t, side, points: points.to_vec(), values, iterations, cauchy_residual })
}

pub fn m_plus<F: DeformedFamily + ?Sized>(family: &F, z: C64, points: &[BasePoint], max_steps: usize, tol: f64) -> Result<MField> {
    if z.im <= 0.0 {
        return Err(Error::Domain("m+ needs Im z > 0".into()));
    }
    m_field(family, Side::Plus, z.re, z.im, points, max_steps, tol)
}

/// `m^-` at `z` with `Im z < 0`.
pub fn m_minus<F: DeformedFamily + ?Sized>(family: &F, z: C64, points: &[BasePoint], max_steps: usize, tol: f64) -> Result<MField> {
    if z.im >= 0.0 {
        return Err(Error::Domain("m- needs Im z < 0".into()));
    }
    m_field(family, Side::Minus, z.re, -z.im, points, max_steps, tol)
}

/// Smallest eigenvalue of `Im Phi_C^{-1}(m)` over the field; positive for Herglotz data.
pub fn herglotz_margin(field: &MField) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for m in &field.values {
        let h = siegel_geometry::phi_c_inv(m)?;
        let im = (&h - h.adjoint()) * c(0.0, -0.5);
        worst = worst.min(linalg::hermitian_eigenvalues(&im)[0]);
    }
    Ok(worst)
}

/// Points of the base used for integrals, with their images.
fn integration_points<F: DeformedFamily + ?Sized>(family: &F, spec: SampleSpec) -> Result<(Vec<BasePoint>, Vec<BasePoint>)> {
    let pts = match family.base().period() {
        Some(_) => all_sites(family)?,
        None => family.base().sample_points(spec.samples.max(1), DEFAULT_MAX_STEPS, DEFAULT_MAX_STEPS, spec.seed),
    };
    let next = shifted_points(family, &pts)?;
    Ok((pts, next))
}

/// Subspace residual of `A_{sigma+it}(x) [I; m^-(x)^*] = [I; m^-(f x)^*] tau^-`, the largest
/// over the stored points. `minus` holds `m^-(sigma - i t)`.
pub fn conjugate_relation_check<F: DeformedFamily + ?Sized>(family: &F, minus: &MField, max_steps: usize, tol: f64) -> Result<f64> {
    if minus.side != Side::Minus {
        return Err(Error::Input("conjugate relation needs an m- field".into()));
    }
    let d = family.d();
    let next = shifted_points(family, &minus.points)?;
    let fm = m_field(family, Side::Minus, minus.sigma, minus.t, &next, max_steps, tol)?;
    let z = c(minus.sigma, minus.t);
    let mut worst: f64 = 0.0;
    for ((x, m), mf) in minus.points.iter().zip(&minus.values).zip(&fm.values) {
        let col = linalg::block_column(&linalg::eye(d), &m.adjoint());
        let w = family.disc_at(x, z)? * col;
        let top = w.rows(0, d).into_owned();
        let bot = w.rows(d, d).into_owned();
        let img = bot * linalg::inverse_checked(&top, siegel_geometry::MAX_COND)?;
        worst = worst.max(linalg::op_norm(&(img - mf.adjoint())));
    }
    Ok(worst)
}

/// `q = |det tau(A_z(x), m^+(x))|^{-2p} V(m^+(f x)) / V(m^+(x))`.
pub fn q_function<F: DeformedFamily + ?Sized>(family: &F, z: C64, x: &BasePoint, m_x: &CMat, m_fx: &CMat) -> Result<f64> {
    Ok(log_q(family, z, x, m_x, m_fx)?.exp())
}

/// Natural log of [`q_function`].
pub fn log_q<F: DeformedFamily + ?Sized>(family: &F, z: C64, x: &BasePoint, m_x: &CMat, m_fx: &CMat) -> Result<f64> {
    let variant = DiscVariant::for_tag(family.tag());
    let p = variant.volume_power(family.d());
    let t = siegel_geometry::tau(&family.disc_at(x, z)?, m_x)?;
    let ln_det = linalg::det(&t).norm().ln();
    Ok(-2.0 * p * ln_det + siegel_geometry::log_volume_density(m_fx, variant)? - siegel_geometry::log_volume_density(m_x, variant)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdIdentities {
    pub ld: f64,
    /// `int ln |det tau(A_z, m^+)|`.
    pub tau_integral: f64,
    /// `(1 / 2p) int -ln q`.
    pub q_integral: f64,
    pub res_tau: f64,
    pub res_q: f64,
}

/// Both identities expressing `L^d(A_z)` through `m^+`.
pub fn ld_identities_check<F: DeformedFamily + ?Sized>(family: &F, z: C64, spec: SampleSpec) -> Result<LdIdentities> {
    if z.im <= 0.0 {
        return Err(Error::Domain("identities need Im z > 0".into()));
    }
    let (pts, next) = integration_points(family, spec)?;
    let mp = m_plus(family, z, &pts, DEFAULT_MAX_STEPS, 1e-13)?;
    let mpf = m_plus(family, z, &next, DEFAULT_MAX_STEPS, 1e-13)?;
    let variant = DiscVariant::for_tag(family.tag());
    let p = variant.volume_power(family.d());
    let mut tau_sum = 0.0;
    let mut q_sum = 0.0;
    for i in 0..pts.len() {
        let t = siegel_geometry::tau(&family.disc_at(&pts[i], z)?, &mp.values[i])?;
        tau_sum += linalg::det(&t).norm().ln();
        q_sum += -log_q(family, z, &pts[i], &mp.values[i], &mpf.values[i])? / (2.0 * p);
    }
    let n = pts.len() as f64;
    let (ld, _) = rotation_module::ld_at(family, z, spec)?;
    let tau_integral = tau_sum / n;
    let q_integral = q_sum / n;
    Ok(LdIdentities { ld, tau_integral, q_integral, res_tau: (ld - tau_integral).abs(), res_q: (ld - q_integral).abs() })
}

/// `sum_i (1 + s_i^2) / (1 - s_i^2)` over the singular values of `m`.
pub fn singular_weight(m: &CMat) -> Result<f64> {
    let s = linalg::singular_values(m);
    if s[0] >= 1.0 {
        return Err(Error::Domain(format!("disc point has norm {:.6}", s[0])));
    }
    Ok(s.iter().map(|x| (1.0 + x * x) / (1.0 - x * x)).sum())
}

/// `½ sum_i [(1+s_i(X)^2)/(1-s_i(X)^2) + (1+s_i(Y)^2)/(1-s_i(Y)^2)] - Re tr((I - Y^* X)^{-1}(I + Y^* X)) - ||X - Y||_HS^2`.
///
/// Evaluated as `Re tr(Q D^* X P_X) - Re tr(P_Y Y^* D Q) - ||D||^2` with `D = X - Y`,
/// `P_X = (I - X^* X)^{-1}`, `Q = (I - Y^* X)^{-1}`, which vanishes exactly at `X = Y`.
pub fn trace_gap(x: &CMat, y: &CMat) -> Result<f64> {
    if x.shape() != y.shape() || x.nrows() != x.ncols() {
        return Err(Error::Dimension("trace gap needs two square matrices of one size".into()));
    }
    for m in [x, y] {
        let n = linalg::op_norm(m);
        if n >= 1.0 {
            return Err(Error::Domain(format!("disc point has norm {n:.6}")));
        }
    }
    let id = linalg::eye(x.nrows());
    let px = linalg::inverse(&(&id - x.adjoint() * x))?;
    let py = linalg::inverse(&(&id - y.adjoint() * y))?;
    let q = linalg::inverse(&(&id - y.adjoint() * x))?;
    let dx = x - y;
    let first = (&q * dx.adjoint() * x * &px).trace().re;
    let second = (&py * y.adjoint() * &dx * &q).trace().re;
    let hs = linalg::hs_norm(&dx);
    Ok(first - second - hs * hs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyEquation {
    /// `int Re tr(top block of [X Y]^{-1} W X)` with `X = [m^+; I]`, `Y = [I; (m^-)^*]`.
    pub lhs: f64,
    /// `int Re tr((I - (m^-)^* m^+)^{-1}(I + (m^-)^* m^+))`, meaningful when `W = diag(-I, I)`.
    pub lhs_reduced: f64,
    pub dld_dt: f64,
    pub residual: f64,
}

fn fd_step(t: f64) -> f64 {
    (t / 100.0).max(1e-4)
}

/// Central difference of `L^d(A_{sigma + it})` in `t`.
pub fn dld_dt<F: DeformedFamily + ?Sized>(family: &F, sigma: f64, t: f64, spec: SampleSpec) -> Result<f64> {
    let h = fd_step(t);
    if t - h <= 0.0 {
        return Err(Error::Domain("t too small for the finite difference".into()));
    }
    let (a, _) = rotation_module::ld_at(family, c(sigma, t + h), spec)?;
    let (b, _) = rotation_module::ld_at(family, c(sigma, t - h), spec)?;
    Ok((a - b) / (2.0 * h))
}

/// The trace form of `dL^d/dt` against its finite difference.
pub fn key_equation_check<F: DeformedFamily + ?Sized>(family: &F, sigma: f64, t: f64, spec: SampleSpec) -> Result<KeyEquation> {
    let d = family.d();
    let (pts, next) = integration_points(family, spec)?;
    let mp = m_field(family, Side::Plus, sigma, t, &next, DEFAULT_MAX_STEPS, 1e-13)?;
    let mm = m_field(family, Side::Minus, sigma, t, &next, DEFAULT_MAX_STEPS, 1e-13)?;
    let z = c(sigma, t);
    let id = linalg::eye(d);
    let mut lhs = 0.0;
    let mut lhs_reduced = 0.0;
    for i in 0..pts.len() {
        let w = family.t_generator(&pts[i], z)?;
        let mplus = &mp.values[i];
        let ystar = mm.values[i].adjoint();
        let xcol = linalg::block_column(mplus, &id);
        let ycol = linalg::block_column(&id, &ystar);
        let mut frame = linalg::zeros(2 * d, 2 * d);
        frame.view_mut((0, 0), (2 * d, d)).copy_from(&xcol);
        frame.view_mut((0, d), (2 * d, d)).copy_from(&ycol);
        let coef = linalg::inverse_checked(&frame, siegel_geometry::MAX_COND)? * w * &xcol;
        lhs += coef.rows(0, d).trace().re;
        let prod = &ystar * mplus;
        let den = linalg::inverse_checked(&(&id - &prod), siegel_geometry::MAX_COND)?;
        lhs_reduced += (den * (&id + &prod)).trace().re;
    }
    let n = pts.len() as f64;
    let lhs = lhs / n;
    let lhs_reduced = lhs_reduced / n;
    let dld = dld_dt(family, sigma, t, spec)?;
    Ok(KeyEquation { lhs, lhs_reduced, dld_dt: dld, residual: (lhs - dld).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallTRow {
    pub t: f64,
    pub i_plus: f64,
    pub i_minus: f64,
    /// `int ||m^+(sigma_0 + it) - m^-(sigma_0 - it)||_HS^2`.
    pub d_int: f64,
    pub ld_over_t: f64,
    pub dld_dt: f64,
    /// `½ int sum_i [(1+s_i(m^+)^2)/(1-s_i(m^+)^2) + (same for e^{-2t} m^-)]`, a lower bound
    /// for `L^d / t` on rotation families.
    pub singular_bound: f64,
    /// The same with `m^-` unscaled; agrees with `singular_bound` to first order as `t -> 0`.
    pub singular_bound_unscaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallTReport {
    pub sigma0: f64,
    pub top_exponent: f64,
    pub rows: Vec<SmallTRow>,
    /// `I_+ + I_-` stayed within 10x of its first value.
    pub bounded: bool,
    /// Ratio of the first to the last `D` value.
    pub d_decay: f64,
    /// Set when some `t` failed to converge; the table stops there.
    pub partial: bool,
}

pub const SMALL_T_GATE: f64 = 1e-3;

/// `m^\pm` diagnostics along a ladder `t_list` descending towards `0`.
pub fn small_t_diagnostics<F: DeformedFamily + ?Sized>(family: &F, sigma0: f64, t_list: &[f64], spec: SampleSpec) -> Result<SmallTReport> {
    if t_list.iter().any(|&t| !(t > 0.0 && t <= 0.5)) {
        return Err(Error::Input("t values must lie in (0, 0.5]".into()));
    }
    let rep = cocycle_engine::lyapunov_spectrum(&family.cocycle_at(c(sigma0, 0.0))?, spec, LyapunovMethod::Auto)?;
    let top = rep.top();
    if top > SMALL_T_GATE {
        return Err(Error::Rejected(format!("L(A_sigma0) = {top:.3e} is not zero")));
    }
    let (pts, _) = integration_points(family, spec)?;
    let mut rows = Vec::new();
    let mut partial = false;
    for &t in t_list {
        let row = (|| -> Result<SmallTRow> {
            let mp = m_field(family, Side::Plus, sigma0, t, &pts, 4 * DEFAULT_MAX_STEPS, 1e-13)?;
            let mm = m_field(family, Side::Minus, sigma0, t, &pts, 4 * DEFAULT_MAX_STEPS, 1e-13)?;
            let n = pts.len() as f64;
            let inv_gap = |m: &CMat| 1.0 / (1.0 - linalg::op_norm(m).powi(2));
            let i_plus = mp.values.iter().map(inv_gap).sum::<f64>() / n;
            let i_minus = mm.values.iter().map(inv_gap).sum::<f64>() / n;
            let d_int = mp.values.iter().zip(&mm.values).map(|(a, b)| linalg::hs_norm(&(a - b)).powi(2)).sum::<f64>() / n;
            let mut sb = 0.0;
            let mut sbu = 0.0;
            let shrink = c((-2.0 * t).exp(), 0.0);
            for (a, b) in mp.values.iter().zip(&mm.values) {
                let wa = singular_weight(a)?;
                sb += 0.5 * (wa + singular_weight(&(b * shrink))?);
                sbu += 0.5 * (wa + singular_weight(b)?);
            }
            let (ld, _) = rotation_module::ld_at(family, c(sigma0, t), spec)?;
            Ok(SmallTRow { t, i_plus, i_minus, d_int, ld_over_t: ld / t, dld_dt: dld_dt(family, sigma0, t, spec)?, singular_bound: sb / n, singular_bound_unscaled: sbu / n })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(Error::Convergence { .. } | Error::BoundaryAtInfinity(_)) => {
                partial = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let bounded = match (rows.first(), rows.iter().map(|r| r.i_plus + r.i_minus).reduce(f64::max)) {
        (Some(r0), Some(mx)) => mx <= 10.0 * (r0.i_plus + r0.i_minus),
        _ => false,
    };
    let d_decay = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if b.d_int > 0.0 => a.d_int / b.d_int,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => f64::NAN,
    };
    Ok(SmallTReport { sigma0, top_exponent: top, rows, bounded, d_decay, partial })
}

/// Result of reading generators back from `m^-`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub indices: Vec<usize>,
    pub matrices: Vec<CMat>,
    /// Smallest ratio of second-nearest to nearest distance over all steps.
    pub worst_margin: f64,
}

/// Height of the `m^-` queries.
pub const RECONSTRUCTION_HEIGHT: f64 = 8.0;

/// Recovers `A(f^n x)` for `0 <= n < k` from an oracle `(z, y) -> m^-(z, y)` by matching
/// `m^-(-i T, f^n x)` against `A^{-1} . 0` on the disc side for each candidate `A` in `value_set`.
pub fn reconstruct_generators<O>(oracle: O, value_set: &[CMat], base: &cocycle_engine::BaseSystem, x: &BasePoint, k: usize) -> Result<Reconstruction>
where
    O: Fn(C64, &BasePoint) -> Result<CMat>,
{
    if value_set.is_empty() {
        return Err(Error::Input("empty value set".into()));
    }
    let d = value_set[0].nrows() / 2;
    let keys: Vec<CMat> = value_set
        .iter()
        .map(|a| {
            let disc = crate::group_core::cayley_conjugate(a)?;
            siegel_geometry::mobius(&linalg::inverse(&disc)?, &linalg::zeros(d, d))
        })
        .collect::<Result<_>>()?;
    for i in 0..keys.len() {
        for j in 0..i {
            if linalg::op_norm(&(&keys[i] - &keys[j])) < 1e-6 {
                return Err(Error::Ambiguity(format!("candidates {j} and {i} share A^-1 . 0")));
            }
        }
    }
    let z = c(0.0, -RECONSTRUCTION_HEIGHT);
    let mut indices = Vec::with_capacity(k);
    let mut worst_margin = f64::INFINITY;
    let mut y = x.clone();
    for step in 0..k {
        let m = oracle(z, &y)?;
        let mut dist: Vec<(f64, usize)> = keys.iter().enumerate().map(|(i, key)| (linalg::op_norm(&(&m - key)), i)).collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        if dist.len() > 1 {
            let margin = if dist[0].0 > 0.0 { dist[1].0 / dist[0].0 } else { f64::INFINITY };
            worst_margin = worst_margin.min(margin);
            if margin < 2.0 {
                return Err(Error::Ambiguity(format!("step {step}: nearest {:.3e}, second {:.3e}", dist[0].0, dist[1].0)));
            }
        }
        indices.push(dist[0].1);
        y = base.step(&y, 1)?;
    }
    let matrices = indices.iter().map(|&i| value_set[i].clone()).collect();
    Ok(Reconstruction { indices, matrices, worst_margin })
}

/// `m^-` oracle of a family at single points.
pub fn m_minus_oracle<F: DeformedFamily + ?Sized>(family: &F) -> impl Fn(C64, &BasePoint) -> Result<CMat> + '_ {
    move |z, x| Ok(m_minus(family, z, std::slice::from_ref(x), DEFAULT_MAX_STEPS, 1e-14)?.values.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle_engine::{random_periodic, BaseSystem, Cocycle};
    use crate::group_core::GroupTag;
    use crate::rotation_module::{EnergyFamily, RotationFamily};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn identity_family(d: usize) -> RotationFamily {
        RotationFamily::new(Cocycle::constant(linalg::eye(2 * d), Some(GroupTag::SpR)).unwrap()).unwrap()
    }

    fn free_schrodinger(e: f64) -> RotationFamily {
        let a = rotation_module::transfer_matrix(&linalg::zeros(1, 1), c(e, 0.0));
        RotationFamily::new(Cocycle::constant(a, Some(GroupTag::SpR)).unwrap()).unwrap()
    }

    fn free_energy() -> EnergyFamily {
        EnergyFamily { base: BaseSystem::Periodic { period: 1 }, d: 1, tag: GroupTag::SpR, potential: Arc::new(|_| Ok(linalg::zeros(1, 1))), e_ref: -3.0 }
    }

    fn spec() -> SampleSpec {
        SampleSpec { n: 2000, samples: 1, seed: 0 }
    }

    #[test]
    fn diagonal_family_has_zero_m_functions() {
        for d in 1..=3 {
            let fam = identity_family(d);
            let pts = all_sites(&fam).unwrap();
            let mp = m_plus(&fam, c(0.3, 0.2), &pts, 1000, 1e-12).unwrap();
            let mm = m_minus(&fam, c(0.3, -0.2), &pts, 1000, 1e-12).unwrap();
            assert!(linalg::op_norm(&mp.values[0]) < 1e-12);
            assert!(linalg::op_norm(&mm.values[0]) < 1e-12);
            assert!(conjugate_relation_check(&fam, &mm, 1000, 1e-12).unwrap() < 1e-12);
            let q = q_function(&fam, c(0.3, 0.2), &pts[0], &mp.values[0], &mp.values[0]).unwrap();
            let expect = (-2.0 * 0.2 * (d * d + d) as f64).exp();
            assert!((q - expect).abs() < 1e-12 * expect);
            let ids = ld_identities_check(&fam, c(0.3, 0.2), spec()).unwrap();
            assert!((ids.ld - 0.2 * d as f64).abs() < 1e-12);
            assert!(ids.res_tau < 1e-12 && ids.res_q < 1e-12);
            let key = key_equation_check(&fam, 0.3, 0.2, spec()).unwrap();
            assert!((key.lhs - d as f64).abs() < 1e-12);
            assert!((key.lhs_reduced - d as f64).abs() < 1e-12);
            assert!(key.residual < 1e-6);
        }
    }

    #[test]
    fn free_m_plus_matches_quadratic_fixed_point() {
        let fam = free_energy();
        for &(e, t) in &[(1.0, 0.1), (3.0, 0.1), (-0.5, 0.5)] {
            let z = c(e, t);
            let mp = m_plus(&fam, z, &[BasePoint::Index(0)], DEFAULT_MAX_STEPS, 1e-14).unwrap();
            let w = siegel_geometry::phi_c_inv(&mp.values[0]).unwrap()[(0, 0)];
            let s = (z * z - 4.0).sqrt();
            let cands = [(z + s) / 2.0, (z - s) / 2.0];
            let fp = cands.iter().find(|w| w.im > 0.0).unwrap();
            assert!((w - fp).norm() < 1e-9, "E = {e}: {w} vs {fp}");
            assert!(herglotz_margin(&mp).unwrap() > 0.0);
        }
    }

    #[test]
    fn m_minus_approaches_inverse_image_of_zero() {
        let a = random_periodic(GroupTag::SpR, 2, 3, 0.7, 11).unwrap();
        let fam = RotationFamily::new(a.clone()).unwrap();
        let pts = all_sites(&fam).unwrap();
        let mm = m_minus(&fam, c(0.0, -8.0), &pts, DEFAULT_MAX_STEPS, 1e-14).unwrap();
        for (x, m) in pts.iter().zip(&mm.values) {
            let target = siegel_geometry::mobius(&linalg::inverse(&a.disc_at(x).unwrap()).unwrap(), &linalg::zeros(2, 2)).unwrap();
            assert!(linalg::op_norm(&(m - target)) < 1e-6);
        }
    }

    #[test]
    fn trace_gap_examples() {
        let x = linalg::from_rows(&[&[0.5]]);
        let y = linalg::zeros(1, 1);
        assert!((trace_gap(&x, &y).unwrap() - 1.0 / 12.0).abs() < 1e-14);
        assert!(trace_gap(&x, &x).unwrap().abs() < 1e-12);
        assert!(matches!(trace_gap(&linalg::eye(1), &y), Err(Error::Domain(_))));
    }

    fn trace_gap_direct(x: &CMat, y: &CMat) -> f64 {
        let id = linalg::eye(x.nrows());
        let yx = y.adjoint() * x;
        let tr = (linalg::inverse(&(&id - &yx)).unwrap() * (&id + &yx)).trace().re;
        0.5 * (singular_weight(x).unwrap() + singular_weight(y).unwrap()) - tr - linalg::hs_norm(&(x - y)).powi(2)
    }

    #[test]
    fn trace_gap_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=3 {
            for _ in 0..200 {
                let x = siegel_geometry::random_disc_point(d, DiscVariant::General, 0.9, &mut rng);
                let y = siegel_geometry::random_disc_point(d, DiscVariant::General, 0.9, &mut rng);
                let direct = trace_gap_direct(&x, &y);
                assert!((trace_gap(&x, &y).unwrap() - direct).abs() < 1e-9 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn elementary_log_inequality() {
        for i in 1..=60 {
            let r = 0.05 * i as f64;
            for j in 0..200 {
                let s = (-r).exp() * j as f64 / 200.0;
                let lhs = (r.exp() * (1.0 - s) / (1.0 - r.exp() * s)).ln();
                assert!(lhs >= r / (1.0 - s) - 1e-12, "r = {r}, s = {s}");
            }
        }
    }

    #[test]
    fn small_t_free_case_in_band() {
        let fam = free_schrodinger(1.0);
        let rep = small_t_diagnostics(&fam, 0.0, &[0.2, 0.1, 0.05, 0.02], spec()).unwrap();
        assert!(!rep.partial);
        assert!(rep.bounded);
        assert!(rep.d_decay >= 10.0, "{rep:?}");
        for w in rep.rows.windows(2) {
            assert!(w[1].d_int < w[0].d_int);
        }
        for r in &rep.rows {
            assert!(r.ld_over_t >= r.singular_bound - 1e-9, "{r:?}");
            assert!((r.singular_bound_unscaled - r.singular_bound).abs() <= 2.0 * r.t);
        }
    }

    #[test]
    fn small_t_rejects_hyperbolic_energy() {
        let fam = free_schrodinger(3.0);
        assert!(matches!(small_t_diagnostics(&fam, 0.0, &[0.1], spec()), Err(Error::Rejected(_))));
    }

    #[test]
    fn key_equation_free_case() {
        let fam = free_schrodinger(1.0);
        let k = key_equation_check(&fam, 0.0, 0.1, spec()).unwrap();
        assert!(k.residual <= 1e-3, "{k:?}");
        assert!((k.lhs - k.lhs_reduced).abs() < 1e-10);
    }

    #[test]
    fn key_equation_energy_family_general_form() {
        let v = linalg::from_rows(&[&[0.3, 0.1], &[0.1, -0.4]]);
        let w = linalg::from_rows(&[&[-0.2, 0.5], &[0.5, 0.1]]);
        let table = Arc::new(vec![v, w]);
        let fam = EnergyFamily {
            base: BaseSystem::Periodic { period: 2 },
            d: 2,
            tag: GroupTag::SpR,
            potential: Arc::new(move |x| Ok(table[x.symbol().unwrap()].clone())),
            e_ref: -5.0,
        };
        let k = key_equation_check(&fam, 0.4, 0.1, spec()).unwrap();
        assert!(k.residual <= 1e-3, "{k:?}");
    }

    #[test]
    fn reconstruction_two_valued() {
        let a0 = rotation_module::transfer_matrix(&linalg::from_rows(&[&[0.3]]), c(0.5, 0.0));
        let a1 = rotation_module::transfer_matrix(&linalg::from_rows(&[&[-1.1]]), c(0.5, 0.0));
        let word = [0usize, 1, 1, 0, 1, 0, 0];
        let mats: Vec<CMat> = word.iter().map(|&w| if w == 0 { a0.clone() } else { a1.clone() }).collect();
        let fam = RotationFamily::new(Cocycle::periodic(mats, Some(GroupTag::SpR)).unwrap()).unwrap();
        let rec = reconstruct_generators(m_minus_oracle(&fam), &[a0, a1], fam.base(), &BasePoint::Index(0), 20).unwrap();
        let expect: Vec<usize> = (0..20).map(|n| word[n % 7]).collect();
        assert_eq!(rec.indices, expect);
        // constant cocycle
        let fam = free_schrodinger(0.3);
        let a = fam.cocycle.at(&BasePoint::Index(0)).unwrap();
        let rec = reconstruct_generators(m_minus_oracle(&fam), &[a], fam.base(), &BasePoint::Index(0), 5).unwrap();
        assert_eq!(rec.indices, vec![0; 5]);
    }

    #[test]
    fn reconstruction_rejects_shared_keys() {
        let a = rotation_module::transfer_matrix(&linalg::from_rows(&[&[0.3]]), c(0.5, 0.0));
        // left multiplication by a matrix fixing 0 keeps A^{-1} . 0
        let r = group_core_rot();
        let b = &r * &a;
        let fam = free_schrodinger(0.2);
        assert!(matches!(
            reconstruct_generators(m_minus_oracle(&fam), &[a, b], fam.base(), &BasePoint::Index(0), 3),
            Err(Error::Ambiguity(_))
        ));
    }

    fn group_core_rot() -> CMat {
        crate::group_core::rotation(1, c(0.7, 0.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn random_periodic_identities(seed in 0u64..10_000, d in 1usize..=2, t in prop::sample::select(vec![0.05, 0.1, 0.2])) {
            let a = random_periodic(GroupTag::SpR, d, 3, 0.8, seed).unwrap();
            let fam = RotationFamily::new(a).unwrap();
            let z = c(0.3, t);
            let pts = all_sites(&fam).unwrap();
            let mp = m_plus(&fam, z, &pts, DEFAULT_MAX_STEPS, 1e-13).unwrap();
            prop_assert!(mp.invariance_residual(&fam, DEFAULT_MAX_STEPS, 1e-13).unwrap() <= 1e-9);
            let mm = m_minus(&fam, z.conj(), &pts, DEFAULT_MAX_STEPS, 1e-13).unwrap();
            prop_assert!(mm.invariance_residual(&fam, DEFAULT_MAX_STEPS, 1e-13).unwrap() <= 1e-9);
            prop_assert!(conjugate_relation_check(&fam, &mm, DEFAULT_MAX_STEPS, 1e-13).unwrap() <= 1e-7);
            prop_assert!(herglotz_margin(&mp).unwrap() > 0.0);
            let ids = ld_identities_check(&fam, z, spec()).unwrap();
            prop_assert!(ids.res_tau <= 1e-6 && ids.res_q <= 1e-6, "{:?}", ids);
            let k = key_equation_check(&fam, 0.3, t, spec()).unwrap();
            prop_assert!(k.residual <= 5e-3, "{:?}", k);
            prop_assert!((k.lhs - k.lhs_reduced).abs() < 1e-9);
        }

        #[test]
        fn hermitian_identities_use_general_power(seed in 0u64..10_000) {
            let a = random_periodic(GroupTag::SHSp, 2, 2, 0.6, seed).unwrap();
            let fam = RotationFamily::new(a).unwrap();
            let ids = ld_identities_check(&fam, c(0.0, 0.15), spec()).unwrap();
            prop_assert!(ids.res_tau <= 1e-5 && ids.res_q <= 1e-5, "{:?}", ids);
        }

        #[test]
        fn trace_gap_is_nonnegative(seed in 0u64..u64::MAX, d in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let variant = if rng.gen_bool(0.5) { DiscVariant::Symmetric } else { DiscVariant::General };
            let r1 = rng.gen_range(0.0..0.999);
            let r2 = rng.gen_range(0.0..0.999);
            let x = siegel_geometry::random_disc_point(d, variant, r1, &mut rng);
            let y = siegel_geometry::random_disc_point(d, variant, r2, &mut rng);
            prop_assert!(trace_gap(&x, &y).unwrap() >= -1e-12);
        }
    }
}
