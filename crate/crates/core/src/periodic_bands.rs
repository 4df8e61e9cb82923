//! Spectral bands of one-parameter families of periodic cocycles, spectral projections
//! and canonical bases of Hermitian symplectic planes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle_engine::{BasePoint, Cocycle};
use crate::error::{Error, Result};
use crate::group_core;
use crate::linalg::{self, c, CMat, C64};
use crate::rotation_module::transfer_matrix;
use crate::strip_operators::StripPotential;

pub const TOL_UNIT: f64 = 1e-8;
pub const TOL_SEP: f64 = 1e-6;

/// A one-parameter family of periodic cocycles, seen through its period map.
pub trait PeriodFamily: Sync {
    fn period(&self) -> usize;
    fn d(&self) -> usize;
    /// `A_s(f^{n-1} x_0) ... A_s(x_0)`.
    fn period_map(&self, s: f64) -> Result<CMat>;
}

/// `A_theta(x) = R(theta) A(x)` over a periodic base.
#[derive(Debug, Clone)]
pub struct ThetaFamily {
    pub cocycle: Cocycle,
}

impl ThetaFamily {
    pub fn new(cocycle: Cocycle) -> Result<Self> {
        if cocycle.base.period().is_none() {
            return Err(Error::Domain("band scans need a periodic base".into()));
        }
        Ok(ThetaFamily { cocycle })
    }
}

impl PeriodFamily for ThetaFamily {
    fn period(&self) -> usize {
        self.cocycle.base.period().unwrap_or(1)
    }

    fn d(&self) -> usize {
        self.cocycle.d
    }

    fn period_map(&self, theta: f64) -> Result<CMat> {
        let mut m = linalg::eye(2 * self.d());
        for i in 0..self.period() {
            let a = if self.cocycle.disc_form {
                group_core::cayley_unconjugate(&self.cocycle.at(&BasePoint::Index(i))?)?
            } else {
                self.cocycle.at(&BasePoint::Index(i))?
            };
            m = group_core::rotation_deform(&a, c(theta, 0.0))? * m;
        }
        Ok(m)
    }
}

/// `E -> A^{(E - v)}` over a periodic potential.
#[derive(Debug, Clone)]
pub struct EnergyBandFamily {
    pub potential: StripPotential,
    pub period: usize,
}

impl PeriodFamily for EnergyBandFamily {
    fn period(&self) -> usize {
        self.period
    }

    fn d(&self) -> usize {
        self.potential.d
    }

    fn period_map(&self, e: f64) -> Result<CMat> {
        let mut m = linalg::eye(2 * self.d());
        for i in 0..self.period {
            m = transfer_matrix(&self.potential.at(&BasePoint::Index(i))?, c(e, 0.0)) * m;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaClass {
    AllSimpleUnimodular,
    HasOffCircle,
    HasCollision,
}

/// Classifies the spectrum of a period map.
pub fn classify_matrix(m: &CMat, tol_unit: f64, tol_sep: f64) -> Result<ThetaClass> {
    let ev = linalg::eigenvalues(m)?;
    if ev.iter().any(|l| l.norm().ln().abs() > tol_unit) {
        return Ok(ThetaClass::HasOffCircle);
    }
    for i in 0..ev.len() {
        for j in 0..i {
            if (ev[i] - ev[j]).norm() < tol_sep {
                return Ok(ThetaClass::HasCollision);
            }
        }
    }
    Ok(ThetaClass::AllSimpleUnimodular)
}

pub fn classify_theta<F: PeriodFamily + ?Sized>(family: &F, s: f64, tol_unit: f64, tol_sep: f64) -> Result<ThetaClass> {
    classify_matrix(&family.period_map(s)?, tol_unit, tol_sep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandEdge {
    /// Two eigenvalues meet on the circle.
    Collision,
    /// Eigenvalues leave the circle.
    OffCircle,
    /// The band reaches the end of the scanned range.
    RangeEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub start: f64,
    pub end: f64,
    pub length: f64,
    pub start_edge: BandEdge,
    pub end_edge: BandEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub n: usize,
    pub d: usize,
    pub range: (f64, f64),
    pub bands: Vec<Band>,
    /// Parameters where a band ends in a collision.
    pub collisions: Vec<f64>,
    /// `2 pi / n`.
    pub bound: f64,
    pub max_length: f64,
}

impl BandReport {
    /// Whether every band is shorter than `2 pi / n` times `1 + slack`.
    pub fn within_bound(&self, slack: f64) -> bool {
        self.bands.iter().all(|b| b.length <= self.bound * (1.0 + slack))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandOptions {
    pub grid: usize,
    pub refine_tol: f64,
    pub tol_unit: f64,
    pub tol_sep: f64,
    /// Treat the range as a circle and merge bands across its ends.
    pub wrap: bool,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions { grid: 4096, refine_tol: 1e-10, tol_unit: TOL_UNIT, tol_sep: TOL_SEP, wrap: false }
    }
}

fn spectral_gap(ev: &[C64]) -> f64 {
    let mut g = f64::INFINITY;
    for i in 0..ev.len() {
        for j in 0..i {
            g = g.min((ev[i] - ev[j]).norm());
        }
    }
    g
}

fn classify_with_gap<F: PeriodFamily + ?Sized>(family: &F, s: f64, opts: &BandOptions) -> Result<(ThetaClass, f64)> {
    let ev = linalg::eigenvalues(&family.period_map(s)?)?;
    let gap = spectral_gap(&ev);
    let class = if ev.iter().any(|l| l.norm().ln().abs() > opts.tol_unit) {
        ThetaClass::HasOffCircle
    } else if gap < opts.tol_sep {
        ThetaClass::HasCollision
    } else {
        ThetaClass::AllSimpleUnimodular
    };
    Ok((class, gap))
}

/// Coarse classification on a uniform grid, then bisection of every band edge. Collisions
/// inside a run of good grid points are isolated parameters; they are located by minimizing
/// the eigenvalue gap around each of its grid local minima.
pub fn band_scan<F: PeriodFamily + ?Sized>(family: &F, range: (f64, f64), opts: BandOptions) -> Result<BandReport> {
    let (a, b) = range;
    if !(b > a) || opts.grid < 3 {
        return Err(Error::Input("band scan needs an increasing range and at least three grid points".into()));
    }
    let grid = opts.grid;
    let step = (b - a) / grid as f64;
    let pts: Vec<f64> = (0..grid).map(|i| a + i as f64 * step).collect();
    let info: Vec<(ThetaClass, f64)> = pts.par_iter().map(|&s| classify_with_gap(family, s, &opts)).collect::<Result<_>>()?;
    let good = |k: usize| info[k].0 == ThetaClass::AllSimpleUnimodular;
    let in_band = |s: f64| -> Result<bool> { Ok(classify_with_gap(family, s, &opts)?.0 == ThetaClass::AllSimpleUnimodular) };
    // bisect between an inside point and an outside point
    let refine = |inside: f64, outside: f64| -> Result<(f64, BandEdge)> {
        let (mut lo, mut hi) = (inside, outside);
        while (hi - lo).abs() > opts.refine_tol {
            let mid = 0.5 * (lo + hi);
            if in_band(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let edge = match classify_with_gap(family, hi, &opts)?.0 {
            ThetaClass::HasOffCircle => BandEdge::OffCircle,
            _ => BandEdge::Collision,
        };
        Ok((lo, edge))
    };
    // golden-section minimum of the gap on [lo, hi]
    let gap_min = |mut lo: f64, mut hi: f64| -> Result<(f64, f64)> {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let gap = |s: f64| -> Result<f64> { Ok(spectral_gap(&linalg::eigenvalues(&family.period_map(s)?)?)) };
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut g1, mut g2) = (gap(x1)?, gap(x2)?);
        while hi - lo > opts.refine_tol {
            if g1 < g2 {
                hi = x2;
                x2 = x1;
                g2 = g1;
                x1 = hi - r * (hi - lo);
                g1 = gap(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                g1 = g2;
                x2 = lo + r * (hi - lo);
                g2 = gap(x2)?;
            }
        }
        let s = 0.5 * (lo + hi);
        Ok((s, gap(s)?))
    };
    let mut raw: Vec<Band> = Vec::new();
    let mut k = 0;
    while k < grid {
        if !good(k) {
            k += 1;
            continue;
        }
        let first = k;
        while k < grid && good(k) {
            k += 1;
        }
        let last = k - 1;
        let (start, start_edge) = if first == 0 { (a, BandEdge::RangeEnd) } else { refine(pts[first], pts[first - 1])? };
        let (end, end_edge) = if last == grid - 1 {
            if in_band(b)? {
                (b, BandEdge::RangeEnd)
            } else {
                refine(pts[last], b)?
            }
        } else {
            refine(pts[last], pts[last + 1])?
        };
        let mut cuts = Vec::new();
        let mut j = first;
        while j <= last {
            let lo = if j == first { start } else { pts[j - 1] };
            let hi = if j == last { end } else { pts[j + 1] };
            let g = info[j].1;
            let left_ok = j == first || info[j - 1].1 >= g;
            let right_ok = j == last || info[j + 1].1 > g;
            if left_ok && right_ok && hi > lo {
                let (s, gmin) = gap_min(lo, hi)?;
                if gmin < opts.tol_sep && s > start && s < end && cuts.last().is_none_or(|&c: &f64| s - c > opts.refine_tol) {
                    cuts.push(s);
                }
            }
            j += 1;
        }
        let mut edges = vec![(start, start_edge)];
        for &c in &cuts {
            edges.push((c, BandEdge::Collision));
        }
        edges.push((end, end_edge));
        for w in edges.windows(2) {
            raw.push(Band { start: w[0].0, end: w[1].0, length: w[1].0 - w[0].0, start_edge: w[0].1, end_edge: w[1].1 });
        }
    }
    if opts.wrap && raw.len() > 1 {
        let first = raw[0];
        let last = raw[raw.len() - 1];
        if first.start_edge == BandEdge::RangeEnd && last.end_edge == BandEdge::RangeEnd {
            raw.remove(0);
            let n = raw.len();
            raw[n - 1] = Band {
                start: last.start,
                end: first.end + (b - a),
                length: last.length + first.length,
                start_edge: last.start_edge,
                end_edge: first.end_edge,
            };
        }
    }
    let collisions = raw
        .iter()
        .flat_map(|bd| {
            let mut v = Vec::new();
            if bd.start_edge == BandEdge::Collision {
                v.push(bd.start);
            }
            if bd.end_edge == BandEdge::Collision {
                v.push(bd.end);
            }
            v
        })
        .collect();
    let n = family.period();
    let max_length = raw.iter().map(|bd| bd.length).fold(0.0, f64::max);
    Ok(BandReport { n, d: family.d(), range, bands: raw, collisions, bound: 2.0 * std::f64::consts::PI / n as f64, max_length })
}

/// Full-circle scan of a rotation family: classification is `pi`-periodic in `theta`.
pub fn band_scan_theta(family: &ThetaFamily, grid: usize, refine_tol: f64) -> Result<BandReport> {
    band_scan(family, (0.0, std::f64::consts::PI), BandOptions { grid, refine_tol, wrap: true, ..BandOptions::default() })
}

/// Draws with two collisions closer than `tol` (a band of negligible length) are treated as
/// degenerate.
pub fn is_generic(report: &BandReport, tol: f64) -> bool {
    report.bands.iter().all(|b| b.length > tol)
}

fn eval_poly_at_matrix(m: &CMat, roots: &[C64]) -> CMat {
    let n = m.nrows();
    let mut p = linalg::eye(n);
    for r in roots {
        p *= m - linalg::eye(n) * *r;
    }
    p
}

/// Projection onto the invariant subspace of the eigenvalues with indices `selector` (in the
/// order of [`linalg::eigenvalues`]) along the invariant subspace of the others.
pub fn spectral_projection(m: &CMat, selector: &[usize]) -> Result<CMat> {
    let n = m.nrows();
    let ev = linalg::eigenvalues(m)?;
    if selector.iter().any(|&i| i >= n) {
        return Err(Error::Input("eigenvalue index out of range".into()));
    }
    let sel: Vec<C64> = selector.iter().map(|&i| ev[i]).collect();
    let rest: Vec<C64> = (0..n).filter(|i| !selector.contains(i)).map(|i| ev[i]).collect();
    if rest.is_empty() {
        return Ok(linalg::eye(n));
    }
    if sel.is_empty() {
        return Ok(linalg::zeros(n, n));
    }
    let sep = sel.iter().flat_map(|a| rest.iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min);
    if sep < TOL_SEP {
        return Err(Error::Conditioning(format!("selected eigenvalues are {sep:.3e} from the rest")));
    }
    let v = linalg::null_basis(&eval_poly_at_matrix(m, &sel), sel.len())?;
    let u = linalg::null_basis(&eval_poly_at_matrix(m, &rest), rest.len())?;
    let mut vu = linalg::zeros(n, n);
    vu.view_mut((0, 0), (n, sel.len())).copy_from(&v);
    vu.view_mut((0, sel.len()), (n, rest.len())).copy_from(&u);
    let mut v0 = linalg::zeros(n, n);
    v0.view_mut((0, 0), (n, sel.len())).copy_from(&v);
    Ok(v0 * linalg::inverse_checked(&vu, 1e12)?)
}

/// `|l1 + l2| / |sqrt(l1 l2)|`, at most 2 with equality iff `l1 = l2` on the circle.
pub fn pair_ratio_diagnostic(l1: C64, l2: C64) -> Result<f64> {
    if (l1.norm() - 1.0).abs() > 1e-6 || (l2.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::Domain("pair ratio needs unimodular eigenvalues".into()));
    }
    Ok((l1 + l2).norm() / (l1 * l2).norm().sqrt())
}

/// Both sides of the stationarity identity
/// `2 s'(theta_0) p(theta_0) = s(theta_0) p'(theta_0)` for the colliding pair with
/// sum `s = tr(P A)` and product `p = tr Lambda^2(P A)`.
pub fn collision_identity<F: PeriodFamily + ?Sized>(family: &F, theta0: f64, h: f64) -> Result<(C64, C64)> {
    let ev0 = linalg::eigenvalues(&family.period_map(theta0)?)?;
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..ev0.len() {
        for j in 0..i {
            let g = (ev0[i] - ev0[j]).norm();
            if g < best.2 {
                best = (j, i, g);
            }
        }
    }
    let centre = 0.5 * (ev0[best.0] + ev0[best.1]);
    let pair = |s: f64| -> Result<(C64, C64)> {
        let mut ev = linalg::eigenvalues(&family.period_map(s)?)?;
        ev.sort_by(|a, b| (a - centre).norm().total_cmp(&(b - centre).norm()));
        Ok((ev[0] + ev[1], ev[0] * ev[1]))
    };
    let (s0, p0) = pair(theta0)?;
    let (sp, pp) = pair(theta0 + h)?;
    let (sm, pm) = pair(theta0 - h)?;
    let ds = (sp - sm) / (2.0 * h);
    let dp = (pp - pm) / (2.0 * h);
    Ok((ds * p0 * 2.0, s0 * dp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveTheta {
    pub theta: f64,
    /// `(1/n) ln` of the spectral radius of the period map.
    pub top: f64,
    /// `(1/n) sum ln |lambda|` over eigenvalues outside the circle.
    pub ld: f64,
}

/// Scans `(-C/n, C/n)` outward from `0` for a parameter with a hyperbolic period map.
pub fn find_positive_theta(family: &ThetaFamily, c_const: f64, grid: usize, tol: f64) -> Result<Option<PositiveTheta>> {
    let n = family.period();
    let half = c_const / n as f64;
    let mut order: Vec<f64> = vec![0.0];
    for k in 1..=grid {
        let s = half * k as f64 / (grid + 1) as f64;
        order.push(s);
        order.push(-s);
    }
    for theta in order {
        let ev = linalg::eigenvalues(&family.period_map(theta)?)?;
        let r = ev.iter().map(|l| l.norm()).fold(0.0, f64::max);
        if r > 1.0 + tol {
            let ld = ev.iter().map(|l| l.norm().ln()).filter(|x| *x > 0.0).sum::<f64>() / n as f64;
            return Ok(Some(PositiveTheta { theta, top: r.ln() / n as f64, ld }));
        }
    }
    Ok(None)
}

/// `<phi, psi> = phi^* J psi`.
pub fn hs_form(phi: &CMat, psi: &CMat) -> C64 {
    let d = phi.nrows() / 2;
    (phi.adjoint() * linalg::j_matrix(d) * psi)[(0, 0)]
}

/// Canonical basis `(v, w)` of a two-dimensional Hermitian symplectic subspace spanned by the
/// columns of `basis`: `<v,v> = <w,w> = 0`, `<v,w> = 1`.
pub fn canonical_pair_normalize(basis: &CMat) -> Result<(CMat, CMat)> {
    if basis.ncols() != 2 || !basis.nrows().is_multiple_of(2) {
        return Err(Error::Dimension("need a 2d x 2 basis".into()));
    }
    let d = basis.nrows() / 2;
    let v0 = basis.columns(0, 1).into_owned();
    let w0 = basis.columns(1, 1).into_owned();
    let done = |v: &CMat, w: &CMat| hs_form(v, v).norm() < 1e-12 && hs_form(w, w).norm() < 1e-12 && (hs_form(v, w) - linalg::ONE).norm() < 1e-12;
    if done(&v0, &w0) {
        return Ok((v0, w0));
    }
    let g = basis.adjoint() * linalg::j_matrix(d) * basis;
    let scale = linalg::op_norm(basis).powi(2);
    let h = &g * c(0.0, -1.0);
    let (mut mu, mut u) = linalg::hermitian_eigen(&linalg::hermitian_part(&h));
    if mu[0] > mu[1] {
        mu.swap(0, 1);
        u.swap_columns(0, 1);
    }
    if mu[0].abs() < 1e-10 * scale || mu[1].abs() < 1e-10 * scale {
        return Err(Error::Domain("the form is degenerate on this plane".into()));
    }
    if mu[0] > 0.0 || mu[1] < 0.0 {
        return Err(Error::Domain("the plane has no isotropic line, so no canonical basis".into()));
    }
    let c1 = u.columns(0, 1).into_owned() * c(1.0 / mu[0].abs().sqrt(), 0.0);
    let c2 = u.columns(1, 1).into_owned() * c(1.0 / mu[1].sqrt(), 0.0);
    let v = basis * (&c1 + &c2);
    let w = basis * (&c1 - &c2) * c(0.0, 0.5);
    Ok((v, w))
}
