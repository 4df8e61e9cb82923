//! Holomorphic deformations of cocycles, the fibered rotation function and the
//! holomorphic function `zeta = rho - i L^d`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle_engine::{self, BasePoint, BaseSystem, Cocycle, GeneratorFn, LyapunovMethod, SampleSpec};
use crate::error::{Error, Result};
use crate::group_core::{self, GroupTag};
use crate::linalg::{self, c, CMat, C64};
use crate::siegel_geometry::{self, PhaseLift};

/// A family `z -> A_z` of cocycles over a fixed base, holomorphic in `z`.
pub trait DeformedFamily: Send + Sync {
    fn base(&self) -> &BaseSystem;
    fn d(&self) -> usize;
    /// Group of the real-parameter members.
    fn tag(&self) -> GroupTag;
    /// `A_z(x)`.
    fn real_at(&self, x: &BasePoint, z: C64) -> Result<CMat>;
    /// Disc side `C A_z(x) C^{-1}`.
    fn disc_at(&self, x: &BasePoint, z: C64) -> Result<CMat> {
        group_core::cayley_conjugate(&self.real_at(x, z)?)
    }
    /// `(d/dt disc_at(x, s + it)) disc_at(x, s + it)^{-1}`.
    fn t_generator(&self, x: &BasePoint, z: C64) -> Result<CMat>;
    /// Parameter at which the rotation function is normalized to zero.
    fn reference(&self) -> C64;
    /// Increment of a continuous `arg det D_z(x)` along the segment `z0 -> z1`.
    fn arg_det_d_increment(&self, x: &BasePoint, z0: C64, z1: C64) -> Result<f64> {
        let f = |s: f64| -> Result<f64> {
            let z = z0 + (z1 - z0) * s;
            let (_, _, _, db) = linalg::blocks(&self.disc_at(x, z)?);
            Ok(linalg::det(&db).arg())
        };
        let mut lift = PhaseLift::new();
        let pieces = 8;
        let mut v = f(0.0)?;
        let v0 = v;
        for i in 0..pieces {
            let s0 = i as f64 / pieces as f64;
            let s1 = (i + 1) as f64 / pieces as f64;
            v = siegel_geometry::continue_phase(&f, s0, s1, v, &mut lift)?;
        }
        Ok(v - v0)
    }
    /// The cocycle `A_z`.
    fn cocycle_at(&self, z: C64) -> Result<Cocycle>;
}

/// `A_z(x) = R(z) A(x)`.
#[derive(Debug, Clone)]
pub struct RotationFamily {
    pub cocycle: Cocycle,
}

impl RotationFamily {
    pub fn new(cocycle: Cocycle) -> Result<Self> {
        match cocycle.tag {
            Some(GroupTag::SpR | GroupTag::SHSp | GroupTag::HSp | GroupTag::Udd | GroupTag::SUdd | GroupTag::UddCapSpC) => {
                Ok(RotationFamily { cocycle })
            }
            other => Err(Error::Domain(format!("rotation family needs a real or Hermitian symplectic cocycle, got {other:?}"))),
        }
    }

    fn real_tag(&self) -> GroupTag {
        match self.cocycle.tag {
            Some(GroupTag::UddCapSpC) => GroupTag::SpR,
            Some(GroupTag::Udd) => GroupTag::HSp,
            Some(GroupTag::SUdd) => GroupTag::SHSp,
            Some(t) => t,
            None => GroupTag::SpC,
        }
    }
}

impl DeformedFamily for RotationFamily {
    fn base(&self) -> &BaseSystem {
        &self.cocycle.base
    }

    fn d(&self) -> usize {
        self.cocycle.d
    }

    fn tag(&self) -> GroupTag {
        self.real_tag()
    }

    fn real_at(&self, x: &BasePoint, z: C64) -> Result<CMat> {
        let m = if self.cocycle.disc_form {
            group_core::cayley_unconjugate(&self.cocycle.at(x)?)?
        } else {
            self.cocycle.at(x)?
        };
        group_core::rotation_deform(&m, z)
    }

    fn disc_at(&self, x: &BasePoint, z: C64) -> Result<CMat> {
        Ok(group_core::rotation_cayley(self.d(), z) * self.cocycle.disc_at(x)?)
    }

    fn t_generator(&self, _x: &BasePoint, _z: C64) -> Result<CMat> {
        Ok(linalg::diag_blocks(-linalg::ONE, linalg::ONE, self.d()))
    }

    fn reference(&self) -> C64 {
        linalg::ZERO
    }

    fn arg_det_d_increment(&self, _x: &BasePoint, z0: C64, z1: C64) -> Result<f64> {
        // D_z = e^{-iz} D_0
        Ok(-(self.d() as f64) * (z1 - z0).re)
    }

    fn cocycle_at(&self, z: C64) -> Result<Cocycle> {
        let fam = self.clone();
        Cocycle::from_fn(self.cocycle.base.clone(), self.d(), None, move |x| fam.real_at(x, z))
    }
}

/// Schrödinger transfer family `A_E(x) = [[E I - V(x), -I], [I, 0]]`.
#[derive(Clone)]
pub struct EnergyFamily {
    pub base: BaseSystem,
    pub d: usize,
    pub tag: GroupTag,
    pub potential: Arc<GeneratorFn>,
    pub e_ref: f64,
}

impl std::fmt::Debug for EnergyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyFamily")
            .field("base", &self.base)
            .field("d", &self.d)
            .field("tag", &self.tag)
            .field("e_ref", &self.e_ref)
            .finish()
    }
}

/// `[[z I - v, -I], [I, 0]]`.
pub fn transfer_matrix(v: &CMat, z: C64) -> CMat {
    let d = v.nrows();
    let id = linalg::eye(d);
    linalg::block2(&(&id * z - v), &(-&id), &id, &linalg::zeros(d, d))
}

impl DeformedFamily for EnergyFamily {
    fn base(&self) -> &BaseSystem {
        &self.base
    }

    fn d(&self) -> usize {
        self.d
    }

    fn tag(&self) -> GroupTag {
        self.tag
    }

    fn real_at(&self, x: &BasePoint, z: C64) -> Result<CMat> {
        Ok(transfer_matrix(&(self.potential)(x)?, z))
    }

    fn t_generator(&self, _x: &BasePoint, _z: C64) -> Result<CMat> {
        // (d/dt A) A^{-1} = [[0, i I], [0, 0]]
        let d = self.d;
        let w = linalg::block2(&linalg::zeros(d, d), &(linalg::eye(d) * linalg::I), &linalg::zeros(d, d), &linalg::zeros(d, d));
        group_core::cayley_conjugate(&w)
    }

    fn reference(&self) -> C64 {
        c(self.e_ref, 0.0)
    }

    fn cocycle_at(&self, z: C64) -> Result<Cocycle> {
        let fam = self.clone();
        let tag = if z.im == 0.0 { Some(self.tag) } else { None };
        Cocycle::from_fn(self.base.clone(), self.d, tag, move |x| fam.real_at(x, z))
    }
}

/// One value of `zeta = rho - i L^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaValue {
    pub sigma: f64,
    pub t: f64,
    pub rho: f64,
    pub ld: f64,
    /// Bound on the finite-orbit error of `rho` (zero for exact periodic evaluation).
    pub rho_bound: f64,
    pub ld_stderr: f64,
}

impl ZetaValue {
    pub fn zeta(&self) -> C64 {
        c(self.rho, -self.ld)
    }
}

/// Orbit starting points shared by every parameter value.
fn orbit_starts(base: &BaseSystem, spec: SampleSpec) -> Vec<BasePoint> {
    match base {
        BaseSystem::FiniteShift { .. } => base.sample_points(spec.samples.max(1), 0, spec.n, spec.seed),
        _ => vec![base.start_point(0, spec.n, spec.seed)],
    }
}

fn orbit_length(base: &BaseSystem, n: usize) -> usize {
    match base.period() {
        Some(p) => n.div_ceil(p).max(1) * p,
        None => n,
    }
}

/// Per-step phase contribution `arg det D` increment plus `Im ell(K, Z)`.
struct StepData {
    m: CMat,
    k: CMat,
    dtheta: f64,
}

fn step_data<F: DeformedFamily + ?Sized>(family: &F, x: &BasePoint, z: C64) -> Result<StepData> {
    let m = family.disc_at(x, z)?;
    let (_, k) = siegel_geometry::d_block_and_k(&m)?;
    let dtheta = family.arg_det_d_increment(x, family.reference(), z)?;
    Ok(StepData { m, k, dtheta })
}

/// Orbit average of the lifted phase of `det tau` from the Shilov point `I`.
fn orbit_phase_average<F: DeformedFamily + ?Sized>(family: &F, z: C64, x0: &BasePoint, n: usize) -> Result<f64> {
    let d = family.d();
    let base = family.base();
    let mut zc = linalg::eye(d);
    let mut sum = 0.0;
    if let Some(p) = base.period() {
        let cache: Vec<StepData> = (0..p).map(|i| step_data(family, &BasePoint::Index(i), z)).collect::<Result<_>>()?;
        let start = match x0 {
            BasePoint::Index(i) => *i,
            _ => 0,
        };
        for k in 0..n {
            let s = &cache[(start + k) % p];
            sum += s.dtheta + siegel_geometry::ell(&s.k, &zc)?.im;
            zc = siegel_geometry::mobius(&s.m, &zc)?;
        }
    } else {
        let mut x = x0.clone();
        for _ in 0..n {
            let s = step_data(family, &x, z)?;
            sum += s.dtheta + siegel_geometry::ell(&s.k, &zc)?.im;
            zc = siegel_geometry::mobius(&s.m, &zc)?;
            x = base.step(&x, 1)?;
        }
    }
    Ok(sum / n as f64)
}

/// Tolerance and iteration cap for fixed points of period maps.
const FIXED_POINT_TOL: f64 = 1e-13;
const FIXED_POINT_MAX_STEPS: usize = 20_000_000;

/// `m^+` at every site of a periodic base, from the attracting fixed point of the period map.
pub fn periodic_m_plus<F: DeformedFamily + ?Sized>(family: &F, z: C64) -> Result<Vec<CMat>> {
    let p = family.base().period().ok_or_else(|| Error::Domain("needs a periodic base".into()))?;
    if z.im <= 0.0 {
        return Err(Error::Domain("m+ needs Im z > 0".into()));
    }
    let mats: Vec<CMat> = (0..p).map(|i| family.disc_at(&BasePoint::Index(i), z)).collect::<Result<_>>()?;
    let d = family.d();
    let (m0, _, _) = siegel_geometry::attracting_fixed_point(&mats, &linalg::zeros(d, d), FIXED_POINT_TOL, (FIXED_POINT_MAX_STEPS / p).max(1))?;
    let mut out = Vec::with_capacity(p);
    let mut zc = m0;
    for m in &mats {
        out.push(zc.clone());
        zc = siegel_geometry::mobius(m, &zc)?;
    }
    Ok(out)
}

fn exact_periodic_phase<F: DeformedFamily + ?Sized>(family: &F, z: C64) -> Result<f64> {
    let p = family.base().period().unwrap_or(1);
    let mp = periodic_m_plus(family, z)?;
    let mut sum = 0.0;
    for (i, m) in mp.iter().enumerate() {
        let s = step_data(family, &BasePoint::Index(i), z)?;
        sum += s.dtheta + siegel_geometry::ell(&s.k, m)?.im;
    }
    Ok(sum / p as f64)
}

/// Average of the lifted phase over all orbit starts.
fn phase_average<F: DeformedFamily + ?Sized>(family: &F, z: C64, spec: SampleSpec) -> Result<(f64, bool)> {
    if family.base().period().is_some() && z.im > 1e-12 {
        return Ok((exact_periodic_phase(family, z)?, true));
    }
    let n = orbit_length(family.base(), spec.n);
    let starts = orbit_starts(family.base(), spec);
    let mut acc = 0.0;
    for x in &starts {
        acc += orbit_phase_average(family, z, x, n)?;
    }
    Ok((acc / starts.len() as f64, false))
}

/// `L^d(A_z)`.
pub fn ld_at<F: DeformedFamily + ?Sized>(family: &F, z: C64, spec: SampleSpec) -> Result<(f64, f64)> {
    let rep = cocycle_engine::lyapunov_spectrum(&family.cocycle_at(z)?, spec, LyapunovMethod::Auto)?;
    let d = family.d();
    let se = rep.stderr[..d].iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok((rep.ld(), se))
}

/// `rho(z)` normalized by `rho(reference) = 0`. On the real axis the orbit starts at the
/// Shilov point `I`; for `Im z > 0` over periodic bases the exact `m^+` average is used.
pub fn rotation_function<F: DeformedFamily + ?Sized>(family: &F, targets: &[C64], spec: SampleSpec) -> Result<Vec<ZetaValue>> {
    if spec.n == 0 {
        return Err(Error::Input("orbit length must be positive".into()));
    }
    if let Some(z) = targets.iter().find(|z| z.im < 0.0) {
        return Err(Error::Domain(format!("target {z} is below the real axis")));
    }
    let (c_ref, _) = phase_average(family, family.reference(), spec)?;
    let n = orbit_length(family.base(), spec.n) as f64;
    let d = family.d() as f64;
    targets
        .par_iter()
        .map(|&z| {
            let (raw, exact) = phase_average(family, z, spec)?;
            let (ld, ld_se) = ld_at(family, z, spec)?;
            Ok(ZetaValue {
                sigma: z.re,
                t: z.im,
                rho: raw - c_ref,
                ld,
                rho_bound: if exact { d * std::f64::consts::PI / n } else { 2.0 * d * std::f64::consts::PI / n },
                ld_stderr: ld_se,
            })
        })
        .collect()
}

/// Polygonal parameter path for phase continuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationPath {
    pub nodes: Vec<(f64, f64)>,
}

impl RotationPath {
    pub fn new(nodes: &[C64]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Input("a path needs at least two nodes".into()));
        }
        Ok(RotationPath { nodes: nodes.iter().map(|z| (z.re, z.im)).collect() })
    }

    pub fn segment(z0: C64, z1: C64) -> Self {
        RotationPath { nodes: vec![(z0.re, z0.im), (z1.re, z1.im)] }
    }

    /// Point at arclength-free parameter `s in [0, 1]`, uniform per segment.
    pub fn point(&self, s: f64) -> C64 {
        let segs = self.nodes.len() - 1;
        let u = (s.clamp(0.0, 1.0) * segs as f64).min(segs as f64 - 1e-15);
        let i = u.floor() as usize;
        let f = u - i as f64;
        let a = c(self.nodes[i].0, self.nodes[i].1);
        let b = c(self.nodes[i + 1].0, self.nodes[i + 1].1);
        a + (b - a) * f
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Change of `tau_hat = -i log det tau(A_z(x), Z)` along `path`, with `Z` moving
/// linearly from `z0` to `z1`, by direct continuation of `arg det tau`.
pub fn delta_xi<F: DeformedFamily + ?Sized>(family: &F, path: &RotationPath, x: &BasePoint, z0: &CMat, z1: &CMat) -> Result<C64> {
    let d = family.d();
    if z0.nrows() != d || z1.nrows() != d {
        return Err(Error::Dimension("disc points do not match the family".into()));
    }
    let tau_det = |s: f64| -> Result<C64> {
        let z = path.point(s);
        let zz = z0 * c(1.0 - s, 0.0) + z1 * c(s, 0.0);
        Ok(linalg::det(&siegel_geometry::tau(&family.disc_at(x, z)?, &zz)?))
    };
    let f = |s: f64| -> Result<f64> { Ok(tau_det(s)?.arg()) };
    let pieces = 16 * path.segments();
    let mut lift = PhaseLift::new();
    let start = f(0.0)?;
    let mut v = start;
    for i in 0..pieces {
        let s0 = i as f64 / pieces as f64;
        let s1 = (i + 1) as f64 / pieces as f64;
        v = siegel_geometry::continue_phase(&f, s0, s1, v, &mut lift)?;
    }
    let m0 = tau_det(0.0)?.norm();
    let m1 = tau_det(1.0)?.norm();
    if m0 == 0.0 || m1 == 0.0 {
        return Err(Error::BoundaryAtInfinity(f64::INFINITY));
    }
    Ok(c(v - start, -(m1.ln() - m0.ln())))
}

/// The same change computed from the split `det tau = det D det(I + K Z)`.
pub fn delta_xi_split<F: DeformedFamily + ?Sized>(family: &F, x: &BasePoint, za: C64, zb: C64, z0: &CMat, z1: &CMat) -> Result<C64> {
    let ma = family.disc_at(x, za)?;
    let mb = family.disc_at(x, zb)?;
    let (da, ka) = siegel_geometry::d_block_and_k(&ma)?;
    let (db, kb) = siegel_geometry::d_block_and_k(&mb)?;
    let dtheta = family.arg_det_d_increment(x, za, zb)?;
    let la = siegel_geometry::ell(&ka, z0)?;
    let lb = siegel_geometry::ell(&kb, z1)?;
    let re = dtheta + lb.im - la.im;
    let im = -((linalg::det(&db).norm().ln() + lb.re) - (linalg::det(&da).norm().ln() + la.re));
    Ok(c(re, im))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyRiemann {
    pub d_ld_dt: f64,
    pub d_rho_dsigma: f64,
    pub residual: f64,
}

/// Finite-difference check of `dL^d/dt = -d rho/d sigma` at `sigma + i t`.
pub fn cauchy_riemann_check<F: DeformedFamily + ?Sized>(family: &F, sigma: f64, t: f64, h: f64, spec: SampleSpec) -> Result<CauchyRiemann> {
    if t - h <= 0.0 {
        return Err(Error::Domain("need t > h".into()));
    }
    let targets = [c(sigma + h, t), c(sigma - h, t), c(sigma, t + h), c(sigma, t - h)];
    let v = rotation_function(family, &targets, spec)?;
    let d_rho = (v[0].rho - v[1].rho) / (2.0 * h);
    let d_ld = (v[2].ld - v[3].ld) / (2.0 * h);
    Ok(CauchyRiemann { d_ld_dt: d_ld, d_rho_dsigma: d_rho, residual: (d_ld + d_rho).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicProbe {
    pub center_value: f64,
    pub circle_mean: f64,
    /// `circle_mean - center_value`, non-negative for subharmonic functions.
    pub excess: f64,
}

/// Circle mean of `L^d(A_z)` around `center` against the center value.
pub fn subharmonicity_probe<F: DeformedFamily + ?Sized>(family: &F, center: C64, radius: f64, m: usize, spec: SampleSpec) -> Result<SubharmonicProbe> {
    if m < 3 {
        return Err(Error::Input("need at least three circle points".into()));
    }
    let (center_value, _) = ld_at(family, center, spec)?;
    let vals: Result<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            let z = center + c(radius * a.cos(), radius * a.sin());
            Ok(ld_at(family, z, spec)?.0)
        })
        .collect();
    let circle_mean = vals?.iter().sum::<f64>() / m as f64;
    Ok(SubharmonicProbe { center_value, circle_mean, excess: circle_mean - center_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle_engine::random_periodic;
    use crate::linalg::from_rows;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn identity_family(d: usize) -> RotationFamily {
        RotationFamily::new(Cocycle::constant(linalg::eye(2 * d), Some(GroupTag::SpR)).unwrap()).unwrap()
    }

    fn free_energy_family() -> EnergyFamily {
        EnergyFamily {
            base: BaseSystem::Periodic { period: 1 },
            d: 1,
            tag: GroupTag::SpR,
            potential: Arc::new(|_| Ok(linalg::zeros(1, 1))),
            e_ref: -3.0,
        }
    }

    #[test]
    fn identity_rotation_function_is_linear() {
        for d in 1..=2 {
            let fam = identity_family(d);
            let targets: Vec<C64> = (0..5).map(|i| c(0.3 * i as f64, 0.0)).collect();
            let v = rotation_function(&fam, &targets, SampleSpec { n: 100, samples: 1, seed: 0 }).unwrap();
            for z in &v {
                assert!((z.rho + d as f64 * z.sigma).abs() < 1e-12);
                assert!(z.ld.abs() < 1e-12);
            }
            let v = rotation_function(&fam, &[c(0.2, 0.5)], SampleSpec::default()).unwrap();
            assert!((v[0].ld - d as f64 * 0.5).abs() < 1e-12);
            assert!((v[0].rho + d as f64 * 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_diagonal_family_is_exact() {
        // A = diag(e^{s}, e^{-s}) hyperbolic, L^d(A_{it}) by the exact periodic method
        let a = from_rows(&[&[2.0, 0.0], &[0.0, 0.5]]);
        let fam = RotationFamily::new(Cocycle::constant(a, Some(GroupTag::SpR)).unwrap()).unwrap();
        let v = rotation_function(&fam, &[c(0.0, 0.3)], SampleSpec::default()).unwrap();
        assert!(v[0].ld > 2f64.ln() - 1e-12);
    }

    #[test]
    fn delta_xi_identity_is_minus_d_sigma() {
        let d = 2;
        let fam = identity_family(d);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let z = siegel_geometry::random_disc_point(d, siegel_geometry::DiscVariant::Symmetric, 0.7, &mut rng);
        let sigma = 1.3;
        let dx = delta_xi(&fam, &RotationPath::segment(c(0.0, 0.0), c(sigma, 0.0)), &BasePoint::Index(0), &z, &z).unwrap();
        assert!((dx.re + d as f64 * sigma).abs() < 1e-12);
        assert!(dx.im.abs() < 1e-12);
    }

    #[test]
    fn delta_xi_on_real_segment_stays_real() {
        let a = random_periodic(GroupTag::SpR, 1, 1, 0.8, 4).unwrap();
        let fam = RotationFamily::new(a).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let u = siegel_geometry::random_shilov_point(1, siegel_geometry::DiscVariant::Symmetric, &mut rng);
        // Shilov points at real parameters: |det tau| varies but the phase lift is continuous
        let dx = delta_xi(&fam, &RotationPath::segment(c(0.0, 0.0), c(2.0, 0.0)), &BasePoint::Index(0), &u, &u).unwrap();
        let split = delta_xi_split(&fam, &BasePoint::Index(0), c(0.0, 0.0), c(2.0, 0.0), &u, &u).unwrap();
        assert!((dx - split).norm() < 1e-9);
    }

    #[test]
    fn free_energy_family_gives_minus_pi_ids() {
        let fam = free_energy_family();
        let es: Vec<f64> = vec![-2.5, -1.5, -0.5, 0.0, 0.7, 1.9, 2.5];
        let targets: Vec<C64> = es.iter().map(|&e| c(e, 0.0)).collect();
        let v = rotation_function(&fam, &targets, SampleSpec { n: 20_000, samples: 1, seed: 0 }).unwrap();
        for (e, z) in es.iter().zip(&v) {
            let ids = if *e <= -2.0 {
                0.0
            } else if *e >= 2.0 {
                1.0
            } else {
                (-e / 2.0).acos() / PI
            };
            assert!((z.rho + PI * ids).abs() < 1e-3, "E = {e}: rho {} vs {}", z.rho, -PI * ids);
        }
    }

    #[test]
    fn energy_family_generator_matches_finite_difference() {
        let fam = free_energy_family();
        let x = BasePoint::Index(0);
        let z = c(0.4, 0.2);
        let h = 1e-6;
        let dm = (fam.disc_at(&x, z + c(0.0, h)).unwrap() - fam.disc_at(&x, z - c(0.0, h)).unwrap()) / c(2.0 * h, 0.0);
        let w = dm * linalg::inverse(&fam.disc_at(&x, z).unwrap()).unwrap();
        assert!(linalg::op_norm(&(w - fam.t_generator(&x, z).unwrap())) < 1e-8);
    }

    #[test]
    fn negative_target_is_rejected() {
        let fam = identity_family(1);
        assert!(matches!(rotation_function(&fam, &[c(0.0, -0.1)], SampleSpec::default()), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn rho_is_non_increasing_on_real_axis(seed in 0u64..10_000, d in 1usize..=2) {
            let a = random_periodic(GroupTag::SpR, d, 3, 0.9, seed).unwrap();
            let fam = RotationFamily::new(a).unwrap();
            let targets: Vec<C64> = (0..60).map(|i| c(PI * i as f64 / 59.0, 0.0)).collect();
            let v = rotation_function(&fam, &targets, SampleSpec { n: 300, samples: 1, seed: 0 }).unwrap();
            for w in v.windows(2) {
                prop_assert!(w[1].rho <= w[0].rho + 1e-9);
            }
            // one half-turn of the rotation lowers rho by d pi / 1 per step, up to the orbit error
            let drop = v[0].rho - v[59].rho;
            prop_assert!((drop - d as f64 * PI).abs() <= 2.0 * v[0].rho_bound + 1e-9);
        }

        #[test]
        fn split_matches_direct_continuation(seed in 0u64..10_000, d in 1usize..=2, s1 in -2.0f64..2.0, t1 in 0.0f64..0.8) {
            let a = random_periodic(GroupTag::SpR, d, 2, 0.7, seed).unwrap();
            let fam = RotationFamily::new(a).unwrap();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let z0 = siegel_geometry::random_disc_point(d, siegel_geometry::DiscVariant::Symmetric, 0.9, &mut rng);
            let z1 = siegel_geometry::random_disc_point(d, siegel_geometry::DiscVariant::Symmetric, 0.9, &mut rng);
            let x = BasePoint::Index(1);
            let direct = delta_xi(&fam, &RotationPath::segment(c(0.1, 0.2), c(s1, t1)), &x, &z0, &z1).unwrap();
            let split = delta_xi_split(&fam, &x, c(0.1, 0.2), c(s1, t1), &z0, &z1).unwrap();
            prop_assert!((direct - split).norm() < 1e-8);
        }

        #[test]
        fn cauchy_riemann_holds_off_axis(seed in 0u64..10_000, sigma in 0.0f64..3.0) {
            let a = random_periodic(GroupTag::SpR, 1, 3, 0.8, seed).unwrap();
            let fam = RotationFamily::new(a).unwrap();
            let cr = cauchy_riemann_check(&fam, sigma, 0.3, 1e-3, SampleSpec { n: 200, samples: 1, seed: 0 }).unwrap();
            prop_assert!(cr.residual < 1e-5, "{:?}", cr);
        }

        #[test]
        fn ld_is_subharmonic(seed in 0u64..10_000) {
            let a = random_periodic(GroupTag::SpR, 2, 3, 0.8, seed).unwrap();
            let fam = RotationFamily::new(a).unwrap();
            let p = subharmonicity_probe(&fam, c(0.4, 0.1), 0.3, 24, SampleSpec::default()).unwrap();
            prop_assert!(p.excess >= -1e-9);
        }
    }
}
