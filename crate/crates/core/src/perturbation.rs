//! The weighted average `Phi_eps` of `L^d` along `t -> exp(eps (t b + (1 - t^2) a)) A`,
//! the disc contraction condition for its complex extension, and a constructive search for
//! small perturbations with positive exponent.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle_engine::{lyapunov_spectrum, BasePoint, Cocycle, LyapunovMethod, SampleSpec};
use crate::error::{Error, Result};
use crate::group_core::{self, GroupTag};
use crate::linalg::{self, c, CMat, C64};
use crate::siegel_geometry::{self, DiscVariant};

/// Algebra-valued map over a base, constant or indexed by the base symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraMap {
    Constant(CMat),
    Table(Vec<CMat>),
}

impl AlgebraMap {
    pub fn at(&self, x: &BasePoint) -> Result<&CMat> {
        match self {
            AlgebraMap::Constant(m) => Ok(m),
            AlgebraMap::Table(t) => {
                let s = x.symbol().ok_or_else(|| Error::Domain("table map needs a discrete base point".into()))?;
                t.get(s).ok_or_else(|| Error::Domain(format!("symbol {s} outside table")))
            }
        }
    }

    pub fn values(&self) -> &[CMat] {
        match self {
            AlgebraMap::Constant(m) => std::slice::from_ref(m),
            AlgebraMap::Table(t) => t,
        }
    }

    /// Sup over the base of the operator norm.
    pub fn sup_norm(&self) -> f64 {
        self.values().iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    fn scaled(&self, s: f64) -> AlgebraMap {
        match self {
            AlgebraMap::Constant(m) => AlgebraMap::Constant(m * c(s, 0.0)),
            AlgebraMap::Table(t) => AlgebraMap::Table(t.iter().map(|m| m * c(s, 0.0)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPair {
    pub a: AlgebraMap,
    pub b: AlgebraMap,
    pub epsilon: f64,
    pub eta: f64,
}

pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_NODES: usize = 33;

impl PerturbationPair {
    pub fn new(a: AlgebraMap, b: AlgebraMap, epsilon: f64, eta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(eta > 0.0) {
            return Err(Error::Input("epsilon and eta must be positive".into()));
        }
        let d = b.values()[0].nrows() / 2;
        for m in a.values().iter().chain(b.values()) {
            if m.nrows() != 2 * d || m.ncols() != 2 * d {
                return Err(Error::Dimension("perturbation sizes differ".into()));
            }
            if group_core::algebra_residual(m, GroupTag::SpC)? > 1e-10 {
                return Err(Error::Domain("perturbation outside the symplectic algebra".into()));
            }
        }
        let j = linalg::j_matrix(d);
        if let Some(m) = b.values().iter().find(|m| linalg::op_norm(&(*m - &j)) > eta) {
            return Err(Error::Domain(format!("b is {:.3e} away from J, more than eta", linalg::op_norm(&(m - &j)))));
        }
        Ok(PerturbationPair { a, b, epsilon, eta })
    }

    /// `a = 0`, `b = J`.
    pub fn rotation(d: usize, epsilon: f64, eta: f64) -> Result<Self> {
        PerturbationPair::new(AlgebraMap::Constant(linalg::zeros(2 * d, 2 * d)), AlgebraMap::Constant(linalg::j_matrix(d)), epsilon, eta)
    }

    pub fn d(&self) -> usize {
        self.b.values()[0].nrows() / 2
    }

    /// `exp(eps (z b(x) + (1 - z^2) a(x)))`.
    pub fn exp_at(&self, x: &BasePoint, z: C64) -> Result<CMat> {
        let w = (self.b.at(x)? * z + self.a.at(x)? * (linalg::ONE - z * z)) * c(self.epsilon, 0.0);
        Ok(linalg::expm(&w))
    }

    /// The cocycle `x -> exp(eps (z b + (1 - z^2) a))(x) A(x)`.
    pub fn deform(&self, a: &Cocycle, z: C64) -> Result<Cocycle> {
        let pair = self.clone();
        let real = z.im == 0.0 && self.values_real();
        let tag = if real { Some(GroupTag::SpR) } else { None };
        let base = a.clone();
        let mut out = Cocycle::from_fn(a.base.clone(), a.d, tag, move |x| {
            let m = if base.disc_form { group_core::cayley_unconjugate(&base.at(x)?)? } else { base.at(x)? };
            Ok(pair.exp_at(x, z)? * m)
        })?;
        out.disc_form = false;
        Ok(out)
    }

    fn values_real(&self) -> bool {
        self.a.values().iter().chain(self.b.values()).all(|m| m.iter().all(|v| v.im == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    pub holds: bool,
    /// `min (1 - ||image||)` over the sampled closed-disc points and base points.
    pub margin: f64,
}

/// Margins below this count as boundary preserving.
pub const CONTRACTION_TOL: f64 = 1e-12;

/// Samples the closed disc (the centre, interior points, boundary points of every rank and
/// Shilov points) and tests whether the Cayley conjugate of `exp(eps (z b + (1 - z^2) a))`
/// maps each strictly inside.
pub fn contraction_condition(pair: &PerturbationPair, z: C64, samples: usize, seed: u64) -> Result<Contraction> {
    let d = pair.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![linalg::zeros(d, d)];
    for k in 0..samples.max(1) {
        let p = match k % 3 {
            0 => siegel_geometry::random_shilov_point(d, DiscVariant::Symmetric, &mut rng),
            1 => siegel_geometry::random_disc_point(d, DiscVariant::Symmetric, 1.0, &mut rng),
            _ => {
                // boundary point of lower rank: unit singular value on a random subspace
                let u = siegel_geometry::random_shilov_point(d, DiscVariant::Symmetric, &mut rng);
                let s = siegel_geometry::random_disc_point(d, DiscVariant::Symmetric, rng.gen_range(0.0..1.0), &mut rng);
                let w = (&u + &s) * c(0.5, 0.0);
                let n = linalg::op_norm(&w);
                if n > 0.0 {
                    w * c(1.0 / n, 0.0)
                } else {
                    u
                }
            }
        };
        pts.push(p);
    }
    let n_base = match (&pair.a, &pair.b) {
        (AlgebraMap::Constant(_), AlgebraMap::Constant(_)) => 1,
        _ => pair.a.values().len().max(pair.b.values().len()),
    };
    let mut margin = f64::INFINITY;
    for i in 0..n_base {
        let x = BasePoint::Index(i);
        let g = group_core::cayley_conjugate(&pair.exp_at(&x, z)?)?;
        for p in &pts {
            let img = siegel_geometry::mobius(&g, p)?;
            margin = margin.min(1.0 - linalg::op_norm(&img));
        }
    }
    Ok(Contraction { holds: margin > CONTRACTION_TOL, margin })
}

/// `(1 - t^2) / |t^2 + 2 i t + 1|^2`.
pub fn phi_weight(t: f64) -> f64 {
    (1.0 - t * t) / (t.powi(4) + 6.0 * t * t + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiNode {
    pub t: f64,
    pub weight: f64,
    pub ld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub value: f64,
    /// Nodes in increasing `t`.
    pub nodes: Vec<PhiNode>,
}

impl PhiReport {
    /// The node value closest to `t = 0`.
    pub fn centre(&self) -> &PhiNode {
        self.nodes.iter().min_by(|a, b| a.t.abs().total_cmp(&b.t.abs())).expect("at least one node")
    }
}

pub fn gauss_legendre(nodes: usize) -> Result<Vec<(f64, f64)>> {
    let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::Input("need at least one quadrature node".into()))?;
    let mut v: Vec<(f64, f64)> = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(v)
}

fn ld_of(a: &Cocycle, spec: SampleSpec) -> Result<f64> {
    Ok(lyapunov_spectrum(a, spec, LyapunovMethod::Auto)?.ld())
}

/// Gauss-Legendre quadrature of `w(t) L^d(exp(eps (t b + (1 - t^2) a)) A)` on `(-1, 1)`.
pub fn phi_epsilon(a: &Cocycle, pair: &PerturbationPair, nodes: usize, spec: SampleSpec) -> Result<PhiReport> {
    let rule = gauss_legendre(nodes)?;
    let vals: Vec<PhiNode> = rule
        .par_iter()
        .map(|&(t, w)| {
            let ld = ld_of(&pair.deform(a, c(t, 0.0))?, spec)?;
            Ok(PhiNode { t, weight: w * phi_weight(t), ld })
        })
        .collect::<Result<_>>()?;
    let value = vals.iter().map(|n| n.weight * n.ld).sum();
    Ok(PhiReport { value, nodes: vals })
}

/// Random real algebra element with operator norm uniform in `(0, radius]`.
pub fn random_in_ball(d: usize, radius: f64, rng: &mut impl Rng) -> CMat {
    let w = group_core::random_algebra_element(GroupTag::SpR, d, 1.0, rng);
    let n = linalg::op_norm(&w);
    let r = radius * (1.0 - rng.gen_range(0.0..1.0));
    if n > 0.0 {
        w * c(r / n, 0.0)
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    pub delta: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    /// `L^d` above this counts as positive.
    pub threshold: f64,
    pub nodes: usize,
    /// Grid size of each line search in `s` and `t`.
    pub line_grid: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { delta: 0.5, eta: DEFAULT_ETA, epsilon: 0.2, trials: 100, seed: 0, threshold: 1e-8, nodes: DEFAULT_NODES, line_grid: 401 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityResult {
    /// `v = eps (t b + (1 - t^2) s a)`, one matrix per base symbol.
    pub v: AlgebraMap,
    pub v_norm: f64,
    pub ld: f64,
    pub epsilon: f64,
    pub s: f64,
    pub t: f64,
    pub trials_used: usize,
    pub phi: f64,
}

/// Search for `v` with `||v|| < delta` and `L^d(e^v A) > 0`, following the regularization
/// argument: `b = J`, random `a` in the `eta` ball with `Phi_eps(A, a, b) > 0`, then line
/// searches in `s` and `t`.
pub fn density_search(a: &Cocycle, opts: DensityOptions) -> Result<DensityResult> {
    if !(opts.delta > 0.0) || opts.trials == 0 {
        return Err(Error::Input("density search needs delta > 0 and at least one trial".into()));
    }
    let d = a.d;
    let p = a.base.period().ok_or_else(|| Error::Domain("density search works over periodic bases".into()))?;
    let b = AlgebraMap::Constant(linalg::j_matrix(d));
    let b_norm = b.sup_norm();
    let epsilon = opts.epsilon.min(0.999 * opts.delta / (2.0 * b_norm));
    let spec = SampleSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ts: Vec<f64> = (1..opts.line_grid.max(3))
        .map(|k| -1.0 + 2.0 * k as f64 / opts.line_grid.max(3) as f64)
        .collect();
    let mut best_fail = f64::NEG_INFINITY;
    for trial in 0..opts.trials {
        let table: Vec<CMat> = (0..p).map(|_| random_in_ball(d, opts.eta, &mut rng)).collect();
        let pair = PerturbationPair::new(AlgebraMap::Table(table), b.clone(), epsilon, opts.eta)?;
        let phi = phi_epsilon(a, &pair, opts.nodes, spec)?;
        best_fail = best_fail.max(phi.value);
        if phi.value <= 0.0 || phi.nodes.iter().all(|n| n.ld <= opts.threshold) {
            continue;
        }
        let a_norm = pair.a.sup_norm();
        let s_max = if a_norm > 0.0 { 1f64.min(opts.delta / (2.0 * epsilon * a_norm)) } else { 1.0 };
        // largest s first, so the perturbation stays close to the certified one
        for k in (1..=8).rev() {
            let s = s_max * k as f64 / 8.0;
            let scaled = PerturbationPair { a: pair.a.scaled(s), ..pair.clone() };
            let found = ts
                .par_iter()
                .map(|&t| Ok((t, ld_of(&scaled.deform(a, c(t, 0.0))?, spec)?)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|(_, ld)| *ld > opts.threshold)
                .min_by(|x, y| x.0.abs().total_cmp(&y.0.abs()));
            if let Some((t, ld)) = found {
                let v: Vec<CMat> = (0..p)
                    .map(|i| {
                        let x = BasePoint::Index(i);
                        Ok((scaled.b.at(&x)? * c(t, 0.0) + scaled.a.at(&x)? * c(1.0 - t * t, 0.0)) * c(epsilon, 0.0))
                    })
                    .collect::<Result<_>>()?;
                let v = AlgebraMap::Table(v);
                let v_norm = v.sup_norm();
                if v_norm >= opts.delta {
                    continue;
                }
                return Ok(DensityResult { v, v_norm, ld, epsilon, s, t, trials_used: trial + 1, phi: phi.value });
            }
        }
    }
    Err(Error::NotFound(format!(
        "no perturbation below {} in {} trials (largest Phi_eps {best_fail:.3e})",
        opts.delta, opts.trials
    )))
}

/// `x -> e^{v(x)} A(x)`.
pub fn apply_perturbation(a: &Cocycle, v: &AlgebraMap) -> Result<Cocycle> {
    let v = v.clone();
    let base = a.clone();
    Cocycle::from_fn(a.base.clone(), a.d, Some(GroupTag::SpR), move |x| {
        let m = if base.disc_form { group_core::cayley_unconjugate(&base.at(x)?)? } else { base.at(x)? };
        Ok(linalg::expm(v.at(x)?) * m)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityScan {
    pub max_residual: f64,
    pub residuals: Vec<f64>,
}

/// Mean-value residuals `|mean over circle - centre|` of `z -> L^d(exp(eps (z b + (1 - z^2) a)) A)`
/// on circles of radius `radius` about each grid point.
pub fn harmonicity_scan(a: &Cocycle, pair: &PerturbationPair, grid: &[C64], radius: f64, m: usize, spec: SampleSpec) -> Result<HarmonicityScan> {
    if m < 3 || !(radius > 0.0) {
        return Err(Error::Input("need a positive radius and at least three circle samples".into()));
    }
    let residuals: Vec<f64> = grid
        .par_iter()
        .map(|&z| {
            let circle: Vec<C64> = (0..m).map(|k| z + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / m as f64)).collect();
            for w in std::iter::once(&z).chain(circle.iter()) {
                if w.im <= 0.0 || !contraction_condition(pair, *w, 24, 0)?.holds {
                    return Err(Error::Domain(format!("contraction fails at z = {w}")));
                }
            }
            let centre = ld_of(&pair.deform(a, z)?, spec)?;
            let mean = circle.iter().map(|w| ld_of(&pair.deform(a, *w)?, spec)).sum::<Result<f64>>()? / m as f64;
            Ok((mean - centre).abs())
        })
        .collect::<Result<_>>()?;
    Ok(HarmonicityScan { max_residual: residuals.iter().cloned().fold(0.0, f64::max), residuals })
}

/// `mean over circle - value` of `L^d` at real `t0`, along the complex extension in `t`.
pub fn subharmonic_gap(a: &Cocycle, pair: &PerturbationPair, t0: f64, radius: f64, m: usize, spec: SampleSpec) -> Result<f64> {
    let centre = ld_of(&pair.deform(a, c(t0, 0.0))?, spec)?;
    let mut mean = 0.0;
    for k in 0..m {
        let w = c(t0, 0.0) + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / m as f64);
        mean += ld_of(&pair.deform(a, w)?, spec)?;
    }
    Ok(mean / m as f64 - centre)
}
