//! Base dynamics, cocycles over them, long products and Lyapunov spectra.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_core::{self, GroupTag};
use crate::linalg::{self, CMat};

/// Steps between renormalizations of long products.
pub const RENORM_EVERY: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseSystem {
    /// `x -> x + 1 mod p` with uniform measure.
    Periodic { period: usize },
    /// `x -> x + alpha mod 1` on the k-torus with Lebesgue measure.
    TorusRotation { alpha: Vec<f64>, x0: Vec<f64> },
    /// Bernoulli shift on symbols `0..weights.len()`.
    FiniteShift { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasePoint {
    Index(usize),
    Torus(Vec<f64>),
    /// A finite window of a two-sided sequence; `pos` is the current coordinate.
    Word { symbols: Arc<Vec<usize>>, pos: usize },
}

impl BasePoint {
    pub fn symbol(&self) -> Option<usize> {
        match self {
            BasePoint::Index(i) => Some(*i),
            BasePoint::Word { symbols, pos } => symbols.get(*pos).copied(),
            BasePoint::Torus(_) => None,
        }
    }
}

impl BaseSystem {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseSystem::Periodic { period } if *period == 0 => Err(Error::Input("period must be positive".into())),
            BaseSystem::TorusRotation { alpha, x0 } if alpha.is_empty() || alpha.len() != x0.len() => {
                Err(Error::Dimension("torus frequency and start point must have equal positive length".into()))
            }
            BaseSystem::FiniteShift { weights }
                if weights.is_empty() || weights.iter().any(|w| *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 =>
            {
                Err(Error::Input("shift weights must be non-negative with positive sum".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn period(&self) -> Option<usize> {
        match self {
            BaseSystem::Periodic { period } => Some(*period),
            _ => None,
        }
    }

    /// `f^k(x)`.
    pub fn step(&self, x: &BasePoint, k: i64) -> Result<BasePoint> {
        match (self, x) {
            (BaseSystem::Periodic { period }, BasePoint::Index(i)) => {
                let p = *period as i64;
                Ok(BasePoint::Index(((*i as i64 + k).rem_euclid(p)) as usize))
            }
            (BaseSystem::TorusRotation { alpha, .. }, BasePoint::Torus(v)) => Ok(BasePoint::Torus(
                v.iter().zip(alpha).map(|(a, b)| (a + k as f64 * b).rem_euclid(1.0)).collect(),
            )),
            (BaseSystem::FiniteShift { .. }, BasePoint::Word { symbols, pos }) => {
                let np = *pos as i64 + k;
                if np < 0 || np >= symbols.len() as i64 {
                    return Err(Error::Domain(format!(
                        "shift window of length {} exhausted at offset {np}",
                        symbols.len()
                    )));
                }
                Ok(BasePoint::Word { symbols: symbols.clone(), pos: np as usize })
            }
            _ => Err(Error::Domain("base point does not belong to this base system".into())),
        }
    }

    /// Sample points with equal weights. Periodic bases return every point of the orbit.
    /// Shift samples are words with `back` past and `fwd` future symbols around the origin.
    pub fn sample_points(&self, samples: usize, back: usize, fwd: usize, seed: u64) -> Vec<BasePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            BaseSystem::Periodic { period } => (0..*period).map(BasePoint::Index).collect(),
            BaseSystem::TorusRotation { x0, .. } => {
                let mut out = vec![BasePoint::Torus(x0.clone())];
                for _ in 1..samples.max(1) {
                    out.push(BasePoint::Torus(x0.iter().map(|_| rng.gen_range(0.0..1.0)).collect()));
                }
                out
            }
            BaseSystem::FiniteShift { weights } => {
                let total: f64 = weights.iter().sum();
                (0..samples.max(1))
                    .map(|_| {
                        let symbols: Vec<usize> = (0..back + fwd + 1)
                            .map(|_| {
                                let mut u = rng.gen_range(0.0..total);
                                let mut s = weights.len() - 1;
                                for (i, w) in weights.iter().enumerate() {
                                    if u < *w {
                                        s = i;
                                        break;
                                    }
                                    u -= w;
                                }
                                s
                            })
                            .collect();
                        BasePoint::Word { symbols: Arc::new(symbols), pos: back }
                    })
                    .collect()
            }
        }
    }

    /// A single starting point for Birkhoff averages.
    pub fn start_point(&self, back: usize, fwd: usize, seed: u64) -> BasePoint {
        match self {
            BaseSystem::Periodic { .. } => BasePoint::Index(0),
            _ => self.sample_points(1, back, fwd, seed).remove(0),
        }
    }
}

pub type GeneratorFn = dyn Fn(&BasePoint) -> Result<CMat> + Send + Sync;

/// A measurable map `A : X -> GL(2d, C)` over a base system.
#[derive(Clone)]
pub struct Cocycle {
    pub base: BaseSystem,
    pub d: usize,
    /// Group containing every value, `None` for complexified families.
    pub tag: Option<GroupTag>,
    /// True when values are already on the disc side of the Cayley transform.
    pub disc_form: bool,
    generator: Arc<GeneratorFn>,
}

impl std::fmt::Debug for Cocycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cocycle")
            .field("base", &self.base)
            .field("d", &self.d)
            .field("tag", &self.tag)
            .field("disc_form", &self.disc_form)
            .finish()
    }
}

impl Cocycle {
    pub fn from_fn<F>(base: BaseSystem, d: usize, tag: Option<GroupTag>, f: F) -> Result<Self>
    where
        F: Fn(&BasePoint) -> Result<CMat> + Send + Sync + 'static,
    {
        base.validate()?;
        if d == 0 {
            return Err(Error::Dimension("d must be positive".into()));
        }
        let disc_form = matches!(tag, Some(GroupTag::Udd | GroupTag::SUdd | GroupTag::UddCapSpC));
        Ok(Cocycle { base, d, tag, disc_form, generator: Arc::new(f) })
    }

    /// Table cocycle: `A(x) = mats[x]` for periodic bases, `A(x) = mats[x_0]` for shifts.
    pub fn from_table(base: BaseSystem, mats: Vec<CMat>, tag: Option<GroupTag>) -> Result<Self> {
        let d = mats.first().map(|m| m.nrows() / 2).ok_or_else(|| Error::Input("empty generator table".into()))?;
        for m in &mats {
            if m.nrows() != 2 * d || m.ncols() != 2 * d {
                return Err(Error::Dimension("generator table has inconsistent sizes".into()));
            }
        }
        match &base {
            BaseSystem::Periodic { period } if *period != mats.len() => {
                return Err(Error::Dimension(format!("period {period} but {} generators", mats.len())));
            }
            BaseSystem::FiniteShift { weights } if weights.len() != mats.len() => {
                return Err(Error::Dimension(format!("{} symbols but {} generators", weights.len(), mats.len())));
            }
            BaseSystem::TorusRotation { .. } => {
                return Err(Error::Input("torus cocycles need a function generator".into()));
            }
            _ => {}
        }
        let table = Arc::new(mats);
        Cocycle::from_fn(base, d, tag, move |x| {
            let s = x.symbol().ok_or_else(|| Error::Domain("table cocycle needs a discrete base point".into()))?;
            table.get(s).cloned().ok_or_else(|| Error::Domain(format!("symbol {s} outside generator table")))
        })
    }

    pub fn periodic(mats: Vec<CMat>, tag: Option<GroupTag>) -> Result<Self> {
        Cocycle::from_table(BaseSystem::Periodic { period: mats.len() }, mats, tag)
    }

    pub fn constant(m: CMat, tag: Option<GroupTag>) -> Result<Self> {
        Cocycle::periodic(vec![m], tag)
    }

    pub fn at(&self, x: &BasePoint) -> Result<CMat> {
        let m = (self.generator)(x)?;
        if !linalg::is_finite(&m) {
            return Err(Error::Numeric("generator returned a non-finite matrix".into()));
        }
        Ok(m)
    }

    /// Value on the disc side, `C A(x) C^{-1}` unless already in disc form.
    pub fn disc_at(&self, x: &BasePoint) -> Result<CMat> {
        let m = self.at(x)?;
        if self.disc_form {
            Ok(m)
        } else {
            group_core::cayley_conjugate(&m)
        }
    }

    pub fn inverse_at(&self, x: &BasePoint) -> Result<CMat> {
        let m = self.at(x)?;
        match self.tag {
            Some(tag) => group_core::structured_inverse(&m, tag),
            None => linalg::inverse(&m),
        }
    }

    /// New cocycle `x -> g(x, A(x))` over the same base.
    pub fn map<F>(&self, tag: Option<GroupTag>, g: F) -> Result<Cocycle>
    where
        F: Fn(&BasePoint, CMat) -> Result<CMat> + Send + Sync + 'static,
    {
        let inner = self.clone();
        let mut out = Cocycle::from_fn(self.base.clone(), self.d, tag, move |x| g(x, inner.at(x)?))?;
        out.disc_form = self.disc_form && tag.is_none() || matches!(tag, Some(GroupTag::Udd | GroupTag::SUdd | GroupTag::UddCapSpC));
        Ok(out)
    }

    /// Period map `A(f^{p-1} x) ... A(x)` for periodic bases starting at index `start`.
    pub fn period_map(&self, start: usize) -> Result<CMat> {
        let p = self.base.period().ok_or_else(|| Error::Domain("period map needs a periodic base".into()))?;
        let mut m = linalg::eye(2 * self.d);
        for k in 0..p {
            m = self.at(&BasePoint::Index((start + k) % p))? * m;
        }
        Ok(m)
    }
}

/// A renormalized product `e^{log_scale} * matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub matrix: CMat,
    pub log_scale: f64,
}

impl Product {
    pub fn full(&self) -> CMat {
        &self.matrix * linalg::c(self.log_scale.exp(), 0.0)
    }
}

/// `A^n(x)`; negative `n` multiplies inverses along the backward orbit.
pub fn iterate(a: &Cocycle, x: &BasePoint, n: i64) -> Result<Product> {
    let mut m = linalg::eye(2 * a.d);
    let mut log_scale = 0.0;
    let steps = n.unsigned_abs() as usize;
    let mut y = x.clone();
    for k in 0..steps {
        if n > 0 {
            m = a.at(&y)? * m;
            y = a.base.step(&y, 1)?;
        } else {
            y = a.base.step(&y, -1)?;
            m = a.inverse_at(&y)? * m;
        }
        if (k + 1) % RENORM_EVERY == 0 {
            let s = linalg::op_norm(&m);
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Numeric("product lost finiteness".into()));
            }
            m /= linalg::c(s, 0.0);
            log_scale += s.ln();
        }
    }
    Ok(Product { matrix: m, log_scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LyapunovMethod {
    /// Exact period-map spectrum for periodic bases, QR otherwise.
    Auto,
    /// QR renormalization along orbits for every base.
    Qr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Decreasing exponents `L_1 >= ... >= L_{2d}`.
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
    pub samples: usize,
    pub exact: bool,
}

impl LyapunovReport {
    pub fn top(&self) -> f64 {
        self.exponents[0]
    }

    /// `L^d`, the sum of the `d` largest exponents.
    pub fn ld(&self) -> f64 {
        let d = self.exponents.len() / 2;
        self.exponents[..d].iter().sum()
    }
}

/// Options shared by orbit averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { n: 10_000, samples: 8, seed: 0 }
    }
}

/// `ln |spectral radius|` of `Lambda^k` of the period map, built as a renormalized
/// product of exterior powers of the factors.
pub fn periodic_exterior_log_radius(a: &Cocycle, k: usize) -> Result<f64> {
    let p = a.base.period().ok_or_else(|| Error::Domain("needs a periodic base".into()))?;
    let n = 2 * a.d;
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("exterior degree {k} outside 1..={n}")));
    }
    if k == n {
        let mut s = 0.0;
        for i in 0..p {
            s += linalg::det(&a.at(&BasePoint::Index(i))?).norm().ln();
        }
        return Ok(s);
    }
    let dim = linalg::subsets(n, k).len();
    let mut m = linalg::eye(dim);
    let mut log_scale = 0.0;
    for i in 0..p {
        let w = linalg::exterior_power(&a.at(&BasePoint::Index(i))?, k);
        m = w * m;
        let s = linalg::op_norm(&m);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Numeric("exterior product lost finiteness".into()));
        }
        m /= linalg::c(s, 0.0);
        log_scale += s.ln();
    }
    let r = linalg::spectral_radius(&m)?;
    if r <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_scale + r.ln())
}

/// Exact spectrum of a periodic cocycle from partial sums over exterior powers.
pub fn periodic_spectrum(a: &Cocycle) -> Result<Vec<f64>> {
    let p = a.base.period().ok_or_else(|| Error::Domain("needs a periodic base".into()))? as f64;
    let n = 2 * a.d;
    let mut partial = vec![0.0; n + 1];
    for k in 1..=n {
        partial[k] = periodic_exterior_log_radius(a, k)? / p;
    }
    let mut ex: Vec<f64> = (1..=n).map(|k| partial[k] - partial[k - 1]).collect();
    ex.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ex)
}

/// QR-renormalized orbit sums of `ln |R_ii|`, split into `blocks` consecutive blocks.
fn qr_orbit(a: &Cocycle, x: &BasePoint, n: usize, blocks: usize) -> Result<Vec<Vec<f64>>> {
    let dim = 2 * a.d;
    let mut q = linalg::eye(dim);
    let mut y = x.clone();
    let blocks = blocks.max(1);
    let block_len = (n / blocks).max(1);
    let mut out = vec![vec![0.0; dim]; blocks];
    for k in 0..n {
        q = a.at(&y)? * q;
        y = a.base.step(&y, 1)?;
        let last = k + 1 == n;
        if (k + 1) % RENORM_EVERY == 0 || last || (k + 1) % block_len == 0 {
            let qr = q.clone().qr();
            let r = qr.r();
            let b = (k / block_len).min(blocks - 1);
            for i in 0..dim {
                let v = r[(i, i)].norm();
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Numeric("degenerate QR step".into()));
                }
                out[b][i] += v.ln();
            }
            q = qr.q();
        }
    }
    Ok(out)
}

fn mean_and_stderr(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len() as f64;
    let dim = rows[0].len();
    let mean: Vec<f64> = (0..dim).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / m).collect();
    let se: Vec<f64> = (0..dim)
        .map(|i| {
            if rows.len() < 2 {
                return 0.0;
            }
            let v = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (m - 1.0);
            (v / m).sqrt()
        })
        .collect();
    (mean, se)
}

/// Per-column QR averages along one orbit from the standard frame, in column order.
pub fn qr_frame_exponents(a: &Cocycle, x: &BasePoint, n: usize) -> Result<Vec<f64>> {
    let b = qr_orbit(a, x, n, 1)?;
    Ok(b[0].iter().map(|v| v / n as f64).collect())
}

/// All `2d` Lyapunov exponents.
pub fn lyapunov_spectrum(a: &Cocycle, spec: SampleSpec, method: LyapunovMethod) -> Result<LyapunovReport> {
    if let (LyapunovMethod::Auto, Some(_)) = (method, a.base.period()) {
        let ex = periodic_spectrum(a)?;
        let dim = ex.len();
        return Ok(LyapunovReport { exponents: ex, stderr: vec![0.0; dim], n: 0, samples: 1, exact: true });
    }
    if spec.n == 0 {
        return Err(Error::Input("orbit length must be positive".into()));
    }
    let dim = 2 * a.d;
    match &a.base {
        BaseSystem::FiniteShift { .. } => {
            let pts = a.base.sample_points(spec.samples.max(2), 0, spec.n, spec.seed);
            let rows: Result<Vec<Vec<f64>>> = pts
                .par_iter()
                .map(|x| {
                    let b = qr_orbit(a, x, spec.n, 1)?;
                    let mut r: Vec<f64> = b[0].iter().map(|v| v / spec.n as f64).collect();
                    r.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
                    Ok(r)
                })
                .collect();
            let rows = rows?;
            let (mean, se) = mean_and_stderr(&rows);
            Ok(LyapunovReport { exponents: mean, stderr: se, n: spec.n, samples: rows.len(), exact: false })
        }
        _ => {
            let x = a.base.start_point(0, spec.n, spec.seed);
            let blocks = 20.min(spec.n);
            let b = qr_orbit(a, &x, spec.n, blocks)?;
            let block_len = (spec.n / blocks).max(1) as f64;
            let total: Vec<f64> = (0..dim).map(|i| b.iter().map(|r| r[i]).sum::<f64>() / spec.n as f64).collect();
            let per_block: Vec<Vec<f64>> = b.iter().map(|r| r.iter().map(|v| v / block_len).collect()).collect();
            let (_, se) = mean_and_stderr(&per_block);
            let mut idx: Vec<usize> = (0..dim).collect();
            idx.sort_by(|&i, &j| total[j].partial_cmp(&total[i]).unwrap_or(std::cmp::Ordering::Equal));
            Ok(LyapunovReport {
                exponents: idx.iter().map(|&i| total[i]).collect(),
                stderr: idx.iter().map(|&i| se[i]).collect(),
                n: spec.n,
                samples: 1,
                exact: false,
            })
        }
    }
}

/// Top exponent of `Lambda^k A` by power iteration on the exterior power along an orbit,
/// started from `e_1 ^ ... ^ e_k`.
pub fn top_exponent_exterior(a: &Cocycle, k: usize, spec: SampleSpec) -> Result<f64> {
    let n2 = 2 * a.d;
    if k == 0 || k > n2 {
        return Err(Error::Dimension(format!("exterior degree {k} outside 1..={n2}")));
    }
    if spec.n == 0 {
        return Err(Error::Input("orbit length must be positive".into()));
    }
    let dim = linalg::subsets(n2, k).len();
    let pts: Vec<BasePoint> = match &a.base {
        BaseSystem::FiniteShift { .. } => a.base.sample_points(spec.samples.max(1), 0, spec.n, spec.seed),
        _ => vec![a.base.start_point(0, spec.n, spec.seed)],
    };
    let vals: Result<Vec<f64>> = pts
        .par_iter()
        .map(|x| {
            let mut v = linalg::zeros(dim, 1);
            v[(0, 0)] = linalg::ONE;
            let mut y = x.clone();
            let mut acc = 0.0;
            for _ in 0..spec.n {
                v = linalg::exterior_power(&a.at(&y)?, k) * v;
                y = a.base.step(&y, 1)?;
                let s = v.norm();
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::Numeric("exterior iteration degenerated".into()));
                }
                v /= linalg::c(s, 0.0);
                acc += s.ln();
            }
            Ok(acc / spec.n as f64)
        })
        .collect();
    let vals = vals?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Random periodic cocycle with generators `exp(W)`, `W` uniform of size `scale` in the algebra.
pub fn random_periodic(tag: GroupTag, d: usize, period: usize, scale: f64, seed: u64) -> Result<Cocycle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats: Vec<CMat> = (0..period).map(|_| group_core::random_group_element(tag, d, scale, &mut rng)).collect();
    Cocycle::periodic(mats, Some(tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_rows};
    use proptest::prelude::*;

    fn free_schrodinger(e: f64) -> Cocycle {
        Cocycle::constant(from_rows(&[&[e, -1.0], &[1.0, 0.0]]), Some(GroupTag::SpR)).unwrap()
    }

    #[test]
    fn constant_hyperbolic_exponents() {
        let a = Cocycle::constant(from_rows(&[&[2.0, 0.0], &[0.0, 0.5]]), Some(GroupTag::SpR)).unwrap();
        let rep = lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
        assert!((rep.exponents[0] - 2f64.ln()).abs() < 1e-14);
        assert!((rep.exponents[1] + 2f64.ln()).abs() < 1e-14);
        let rep = lyapunov_spectrum(&a, SampleSpec { n: 1000, samples: 1, seed: 0 }, LyapunovMethod::Qr).unwrap();
        assert!((rep.exponents[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn free_schrodinger_outside_band() {
        let a = free_schrodinger(3.0);
        let rep = lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
        let want = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((rep.top() - want).abs() < 1e-12);
    }

    #[test]
    fn free_schrodinger_inside_band_qr() {
        for e in [0.0, 1.0] {
            let a = free_schrodinger(e);
            let rep = lyapunov_spectrum(&a, SampleSpec { n: 100_000, samples: 1, seed: 0 }, LyapunovMethod::Qr).unwrap();
            assert!(rep.top().abs() < 1e-3);
        }
    }

    #[test]
    fn identity_has_zero_spectrum() {
        let a = Cocycle::constant(linalg::eye(4), Some(GroupTag::SpR)).unwrap();
        let rep = lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
        assert!(rep.exponents.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn zero_length_is_input_error() {
        let a = Cocycle::constant(linalg::eye(2), Some(GroupTag::SpR)).unwrap();
        let r = lyapunov_spectrum(&a, SampleSpec { n: 0, samples: 1, seed: 0 }, LyapunovMethod::Qr);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn shift_window_exhaustion_is_reported() {
        let base = BaseSystem::FiniteShift { weights: vec![0.5, 0.5] };
        let a = Cocycle::from_table(base.clone(), vec![linalg::eye(2), linalg::eye(2)], Some(GroupTag::SpR)).unwrap();
        let x = base.sample_points(1, 0, 5, 1).remove(0);
        assert!(iterate(&a, &x, 5).is_ok());
        assert!(matches!(iterate(&a, &x, 7), Err(Error::Domain(_))));
    }

    #[test]
    fn torus_cocycle_matches_qr_and_exterior() {
        let base = BaseSystem::TorusRotation { alpha: vec![(5f64.sqrt() - 1.0) / 2.0], x0: vec![0.1] };
        let a = Cocycle::from_fn(base, 1, Some(GroupTag::SpR), |x| match x {
            BasePoint::Torus(v) => {
                let e = 0.5 - 3.0 * (2.0 * std::f64::consts::PI * v[0]).cos();
                Ok(from_rows(&[&[e, -1.0], &[1.0, 0.0]]))
            }
            _ => Err(Error::Domain("torus point expected".into())),
        })
        .unwrap();
        let spec = SampleSpec { n: 20_000, samples: 1, seed: 0 };
        let rep = lyapunov_spectrum(&a, spec, LyapunovMethod::Auto).unwrap();
        // Herman's bound for the almost Mathieu type potential with coupling 3/2
        assert!(rep.top() >= (1.5f64).ln() - 0.02);
        let top = top_exponent_exterior(&a, 1, spec).unwrap();
        assert!((top - rep.top()).abs() < 1e-10);
    }

    #[test]
    fn shift_cocycle_reports_stderr() {
        let base = BaseSystem::FiniteShift { weights: vec![0.5, 0.5] };
        let gens = vec![from_rows(&[&[1.0, -1.0], &[1.0, 0.0]]), from_rows(&[&[-1.0, -1.0], &[1.0, 0.0]])];
        let a = Cocycle::from_table(base, gens, Some(GroupTag::SpR)).unwrap();
        let rep = lyapunov_spectrum(&a, SampleSpec { n: 4000, samples: 8, seed: 3 }, LyapunovMethod::Auto).unwrap();
        assert!(rep.top() > 0.0);
        assert!(rep.stderr[0] > 0.0 && rep.stderr[0] < 0.05);
        assert!((rep.exponents[0] + rep.exponents[1]).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn forward_backward_products_cancel(seed in 0u64..10_000, d in 1usize..=2, n in 1i64..40) {
            let a = random_periodic(GroupTag::SpR, d, 5, 0.6, seed).unwrap();
            let x = BasePoint::Index(2);
            let fwd = iterate(&a, &x, n).unwrap();
            let y = a.base.step(&x, n).unwrap();
            let back = iterate(&a, &y, -n).unwrap();
            let scale = (fwd.log_scale + back.log_scale).exp();
            let prod = back.full() * fwd.full();
            prop_assert!(linalg::op_norm(&(prod - linalg::eye(2 * d))) < 1e-12 * scale.max(1.0));
        }

        #[test]
        fn exponents_pair_and_sum_to_zero(seed in 0u64..10_000, d in 1usize..=3) {
            let a = random_periodic(GroupTag::SpR, d, 6, 0.8, seed).unwrap();
            let rep = lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
            let n = 2 * d;
            for i in 0..d {
                prop_assert!((rep.exponents[i] + rep.exponents[n - 1 - i]).abs() < 1e-8);
            }
            prop_assert!(rep.exponents.iter().sum::<f64>().abs() < 1e-10);
        }

        #[test]
        fn hermitian_exponents_pair(seed in 0u64..10_000, d in 1usize..=2) {
            let a = random_periodic(GroupTag::SHSp, d, 5, 0.8, seed).unwrap();
            let rep = lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
            let n = 2 * d;
            for i in 0..d {
                prop_assert!((rep.exponents[i] + rep.exponents[n - 1 - i]).abs() < 1e-8);
            }
        }

        #[test]
        fn qr_agrees_with_exact_on_periodic(seed in 0u64..10_000, d in 1usize..=2) {
            let a = random_periodic(GroupTag::SpR, d, 4, 0.8, seed).unwrap();
            let exact = lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
            let qr = lyapunov_spectrum(&a, SampleSpec { n: 20_000, samples: 1, seed: 0 }, LyapunovMethod::Qr).unwrap();
            // the QR top-d sum equals the volume growth of the initial d-frame
            prop_assert!((exact.ld() - qr.ld()).abs() < 2e-3);
            let ext = top_exponent_exterior(&a, d, SampleSpec { n: 20_000, samples: 1, seed: 0 }).unwrap();
            let frame: f64 = qr_frame_exponents(&a, &BasePoint::Index(0), 20_000).unwrap()[..d].iter().sum();
            prop_assert!((ext - frame).abs() < 1e-9);
        }

        #[test]
        fn rotation_deformed_ld_is_positive(seed in 0u64..10_000, t in 0.05f64..1.0) {
            let a = random_periodic(GroupTag::SpR, 1, 4, 0.8, seed).unwrap();
            let az = a.map(None, move |_, m| group_core::rotation_deform(&m, c(0.3, t))).unwrap();
            let rep = lyapunov_spectrum(&az, SampleSpec::default(), LyapunovMethod::Auto).unwrap();
            prop_assert!(rep.ld() > 0.0);
        }
    }
}
