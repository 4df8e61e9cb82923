//! The Siegel disc, its Shilov boundary, the Möbius action and phase lifts of `det`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_core;
use crate::linalg::{self, c, CMat, C64};

/// Condition number above which `C Z + D` is treated as singular.
pub const MAX_COND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscVariant {
    /// Symmetric `d x d` matrices, acted on by `Sp(2d, R)` and `Sp(2d, C)`.
    Symmetric,
    /// General `d x d` matrices, acted on by `U(d, d)`.
    General,
}

impl DiscVariant {
    pub fn for_tag(tag: group_core::GroupTag) -> Self {
        if tag.is_symmetric_variant() {
            DiscVariant::Symmetric
        } else {
            DiscVariant::General
        }
    }

    pub fn volume_power(self, d: usize) -> f64 {
        match self {
            DiscVariant::Symmetric => (d + 1) as f64,
            DiscVariant::General => (2 * d) as f64,
        }
    }
}

fn check_square(z: &CMat) -> Result<usize> {
    if z.nrows() != z.ncols() || z.nrows() == 0 {
        return Err(Error::Dimension(format!("expected square disc point, got {}x{}", z.nrows(), z.ncols())));
    }
    Ok(z.nrows())
}

fn check_pair(m: &CMat, z: &CMat) -> Result<usize> {
    let d = check_square(z)?;
    if m.nrows() != 2 * d || m.ncols() != 2 * d {
        return Err(Error::Dimension(format!(
            "group element is {}x{} but disc point is {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(d)
}

/// `tau(M, Z) = C Z + D` for the Cayley-side element `M = [[A, B], [C, D]]`.
pub fn tau(m: &CMat, z: &CMat) -> Result<CMat> {
    check_pair(m, z)?;
    let (_, _, cb, db) = linalg::blocks(m);
    Ok(cb * z + db)
}

/// `M . Z = (A Z + B)(C Z + D)^{-1}`.
pub fn mobius(m: &CMat, z: &CMat) -> Result<CMat> {
    check_pair(m, z)?;
    let (a, b, cb, db) = linalg::blocks(m);
    let t = &cb * z + db;
    let ti = linalg::inverse_checked(&t, MAX_COND)?;
    Ok((a * z + b) * ti)
}

/// `M . Z` together with `tau(M, Z)`.
pub fn mobius_with_tau(m: &CMat, z: &CMat) -> Result<(CMat, CMat)> {
    check_pair(m, z)?;
    let (a, b, cb, db) = linalg::blocks(m);
    let t = &cb * z + db;
    let ti = linalg::inverse_checked(&t, MAX_COND)?;
    Ok(((a * z + b) * ti, t))
}

/// Cayley map from the Siegel upper half-space to the disc, `(Z - iI)(Z + iI)^{-1}`.
pub fn phi_c(z: &CMat) -> Result<CMat> {
    let d = check_square(z)?;
    let id = linalg::eye(d);
    let den = z + &id * linalg::I;
    let inv = linalg::inverse_checked(&den, MAX_COND)?;
    Ok((z - &id * linalg::I) * inv)
}

/// Inverse Cayley map `i (I + W)(I - W)^{-1}`.
pub fn phi_c_inv(w: &CMat) -> Result<CMat> {
    let d = check_square(w)?;
    let id = linalg::eye(d);
    let den = &id - w;
    let inv = linalg::inverse_checked(&den, MAX_COND)?;
    Ok((&id + w) * inv * linalg::I)
}

/// Whether `z` lies in the open disc (and is symmetric for the symmetric variant).
pub fn in_disc(z: &CMat, variant: DiscVariant, tol: f64) -> bool {
    if variant == DiscVariant::Symmetric && !linalg::is_symmetric(z, 1e-9) {
        return false;
    }
    linalg::op_norm(z) < 1.0 - tol
}

/// `det(I - Z^* Z)^{-p}`, the invariant volume density.
pub fn volume_density(z: &CMat, variant: DiscVariant) -> Result<f64> {
    let d = check_square(z)?;
    let s = linalg::singular_values(z);
    if s[0] >= 1.0 {
        return Err(Error::Domain(format!("point has norm {:.6} >= 1", s[0])));
    }
    let p = variant.volume_power(d);
    Ok(s.iter().map(|x| (1.0 - x * x).powf(-p)).product())
}

/// Natural log of [`volume_density`].
pub fn log_volume_density(z: &CMat, variant: DiscVariant) -> Result<f64> {
    let d = check_square(z)?;
    let s = linalg::singular_values(z);
    if s[0] >= 1.0 {
        return Err(Error::Domain(format!("point has norm {:.6} >= 1", s[0])));
    }
    let p = variant.volume_power(d);
    Ok(-p * s.iter().map(|x| (1.0 - x * x).ln()).sum::<f64>())
}

/// Index `k` of the boundary stratum: `rank(I - Z Zbar) = d - k` (symmetric) or `rank(I - Z^* Z) = d - k`.
pub fn boundary_stratum(z: &CMat, variant: DiscVariant, tol: f64) -> Result<usize> {
    let d = check_square(z)?;
    let nz = linalg::op_norm(z);
    if (nz - 1.0).abs() > tol.max(1e-9) {
        return Err(Error::Domain(format!("point has norm {nz:.6}, not on the boundary")));
    }
    let id = linalg::eye(d);
    let r = match variant {
        DiscVariant::Symmetric => &id - z * linalg::conj(z),
        DiscVariant::General => &id - z.adjoint() * z,
    };
    let rank = linalg::singular_values(&r).iter().filter(|&&s| s > 1e-7).count();
    Ok(d - rank)
}

pub fn is_shilov(z: &CMat, variant: DiscVariant, tol: f64) -> bool {
    let d = z.nrows();
    if variant == DiscVariant::Symmetric && !linalg::is_symmetric(z, tol) {
        return false;
    }
    linalg::op_norm(&(z.adjoint() * z - linalg::eye(d))) <= tol
}

/// `ell(K, Z) = sum Log(1 + mu_i)` over eigenvalues of `K Z`; the continuous branch of
/// `log det(I + K Z)` when `K` is a contraction and `Z` is in the closed disc.
pub fn ell(k: &CMat, z: &CMat) -> Result<C64> {
    let kz = k * z;
    let ev = linalg::eigenvalues(&kz)?;
    if let Some(mu) = ev.iter().find(|mu| mu.norm() >= 1.0 - 1e-14) {
        return Err(Error::Domain(format!("eigenvalue of K Z has modulus {:.6}", mu.norm())));
    }
    Ok(ev.iter().map(|mu| (linalg::ONE + mu).ln()).sum())
}

/// Splits `det tau(M, Z) = det D * det(I + K Z)` with `K = D^{-1} C`; returns `(D, K)`.
pub fn d_block_and_k(m: &CMat) -> Result<(CMat, CMat)> {
    let (_, _, cb, db) = linalg::blocks(m);
    let di = linalg::inverse_checked(&db, MAX_COND)?;
    let k = &di * cb;
    Ok((db, k))
}

/// Iterates the composition `Z -> M_{p-1} . ( ... (M_0 . Z))` from `z0` until successive
/// iterates differ by less than `tol` in operator norm. Returns the limit, the number of
/// full compositions and the last difference.
pub fn attracting_fixed_point(mats: &[CMat], z0: &CMat, tol: f64, max_iter: usize) -> Result<(CMat, usize, f64)> {
    let mut z = z0.clone();
    let mut diff = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = z.clone();
        for m in mats {
            next = mobius(m, &next)?;
        }
        diff = linalg::op_norm(&(&next - &z));
        z = next;
        if diff < tol {
            return Ok((z, it, diff));
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual: diff })
}

/// A continuous lift of `arg det` recorded along a real parameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseLift {
    pub params: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhaseLift {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn push(&mut self, s: f64, v: f64) {
        self.params.push(s);
        self.values.push(v);
    }
}

/// Maximum bisection depth used by all phase continuations.
pub const MAX_UNWRAP_DEPTH: u32 = 40;

/// Continues a lift of `arg f(s)` from `s0` to `s1`, bisecting until every principal
/// increment is below `pi / 2`. Appends the nodes (excluding `s0`) to `lift`.
pub fn continue_phase<F>(f: &F, s0: f64, s1: f64, arg0: f64, lift: &mut PhaseLift) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    fn rec<F: Fn(f64) -> Result<f64>>(
        f: &F,
        s0: f64,
        a0: f64,
        lifted0: f64,
        s1: f64,
        a1: f64,
        depth: u32,
        lift: &mut PhaseLift,
    ) -> Result<f64> {
        let inc = linalg::wrap_angle(a1 - a0);
        if inc.abs() < std::f64::consts::FRAC_PI_2 {
            let v = lifted0 + inc;
            lift.push(s1, v);
            return Ok(v);
        }
        if depth >= MAX_UNWRAP_DEPTH {
            return Err(Error::Unwrap { depth, increment: inc });
        }
        let sm = 0.5 * (s0 + s1);
        let am = f(sm)?;
        let vm = rec(f, s0, a0, lifted0, sm, am, depth + 1, lift)?;
        rec(f, sm, am, vm, s1, a1, depth + 1, lift)
    }
    let a0 = f(s0)?;
    let a1 = f(s1)?;
    let start = lifted_start(arg0, a0);
    rec(f, s0, a0, start, s1, a1, 0, lift)
}

fn lifted_start(lifted: f64, principal: f64) -> f64 {
    lifted + linalg::wrap_angle(principal - lifted)
}

/// Extends `lift` (whose last value is a lift of `arg det(path(span.0) . Z)`) to
/// `arg det(path(span.1) . Z)`, subdividing the parameter of `path`.
pub fn shilov_phase_step<F>(path: F, span: (f64, f64), z: &CMat, lift: &PhaseLift) -> Result<PhaseLift>
where
    F: Fn(f64) -> Result<CMat>,
{
    let phase = |s: f64| -> Result<f64> {
        let m = path(s)?;
        Ok(linalg::det(&mobius(&m, z)?).arg())
    };
    let mut out = lift.clone();
    let start = match lift.last() {
        Some(v) => v,
        None => {
            let a = phase(span.0)?;
            out.push(span.0, a);
            a
        }
    };
    continue_phase(&phase, span.0, span.1, start, &mut out)?;
    Ok(out)
}

/// Random point of the open disc with operator norm at most `radius`.
pub fn random_disc_point(d: usize, variant: DiscVariant, radius: f64, rng: &mut impl Rng) -> CMat {
    let mut z = CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    if variant == DiscVariant::Symmetric {
        z = (&z + z.transpose()) * c(0.5, 0.0);
    }
    let n = linalg::op_norm(&z);
    let target = radius * rng.gen_range(0.0..1.0f64).sqrt();
    if n > 0.0 {
        z *= c(target / n, 0.0);
    }
    z
}

/// Random unitary point of the Shilov boundary (`U U^T` for the symmetric variant).
pub fn random_shilov_point(d: usize, variant: DiscVariant, rng: &mut impl Rng) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let u = g.qr().q();
    match variant {
        DiscVariant::Symmetric => &u * u.transpose(),
        DiscVariant::General => u,
    }
}
