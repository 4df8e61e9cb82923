//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn from_rows(rows: &[&[f64]]) -> CMat {
    let r = rows.len();
    let cols = rows.first().map_or(0, |x| x.len());
    CMat::from_fn(r, cols, |i, j| C64::new(rows[i][j], 0.0))
}

/// `[[a, b], [c, d]]` from four square blocks.
pub fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let n = a.nrows();
    let mut m = zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n)).copy_from(b);
    m.view_mut((n, 0), (n, n)).copy_from(c);
    m.view_mut((n, n), (n, n)).copy_from(d);
    m
}

/// `[top; bottom]` stacked vertically.
pub fn block_column(top: &CMat, bottom: &CMat) -> CMat {
    let mut m = zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    m
}

pub fn blocks(m: &CMat) -> (CMat, CMat, CMat, CMat) {
    let n = m.nrows() / 2;
    (
        m.view((0, 0), (n, n)).into_owned(),
        m.view((0, n), (n, n)).into_owned(),
        m.view((n, 0), (n, n)).into_owned(),
        m.view((n, n), (n, n)).into_owned(),
    )
}

pub fn diag_blocks(a: C64, b: C64, d: usize) -> CMat {
    let mut m = zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, i)] = a;
        m[(d + i, d + i)] = b;
    }
    m
}

pub fn j_matrix(d: usize) -> CMat {
    let id = eye(d);
    block2(&zeros(d, d), &id, &(-&id), &zeros(d, d))
}

pub fn sigma_matrix(d: usize) -> CMat {
    diag_blocks(ONE, -ONE, d)
}

pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

pub fn hs_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn cond(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn det(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return ONE;
    }
    m.clone().lu().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular matrix".into()))
}

/// Inverse with a guard on the condition number.
pub fn inverse_checked(m: &CMat, max_cond: f64) -> Result<CMat> {
    let k = cond(m);
    if !k.is_finite() || k > max_cond {
        return Err(Error::BoundaryAtInfinity(k));
    }
    inverse(m)
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn conj(m: &CMat) -> CMat {
    m.map(|z| z.conj())
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigenvalues of a Hermitian matrix, increasing.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    e
}

/// Hermitian eigen-decomposition `(values, vectors)`, columns of `vectors` are eigenvectors.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let e = SymmetricEigen::new(hermitian_part(m));
    (e.eigenvalues.iter().cloned().collect(), e.eigenvectors)
}

fn quadratic_roots(a: C64, b: C64, c: C64) -> (C64, C64) {
    // roots of z^2 - (a + c) z + (a c - b) with cancellation-free pairing
    let tr = a + c;
    let disc = ((a - c) * (a - c) + b * C64::new(4.0, 0.0)).sqrt();
    let p = if (tr + disc).norm() >= (tr - disc).norm() {
        (tr + disc) * 0.5
    } else {
        (tr - disc) * 0.5
    };
    let detv = a * c - b;
    let q = if p.norm() > 0.0 { detv / p } else { tr - p };
    (p, q)
}

/// Eigenvalues of a general complex square matrix.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    match n {
        0 => Ok(vec![]),
        1 => Ok(vec![m[(0, 0)]]),
        2 => {
            let (p, q) = quadratic_roots(m[(0, 0)], m[(0, 1)] * m[(1, 0)], m[(1, 1)]);
            Ok(vec![p, q])
        }
        _ => {
            if !is_finite(m) {
                return Err(Error::Numeric("non-finite matrix entry".into()));
            }
            hessenberg_qr_eigenvalues(m)
        }
    }
}

/// Shifted QR iteration on the Hessenberg form, eigenvalues only.
fn hessenberg_qr_eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    let mut h = m.clone().hessenberg().h();
    let scale = hs_norm(&h);
    if scale == 0.0 {
        return Ok(vec![ZERO; n]);
    }
    let tiny = f64::EPSILON * scale;
    let mut out = vec![ZERO; n];
    let mut hi = n - 1;
    let mut iter_since = 0usize;
    let mut total = 0usize;
    loop {
        if hi == 0 {
            out[0] = h[(0, 0)];
            break;
        }
        // locate the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            if sub <= f64::EPSILON * diag || sub <= tiny {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            out[hi] = h[(hi, hi)];
            hi -= 1;
            iter_since = 0;
            continue;
        }
        total += 1;
        iter_since += 1;
        if total > 100 * n * n + 1000 {
            return Err(Error::Numeric("QR eigenvalue iteration did not converge".into()));
        }
        let mu = if iter_since % 11 == 10 {
            // exceptional shift
            h[(hi, hi)] + C64::new(h[(hi, hi - 1)].norm() * 0.75, h[(hi, hi - 1)].norm() * 0.3)
        } else {
            let (p, q) = quadratic_roots(h[(hi - 1, hi - 1)], h[(hi - 1, hi)] * h[(hi, hi - 1)], h[(hi, hi)]);
            if (p - h[(hi, hi)]).norm() < (q - h[(hi, hi)]).norm() {
                p
            } else {
                q
            }
        };
        // one QR step on the block lo..=hi via Givens rotations
        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        let mut rots: Vec<(C64, C64)> = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let a = h[(k, k)];
            let b = h[(k + 1, k)];
            let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let (cs, sn) = if r == 0.0 { (ONE, ZERO) } else { (a / r, b / r) };
            // G = [[conj(cs), conj(sn)], [-sn, cs]] applied to rows k, k+1
            for j in k..=hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = cs.conj() * x + sn.conj() * y;
                h[(k + 1, j)] = -sn * x + cs * y;
            }
            rots.push((cs, sn));
        }
        for (i, k) in (lo..hi).enumerate() {
            let (cs, sn) = rots[i];
            // multiply columns k, k+1 by G^*
            for r in lo..=(k + 1).min(hi) {
                let x = h[(r, k)];
                let y = h[(r, k + 1)];
                h[(r, k)] = x * cs + y * sn;
                h[(r, k + 1)] = -x * sn.conj() + y * cs.conj();
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    Ok(out)
}

pub fn spectral_radius(m: &CMat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Right singular vectors for the `k` smallest singular values, as columns.
pub fn null_basis(m: &CMat, k: usize) -> Result<CMat> {
    let n = m.ncols();
    let svd = SVD::new(m.clone(), false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = zeros(n, k);
    for (col, &i) in idx.iter().take(k).enumerate() {
        for r in 0..n {
            out[(r, col)] = vt[(i, r)].conj();
        }
    }
    Ok(out)
}

/// Principal branch log of the eigenvalues of `I + m` summed; valid when the spectral radius of `m` is < 1.
pub fn log_det_one_plus(m: &CMat) -> Result<C64> {
    let ev = eigenvalues(m)?;
    Ok(ev.iter().map(|mu| (ONE + mu).ln()).sum())
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// All k-subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// k-th exterior power in the lexicographic basis of k-subsets.
pub fn exterior_power(m: &CMat, k: usize) -> CMat {
    let n = m.nrows();
    let sets = subsets(n, k);
    let dim = sets.len();
    let mut out = zeros(dim, dim);
    for (a, rows) in sets.iter().enumerate() {
        for (b, cols) in sets.iter().enumerate() {
            let minor = CMat::from_fn(k, k, |i, j| m[(rows[i], cols[j])]);
            out[(a, b)] = det(&minor);
        }
    }
    out
}

pub fn is_symmetric(m: &CMat, tol: f64) -> bool {
    hs_norm(&(m - m.transpose())) <= tol * (1.0 + hs_norm(m))
}

/// Matrix exponential.
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y <= -std::f64::consts::PI {
        y += two_pi;
    } else if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}
