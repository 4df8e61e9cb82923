//! Matrix groups acting on the Siegel disc, the Cayley transform, and the rotation deformation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupTag {
    SpR,
    SpC,
    HSp,
    SHSp,
    Udd,
    SUdd,
    UddCapSpC,
}

impl GroupTag {
    /// Tag of the Cayley conjugate group.
    pub fn cayley_image(self) -> GroupTag {
        match self {
            GroupTag::SpR => GroupTag::UddCapSpC,
            GroupTag::HSp => GroupTag::Udd,
            GroupTag::SHSp => GroupTag::SUdd,
            other => other,
        }
    }

    /// True for groups acting on symmetric disc points.
    pub fn is_symmetric_variant(self) -> bool {
        matches!(self, GroupTag::SpR | GroupTag::SpC | GroupTag::UddCapSpC)
    }

    /// Exponent p in the Jacobian `|det tau|^(-2p)` of the disc action.
    pub fn jacobian_power(self, d: usize) -> f64 {
        if self.is_symmetric_variant() {
            (d + 1) as f64
        } else {
            (2 * d) as f64
        }
    }

    pub fn parse(s: &str) -> Result<GroupTag> {
        match s.to_ascii_lowercase().as_str() {
            "spr" | "sp" => Ok(GroupTag::SpR),
            "spc" => Ok(GroupTag::SpC),
            "hsp" => Ok(GroupTag::HSp),
            "shsp" => Ok(GroupTag::SHSp),
            "udd" => Ok(GroupTag::Udd),
            "sudd" => Ok(GroupTag::SUdd),
            "uddcapspc" => Ok(GroupTag::UddCapSpC),
            _ => Err(Error::Input(format!("unknown group tag '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub matrix: CMat,
    pub tag: GroupTag,
}

impl GroupElement {
    pub fn new(matrix: CMat, tag: GroupTag, tol: f64) -> Result<Self> {
        if !is_in_group(&matrix, tag, tol)? {
            return Err(Error::Domain(format!(
                "matrix is not in {tag:?} (residual {:.3e})",
                membership_residual(&matrix, tag)?
            )));
        }
        Ok(GroupElement { matrix, tag })
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn inverse(&self) -> Result<CMat> {
        structured_inverse(&self.matrix, self.tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    pub matrix: CMat,
    pub tag: GroupTag,
}

fn check_even_square(m: &CMat) -> Result<usize> {
    if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a square matrix of even size, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows() / 2)
}

/// Relative residual of the defining relations of `tag`.
pub fn membership_residual(m: &CMat, tag: GroupTag) -> Result<f64> {
    let d = check_even_square(m)?;
    let j = linalg::j_matrix(d);
    let s = linalg::sigma_matrix(d);
    let scale = 1.0 + linalg::op_norm(m).powi(2);
    let sympl = || linalg::op_norm(&(m.transpose() * &j * m - &j));
    let herm = || linalg::op_norm(&(m.adjoint() * &j * m - &j));
    let unit = || linalg::op_norm(&(m.adjoint() * &s * m - &s));
    let det1 = || (linalg::det(m) - linalg::ONE).norm();
    let imag = || m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let r = match tag {
        GroupTag::SpR => sympl().max(imag() * scale),
        GroupTag::SpC => sympl(),
        GroupTag::HSp => herm(),
        GroupTag::SHSp => herm().max(det1() * scale),
        GroupTag::Udd => unit(),
        GroupTag::SUdd => unit().max(det1() * scale),
        GroupTag::UddCapSpC => sympl().max(unit()),
    };
    Ok(r / scale)
}

pub fn is_in_group(m: &CMat, tag: GroupTag, tol: f64) -> Result<bool> {
    Ok(membership_residual(m, tag)? <= tol)
}

/// Inverse from the defining relation of `tag`.
pub fn structured_inverse(m: &CMat, tag: GroupTag) -> Result<CMat> {
    let d = check_even_square(m)?;
    let j = linalg::j_matrix(d);
    let s = linalg::sigma_matrix(d);
    Ok(match tag {
        GroupTag::SpR | GroupTag::SpC => -(&j * m.transpose() * &j),
        GroupTag::HSp | GroupTag::SHSp => -(&j * m.adjoint() * &j),
        GroupTag::Udd | GroupTag::SUdd | GroupTag::UddCapSpC => &s * m.adjoint() * &s,
    })
}

pub fn cayley_matrix(d: usize) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let id = linalg::eye(d);
    linalg::block2(
        &(&id * c(r, 0.0)),
        &(&id * c(0.0, -r)),
        &(&id * c(r, 0.0)),
        &(&id * c(0.0, r)),
    )
}

pub fn cayley_matrix_inv(d: usize) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let id = linalg::eye(d);
    linalg::block2(
        &(&id * c(r, 0.0)),
        &(&id * c(r, 0.0)),
        &(&id * c(0.0, r)),
        &(&id * c(0.0, -r)),
    )
}

/// `C M C^{-1}`.
pub fn cayley_conjugate(m: &CMat) -> Result<CMat> {
    let d = check_even_square(m)?;
    Ok(cayley_matrix(d) * m * cayley_matrix_inv(d))
}

/// `C^{-1} M C`.
pub fn cayley_unconjugate(m: &CMat) -> Result<CMat> {
    let d = check_even_square(m)?;
    Ok(cayley_matrix_inv(d) * m * cayley_matrix(d))
}

/// `R(z) = [[cos z I, sin z I], [-sin z I, cos z I]]`.
pub fn rotation(d: usize, z: C64) -> CMat {
    let id = linalg::eye(d);
    let (s, co) = (z.sin(), z.cos());
    linalg::block2(&(&id * co), &(&id * s), &(&id * (-s)), &(&id * co))
}

/// Cayley side of `R(z)`, equal to `diag(e^{iz} I, e^{-iz} I)`.
pub fn rotation_cayley(d: usize, z: C64) -> CMat {
    let e = (linalg::I * z).exp();
    linalg::diag_blocks(e, e.inv(), d)
}

/// `R(z) M`.
pub fn rotation_deform(m: &CMat, z: C64) -> Result<CMat> {
    let d = check_even_square(m)?;
    Ok(rotation(d, z) * m)
}

/// Residual of the Lie algebra relation for `tag`.
pub fn algebra_residual(w: &CMat, tag: GroupTag) -> Result<f64> {
    let d = check_even_square(w)?;
    let j = linalg::j_matrix(d);
    let s = linalg::sigma_matrix(d);
    let scale = 1.0 + linalg::op_norm(w);
    let sympl = || linalg::op_norm(&(w.transpose() * &j + &j * w));
    let herm = || linalg::op_norm(&(w.adjoint() * &j + &j * w));
    let unit = || linalg::op_norm(&(w.adjoint() * &s + &s * w));
    let imag = || w.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let r = match tag {
        GroupTag::SpR => sympl().max(imag()),
        GroupTag::SpC => sympl(),
        GroupTag::HSp => herm(),
        GroupTag::SHSp => herm().max(w.trace().norm()),
        GroupTag::Udd => unit(),
        GroupTag::SUdd => unit().max(w.trace().norm()),
        GroupTag::UddCapSpC => sympl().max(unit()),
    };
    Ok(r / scale)
}

/// Whether `w` lies in the open cone `{W : Herm(J W) < 0}` of the algebra.
pub fn cone_membership(w: &AlgebraElement, tol: f64) -> Result<bool> {
    if algebra_residual(&w.matrix, w.tag)? > tol.max(1e-12) {
        return Err(Error::Domain(format!("matrix is not in the {:?} algebra", w.tag)));
    }
    let real_side = match w.tag {
        GroupTag::Udd | GroupTag::SUdd | GroupTag::UddCapSpC => cayley_unconjugate(&w.matrix)?,
        _ => w.matrix.clone(),
    };
    let d = real_side.nrows() / 2;
    let jw = linalg::j_matrix(d) * real_side;
    let ev = linalg::hermitian_eigenvalues(&jw);
    Ok(ev.last().is_some_and(|&m| m < -tol))
}

fn uniform(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-1.0..1.0)
}

/// Random algebra element with entries uniform in `[-scale, scale]` in natural coordinates.
pub fn random_algebra_element(tag: GroupTag, d: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    let n = 2 * d;
    let j = linalg::j_matrix(d);
    let s = linalg::sigma_matrix(d);
    let real_sym = |rng: &mut dyn rand::RngCore| {
        let mut m = linalg::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = c(rng.gen_range(-1.0..1.0) * scale, 0.0);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    };
    let herm = |rng: &mut dyn rand::RngCore| {
        let mut m = linalg::zeros(n, n);
        for a in 0..n {
            m[(a, a)] = c(rng.gen_range(-1.0..1.0) * scale, 0.0);
            for b in a + 1..n {
                let v = c(rng.gen_range(-1.0..1.0) * scale, rng.gen_range(-1.0..1.0) * scale);
                m[(a, b)] = v;
                m[(b, a)] = v.conj();
            }
        }
        m
    };
    let traceless = |w: CMat| {
        let t = w.trace() / c(n as f64, 0.0);
        &w - linalg::eye(n) * t
    };
    match tag {
        GroupTag::SpR => &j * real_sym(rng),
        GroupTag::SpC => {
            let mut m = linalg::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let v = c(uniform(rng) * scale, uniform(rng) * scale);
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
            &j * m
        }
        GroupTag::HSp => &j * herm(rng),
        GroupTag::SHSp => traceless(&j * herm(rng)),
        GroupTag::Udd => &s * herm(rng) * linalg::I,
        GroupTag::SUdd => traceless(&s * herm(rng) * linalg::I),
        GroupTag::UddCapSpC => {
            let w = &j * real_sym(rng);
            cayley_matrix(d) * w * cayley_matrix_inv(d)
        }
    }
}

/// Random group element `exp(W)` with `W` from [`random_algebra_element`].
pub fn random_group_element(tag: GroupTag, d: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    let w = random_algebra_element(tag, d, scale, rng);
    let mut m = linalg::expm(&w);
    if matches!(tag, GroupTag::SHSp | GroupTag::SUdd) {
        // remove the residual phase of the determinant
        let det = linalg::det(&m);
        let phase = (-det.arg() / (2 * d) as f64) * linalg::I;
        m *= phase.exp();
    }
    m
}
