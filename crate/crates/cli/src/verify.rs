use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use kotani_core::cocycle_engine::{self, BasePoint, BaseSystem, SampleSpec};
use kotani_core::group_core::{self, GroupTag};
use kotani_core::kotani;
use kotani_core::linalg::{self, c, CMat};
use kotani_core::periodic_bands::{self, ThetaFamily};
use kotani_core::perturbation::{self, AlgebraMap, PerturbationPair};
use kotani_core::rotation_module::{self, RotationFamily};
use kotani_core::siegel_geometry::{self, DiscVariant};
use kotani_core::strip_operators::{self, PotentialKind, StripPotential};

use crate::config::Settings;
use crate::output::{num, write_sidecar, write_table, Table};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.residual <= self.tolerance
    }
}

fn check(name: &str, residual: f64, tolerance: f64) -> Check {
    Check { name: name.to_string(), residual: if residual.is_nan() { f64::INFINITY } else { residual }, tolerance }
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    linalg::op_norm(&(a - b)) / (1.0 + linalg::op_norm(b))
}

fn group_checks(d: usize, rng: &mut ChaCha8Rng) -> kotani_core::Result<Vec<Check>> {
    let mut out = Vec::new();
    for tag in [GroupTag::SpR, GroupTag::SHSp] {
        let variant = DiscVariant::for_tag(tag);
        let (mut memb, mut hom, mut act, mut coc) = (0f64, 0f64, 0f64, 0f64);
        for _ in 0..100 {
            let a = group_core::random_group_element(tag, d, 0.7, rng);
            let b = group_core::random_group_element(tag, d, 0.7, rng);
            memb = memb.max(group_core::membership_residual(&a, tag)?);
            let (ca, cb) = (group_core::cayley_conjugate(&a)?, group_core::cayley_conjugate(&b)?);
            let cab = group_core::cayley_conjugate(&(&a * &b))?;
            hom = hom.max(rel(&cab, &(&ca * &cb)));
            let z = siegel_geometry::random_disc_point(d, variant, 0.9, rng);
            let bz = siegel_geometry::mobius(&cb, &z)?;
            act = act.max(rel(&siegel_geometry::mobius(&cab, &z)?, &siegel_geometry::mobius(&ca, &bz)?));
            let lhs = siegel_geometry::tau(&cab, &z)?;
            let rhs = siegel_geometry::tau(&ca, &bz)? * siegel_geometry::tau(&cb, &z)?;
            coc = coc.max(rel(&lhs, &rhs));
        }
        let t = format!("{tag:?}");
        out.push(check(&format!("membership {t}"), memb, 1e-8));
        out.push(check(&format!("cayley homomorphism {t}"), hom, 1e-8));
        out.push(check(&format!("mobius action law {t}"), act, 1e-8));
        out.push(check(&format!("tau cocycle law {t}"), coc, 1e-8));
    }
    Ok(out)
}

fn run_checks(s: &Settings) -> kotani_core::Result<Vec<Check>> {
    let d = s.cocycle.d;
    let seed = s.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = group_checks(d, &mut rng)?;

    let a = cocycle_engine::random_periodic(GroupTag::SpR, d, 5, 1.0, seed)?;
    let ex = cocycle_engine::periodic_spectrum(&a)?;
    let pairing = (0..d).map(|i| (ex[i] + ex[2 * d - 1 - i]).abs()).fold(0.0, f64::max);
    out.push(check("lyapunov pairing", pairing, 1e-8));

    let fam = RotationFamily::new(cocycle_engine::random_periodic(GroupTag::SpR, d, 4, 1.0, seed)?)?;
    let targets: Vec<_> = (0..50).map(|i| c(-3.0 + 6.0 * i as f64 / 49.0, 0.0)).collect();
    let rho = rotation_module::rotation_function(&fam, &targets, SampleSpec { n: 2000, samples: 1, seed })?;
    let rise = rho.windows(2).map(|w| w[1].rho - w[0].rho).fold(0.0, f64::max);
    out.push(check("rotation function non-increasing", rise, 1e-6));

    let ids = kotani::ld_identities_check(&fam, c(0.3, 0.1), SampleSpec::default())?;
    out.push(check("L^d through tau", ids.res_tau, 1e-6));
    out.push(check("L^d through q", ids.res_q, 1e-6));

    let mut worst_gap = 0f64;
    for _ in 0..1000 {
        let x = siegel_geometry::random_disc_point(d, DiscVariant::General, 0.99, &mut rng);
        let y = siegel_geometry::random_disc_point(d, DiscVariant::General, 0.99, &mut rng);
        worst_gap = worst_gap.max(-kotani::trace_gap(&x, &y)?);
    }
    out.push(check("trace inequality", worst_gap, 1e-12));

    let shsp = cocycle_engine::random_periodic(GroupTag::SHSp, d, 8, 1.0, seed)?;
    let rep = periodic_bands::band_scan_theta(&ThetaFamily::new(shsp)?, 2048, 1e-9)?;
    out.push(check("band length over 2 pi / n", rep.max_length / rep.bound, 1.05));

    let pa = AlgebraMap::Constant(perturbation::random_in_ball(d, perturbation::DEFAULT_ETA, &mut rng));
    let pair = PerturbationPair::new(pa, AlgebraMap::Constant(linalg::j_matrix(d)), 0.2, perturbation::DEFAULT_ETA)?;
    let con = perturbation::contraction_condition(&pair, c(0.0, 2f64.sqrt() - 1.0), 30, seed)?;
    out.push(check("contraction at (sqrt2 - 1) i, negative margin", -con.margin, -perturbation::CONTRACTION_TOL));

    let v = StripPotential::from_fn(d, PotentialKind::Hermitian, move |x| {
        let i = x.symbol().unwrap_or(0) as u64;
        let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        let m = CMat::from_fn(d, d, |_, _| c(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
        Ok(linalg::hermitian_part(&m))
    })?;
    let base = BaseSystem::Periodic { period: 3 };
    let mono = strip_operators::e_monotonicity_check(&v, &base, &BasePoint::Index(0), 0.4, 1e-6)?;
    out.push(check("E-monotonicity, top eigenvalue", mono.max_eigenvalue, 0.0));

    let scan = strip_operators::energy_scan(&StripPotential::zero(1), &BaseSystem::Periodic { period: 1 }, GroupTag::SpR, (-3.0, 3.0), 300, SampleSpec::default(), 1e-3)?;
    out.push(check("free zero-set measure minus 4", (scan.m_estimate - 4.0).abs(), 0.05));
    Ok(out)
}

pub fn run(s: &Settings) -> Result<(), CliError> {
    let checks = run_checks(s)?;
    let mut t = Table::new(&["check", "residual", "tolerance", "pass"]);
    for ch in &checks {
        t.row(vec![ch.name.clone(), num(ch.residual), num(ch.tolerance), ch.pass().to_string()]);
        println!("{} {}: {:.3e} (tol {:.1e})", if ch.pass() { "PASS" } else { "FAIL" }, ch.name, ch.residual, ch.tolerance);
    }
    write_table(s, "verify", &t)?;
    write_sidecar(s, "verify", json!({}), &checks)?;
    let failed = checks.iter().filter(|c| !c.pass()).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
