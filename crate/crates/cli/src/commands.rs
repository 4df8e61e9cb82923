use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use kotani_core::cocycle_engine::{self, BasePoint, BaseSystem, Cocycle, LyapunovMethod, SampleSpec};
use kotani_core::group_core::GroupTag;
use kotani_core::kotani::{self, Side};
use kotani_core::linalg::{self, c, CMat, C64};
use kotani_core::periodic_bands::{self, BandOptions, EnergyBandFamily, ThetaFamily};
use kotani_core::perturbation::{self, AlgebraMap, DensityOptions, PerturbationPair};
use kotani_core::rotation_module::{self, DeformedFamily, RotationFamily};
use kotani_core::strip_operators::{self, PotentialKind, StripPotential};

use crate::config::Settings;
use crate::output::{num, write_sidecar, write_table, Table};
use crate::CliError;

pub fn tag(s: &Settings) -> Result<GroupTag, CliError> {
    GroupTag::parse(&s.cocycle.tag).map_err(|e| CliError::Config(format!("cocycle.tag: {e}")))
}

/// Strip potential and the base it lives on.
pub fn potential(s: &Settings) -> Result<(StripPotential, BaseSystem), CliError> {
    let d = s.cocycle.d;
    let spec = s.cocycle.potential.as_str();
    let periodic = |p: usize| BaseSystem::Periodic { period: p };
    if spec == "zero" {
        return Ok((StripPotential::zero(d), periodic(1)));
    }
    if let Some(x) = spec.strip_prefix("constant:") {
        let x: f64 = x.parse().map_err(|e| CliError::Config(format!("cocycle.potential '{spec}': {e}")))?;
        return Ok((StripPotential::constant(linalg::eye(d) * c(x, 0.0), PotentialKind::RealSymmetric)?, periodic(1)));
    }
    if let Some(rest) = spec.strip_prefix("anderson:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let bad = |e: String| CliError::Config(format!("cocycle.potential '{spec}': {e}"));
        if parts.len() != 2 {
            return Err(bad("expected anderson:W:K".into()));
        }
        let w: f64 = parts[0].parse().map_err(|e| bad(format!("{e}")))?;
        let k: usize = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
        if k == 0 {
            return Err(bad("K must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let table: Vec<CMat> = (0..k)
            .map(|_| CMat::from_diagonal(&nalgebra_vec((0..d).map(|_| c(w * (rng.gen_range(0.0..1.0) - 0.5), 0.0)).collect())))
            .collect();
        let v = StripPotential::from_table(table, PotentialKind::RealSymmetric)?;
        return Ok((v, BaseSystem::FiniteShift { weights: vec![1.0 / k as f64; k] }));
    }
    let path = Path::new(spec);
    let v = if path.extension().is_some_and(|e| e == "json") {
        StripPotential::load_json(path)?
    } else {
        let kind = match s.cocycle.potential_kind.as_str() {
            "hermitian" => PotentialKind::Hermitian,
            "real" => PotentialKind::RealSymmetric,
            k => return Err(CliError::Config(format!("cocycle.potential_kind: unknown kind '{k}'"))),
        };
        StripPotential::load_csv(path, kind)?
    };
    let p = v.table_len.unwrap_or(1);
    Ok((v, periodic(p)))
}

fn nalgebra_vec(v: Vec<C64>) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_vec(v)
}

fn is_strip(s: &Settings) -> bool {
    s.cocycle.family == "strip"
}

fn strip_tag(s: &Settings, v: &StripPotential) -> GroupTag {
    if s.cocycle.tag.eq_ignore_ascii_case("spr") {
        v.natural_tag()
    } else {
        tag(s).unwrap_or(v.natural_tag())
    }
}

pub fn cocycle(s: &Settings) -> Result<Cocycle, CliError> {
    let d = s.cocycle.d;
    match s.cocycle.family.as_str() {
        "random" => Ok(cocycle_engine::random_periodic(tag(s)?, d, s.cocycle.period, s.cocycle.scale, s.seed)?),
        "identity" => Ok(Cocycle::constant(linalg::eye(2 * d), Some(tag(s)?))?),
        "strip" => {
            let (v, base) = potential(s)?;
            let t = strip_tag(s, &v);
            Ok(strip_operators::transfer_cocycle(&v, c(s.cocycle.energy, 0.0), &base, t)?)
        }
        f => Err(CliError::Config(format!("cocycle.family: unknown family '{f}'"))),
    }
}

pub fn family(s: &Settings) -> Result<Box<dyn DeformedFamily>, CliError> {
    if is_strip(s) {
        let (v, base) = potential(s)?;
        let t = strip_tag(s, &v);
        Ok(Box::new(strip_operators::energy_family(&v, &base, t)?))
    } else {
        Ok(Box::new(RotationFamily::new(cocycle(s)?)?))
    }
}

fn spec(s: &Settings, n: usize, samples: usize) -> SampleSpec {
    SampleSpec { n, samples, seed: s.seed }
}

fn sites(s: &Settings, f: &dyn DeformedFamily) -> Vec<BasePoint> {
    kotani::all_sites(f).unwrap_or_else(|_| f.base().sample_points(16, 0, 0, s.seed))
}

fn done(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

pub fn lyapunov(s: &Settings) -> Result<(), CliError> {
    let a = cocycle(s)?;
    let method = match s.lyapunov.method.as_str() {
        "auto" => LyapunovMethod::Auto,
        "qr" => LyapunovMethod::Qr,
        m => return Err(CliError::Config(format!("lyapunov.method: unknown method '{m}'"))),
    };
    let rep = cocycle_engine::lyapunov_spectrum(&a, spec(s, s.lyapunov.n, s.lyapunov.samples), method)?;
    let mut t = Table::new(&["index", "exponent", "stderr"]);
    for (i, (e, se)) in rep.exponents.iter().zip(&rep.stderr).enumerate() {
        t.row(vec![(i + 1).to_string(), num(*e), num(*se)]);
    }
    let csv = write_table(s, "lyapunov", &t)?;
    let json = write_sidecar(s, "lyapunov", json!({}), &rep)?;
    done(&[csv, json]);
    Ok(())
}

pub fn rotation(s: &Settings) -> Result<(), CliError> {
    let f = family(s)?;
    let r = &s.rotation;
    let k = r.points;
    let targets: Vec<C64> = (0..k)
        .map(|i| {
            let sigma = if k == 1 { r.sigma_min } else { r.sigma_min + (r.sigma_max - r.sigma_min) * i as f64 / (k - 1) as f64 };
            c(sigma, r.t)
        })
        .collect();
    let vals = rotation_module::rotation_function(f.as_ref(), &targets, spec(s, r.n, 1))?;
    let mut t = Table::new(&["sigma", "t", "rho", "ld", "rho_bound", "ld_stderr"]);
    for v in &vals {
        t.row(vec![num(v.sigma), num(v.t), num(v.rho), num(v.ld), num(v.rho_bound), num(v.ld_stderr)]);
    }
    let csv = write_table(s, "rotation", &t)?;
    let json = write_sidecar(s, "rotation", json!({}), &json!({ "points": vals.len() }))?;
    done(&[csv, json]);
    Ok(())
}

pub fn mfield(s: &Settings) -> Result<(), CliError> {
    let f = family(s)?;
    let m = &s.mfield;
    let side = match m.side.as_str() {
        "plus" => Side::Plus,
        "minus" => Side::Minus,
        x => return Err(CliError::Config(format!("mfield.side: expected plus or minus, got '{x}'"))),
    };
    let pts = sites(s, f.as_ref());
    let field = kotani::m_field(f.as_ref(), side, m.sigma, m.t, &pts, m.max_steps, m.tol)?;
    let margin = kotani::herglotz_margin(&field)?;
    let mut t = Table::new(&["site", "row", "col", "re", "im"]);
    for (k, v) in field.values.iter().enumerate() {
        for i in 0..v.nrows() {
            for j in 0..v.ncols() {
                t.row(vec![k.to_string(), i.to_string(), j.to_string(), num(v[(i, j)].re), num(v[(i, j)].im)]);
            }
        }
    }
    let csv = write_table(s, "mfield", &t)?;
    let json = write_sidecar(
        s,
        "mfield",
        json!({ "tol": m.tol, "max_steps": m.max_steps }),
        &json!({ "iterations": field.iterations, "cauchy_residual": field.cauchy_residual, "herglotz_margin": margin }),
    )?;
    done(&[csv, json]);
    Ok(())
}

pub fn kotani_check(s: &Settings) -> Result<(), CliError> {
    let f = family(s)?;
    let k = &s.kotani;
    if !(k.t > 0.0) {
        return Err(CliError::Config("kotani.t must be positive".into()));
    }
    let sp = spec(s, k.n, 4);
    let ids = kotani::ld_identities_check(f.as_ref(), c(k.sigma, k.t), sp)?;
    let key = kotani::key_equation_check(f.as_ref(), k.sigma, k.t, sp)?;
    let pts = sites(s, f.as_ref());
    let minus = kotani::m_field(f.as_ref(), Side::Minus, k.sigma, k.t, &pts, kotani::DEFAULT_MAX_STEPS, kotani::DEFAULT_TOL_M)?;
    let conj = kotani::conjugate_relation_check(f.as_ref(), &minus, kotani::DEFAULT_MAX_STEPS, kotani::DEFAULT_TOL_M)?;
    let mut t = Table::new(&["quantity", "value"]);
    for (name, v) in [
        ("ld", ids.ld),
        ("tau_integral", ids.tau_integral),
        ("q_integral", ids.q_integral),
        ("residual_tau", ids.res_tau),
        ("residual_q", ids.res_q),
        ("key_lhs", key.lhs),
        ("key_lhs_reduced", key.lhs_reduced),
        ("dld_dt", key.dld_dt),
        ("key_residual", key.residual),
        ("conjugate_relation_residual", conj),
    ] {
        t.row(vec![name.to_string(), num(v)]);
    }
    let csv = write_table(s, "kotani-check", &t)?;
    let json = write_sidecar(s, "kotani-check", json!({ "m_tol": kotani::DEFAULT_TOL_M }), &json!({ "identities": ids, "key_equation": key, "conjugate_relation": conj }))?;
    done(&[csv, json]);
    Ok(())
}

pub fn small_t(s: &Settings) -> Result<(), CliError> {
    let f = family(s)?;
    let th = &s.small_t;
    let rep = kotani::small_t_diagnostics(f.as_ref(), th.sigma, &th.t_list, spec(s, th.n, 4))?;
    let mut t = Table::new(&["t", "i_plus", "i_minus", "d_int", "ld_over_t", "dld_dt", "singular_bound", "singular_bound_unscaled"]);
    for r in &rep.rows {
        t.row(vec![num(r.t), num(r.i_plus), num(r.i_minus), num(r.d_int), num(r.ld_over_t), num(r.dld_dt), num(r.singular_bound), num(r.singular_bound_unscaled)]);
    }
    let csv = write_table(s, "small-t", &t)?;
    let json = write_sidecar(s, "small-t", json!({ "gate": kotani::SMALL_T_GATE }), &rep)?;
    done(&[csv, json]);
    Ok(())
}

pub fn bands(s: &Settings) -> Result<(), CliError> {
    let b = &s.bands;
    let rep = if is_strip(s) {
        let (v, base) = potential(s)?;
        let period = base.period().ok_or_else(|| CliError::Config("bands need a periodic potential".into()))?;
        let w = 2.5 + strip_operators::potential_bound(&v, &base)? * 2.0;
        let range = b.range.map(|r| (r[0], r[1])).unwrap_or((-w, w));
        let fam = EnergyBandFamily { potential: v, period };
        periodic_bands::band_scan(&fam, range, BandOptions { grid: b.grid, refine_tol: b.refine_tol, ..BandOptions::default() })?
    } else {
        let fam = ThetaFamily::new(cocycle(s)?)?;
        periodic_bands::band_scan_theta(&fam, b.grid, b.refine_tol)?
    };
    let mut t = Table::new(&["start", "end", "length", "start_edge", "end_edge"]);
    for bd in &rep.bands {
        t.row(vec![num(bd.start), num(bd.end), num(bd.length), format!("{:?}", bd.start_edge), format!("{:?}", bd.end_edge)]);
    }
    let csv = write_table(s, "bands", &t)?;
    let json = write_sidecar(s, "bands", json!({ "tol_unit": periodic_bands::TOL_UNIT, "tol_sep": periodic_bands::TOL_SEP, "refine_tol": b.refine_tol }), &rep)?;
    done(&[csv, json]);
    Ok(())
}

pub fn strip_scan(s: &Settings) -> Result<(), CliError> {
    let (v, base) = potential(s)?;
    let t = strip_tag(s, &v);
    let st = &s.strip_scan;
    let scan = strip_operators::energy_scan(&v, &base, t, (st.range[0], st.range[1]), st.grid, spec(s, st.n, st.samples), st.threshold)?;
    let mut summary = Table::new(&["range_min", "range_max", "zero_measure", "uncertainty", "any_zero_measure", "window_covers_spectrum"]);
    summary.row(vec![
        num(st.range[0]),
        num(st.range[1]),
        num(scan.m_estimate),
        num(scan.m_uncertainty),
        num(scan.m_any_zero),
        scan.window_covers_spectrum.to_string(),
    ]);
    let mut pts = Table::new(&["energy", "top", "ld", "bottom", "width"]);
    for p in &scan.points {
        pts.row(vec![num(p.e), num(p.top), num(p.ld), num(p.bottom), num(p.width)]);
    }
    let csv = write_table(s, "strip-scan", &summary)?;
    let csv2 = write_table(s, "strip-scan-points", &pts)?;
    let json = write_sidecar(
        s,
        "strip-scan",
        json!({ "threshold": st.threshold }),
        &json!({ "zero_measure": scan.m_estimate, "uncertainty": scan.m_uncertainty, "zero_intervals": scan.zero_intervals }),
    )?;
    done(&[csv, csv2, json]);
    Ok(())
}

fn perturbation_table(s: &Settings, a: &Cocycle, eta: f64) -> Result<AlgebraMap, CliError> {
    let p = a.base.period().ok_or_else(|| CliError::Config("perturbations need a periodic base".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok(AlgebraMap::Table((0..p).map(|_| perturbation::random_in_ball(a.d, eta, &mut rng)).collect()))
}

pub fn phi_eps(s: &Settings) -> Result<(), CliError> {
    let a = cocycle(s)?;
    let ph = &s.phi_eps;
    let table = perturbation_table(s, &a, ph.eta)?;
    let pair = PerturbationPair::new(table, AlgebraMap::Constant(linalg::j_matrix(a.d)), ph.epsilon, ph.eta)?;
    let rep = perturbation::phi_epsilon(&a, &pair, ph.nodes, SampleSpec { seed: s.seed, ..SampleSpec::default() })?;
    let mut t = Table::new(&["t", "weight", "ld"]);
    for n in &rep.nodes {
        t.row(vec![num(n.t), num(n.weight), num(n.ld)]);
    }
    let csv = write_table(s, "phi-eps", &t)?;
    let json = write_sidecar(s, "phi-eps", json!({ "nodes": ph.nodes }), &json!({ "phi": rep.value, "centre_ld": rep.centre().ld }))?;
    done(&[csv, json]);
    Ok(())
}

pub fn density_search(s: &Settings) -> Result<(), CliError> {
    let a = cocycle(s)?;
    let ds = &s.density;
    let opts = DensityOptions { delta: ds.delta, eta: ds.eta, epsilon: ds.epsilon, trials: ds.trials, seed: s.seed, ..DensityOptions::default() };
    let r = perturbation::density_search(&a, opts)?;
    let mut t = Table::new(&["symbol", "row", "col", "value"]);
    for (k, m) in r.v.values().iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                t.row(vec![k.to_string(), i.to_string(), j.to_string(), num(m[(i, j)].re)]);
            }
        }
    }
    let csv = write_table(s, "density-search", &t)?;
    let json = write_sidecar(
        s,
        "density-search",
        json!({ "threshold": opts.threshold }),
        &json!({ "ld": r.ld, "v_norm": r.v_norm, "epsilon": r.epsilon, "s": r.s, "t": r.t, "trials_used": r.trials_used, "phi": r.phi }),
    )?;
    done(&[csv, json]);
    Ok(())
}
