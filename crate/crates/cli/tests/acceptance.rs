//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kotani_core::cocycle_engine::{self, BasePoint, BaseSystem, Cocycle, LyapunovMethod, SampleSpec};
use kotani_core::group_core::{self, GroupTag};
use kotani_core::kotani;
use kotani_core::linalg::{self, c, CMat, C64};
use kotani_core::periodic_bands::{self, ThetaFamily};
use kotani_core::perturbation::{self, AlgebraMap, DensityOptions, PerturbationPair};
use kotani_core::rotation_module::{self, DeformedFamily, RotationFamily};
use kotani_core::siegel_geometry::{self, DiscVariant};
use kotani_core::strip_operators::{self, StripPotential};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

const TAGS: [GroupTag; 7] = [
    GroupTag::SpR,
    GroupTag::SpC,
    GroupTag::HSp,
    GroupTag::SHSp,
    GroupTag::Udd,
    GroupTag::SUdd,
    GroupTag::UddCapSpC,
];

fn rel(a: &CMat, b: &CMat) -> f64 {
    linalg::op_norm(&(a - b)) / (1.0 + linalg::op_norm(b))
}

/// Disc-side form of a random element, or `None` for groups without a disc action.
fn disc_element(tag: GroupTag, m: &CMat) -> kotani_core::Result<Option<CMat>> {
    match tag {
        GroupTag::SpR | GroupTag::HSp | GroupTag::SHSp => Ok(Some(group_core::cayley_conjugate(m)?)),
        GroupTag::Udd | GroupTag::SUdd | GroupTag::UddCapSpC => Ok(Some(m.clone())),
        GroupTag::SpC => Ok(None),
    }
}

fn group_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut memb, mut hom, mut act, mut coc, mut phase) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for d in 1..=3 {
        for tag in TAGS {
            let variant = DiscVariant::for_tag(tag.cayley_image());
            for _ in 0..1000 {
                let a = group_core::random_group_element(tag, d, 0.7, &mut rng);
                let b = group_core::random_group_element(tag, d, 0.7, &mut rng);
                memb = memb.max(group_core::membership_residual(&a, tag)?);
                let cab = group_core::cayley_conjugate(&(&a * &b))?;
                hom = hom.max(rel(&cab, &(group_core::cayley_conjugate(&a)? * group_core::cayley_conjugate(&b)?)));
                let (Some(da), Some(db)) = (disc_element(tag, &a)?, disc_element(tag, &b)?) else { continue };
                let dab = &da * &db;
                let z = siegel_geometry::random_disc_point(d, variant, 0.9, &mut rng);
                let bz = siegel_geometry::mobius(&db, &z)?;
                act = act.max(rel(&siegel_geometry::mobius(&dab, &z)?, &siegel_geometry::mobius(&da, &bz)?));
                let rhs = siegel_geometry::tau(&da, &bz)? * siegel_geometry::tau(&db, &z)?;
                coc = coc.max(rel(&siegel_geometry::tau(&dab, &z)?, &rhs));
                if variant == DiscVariant::Symmetric {
                    let u = siegel_geometry::random_shilov_point(d, variant, &mut rng);
                    let au = siegel_geometry::mobius(&da, &u)?;
                    let det_au = linalg::det(&au);
                    let lhs = det_au.arg() - linalg::det(&u).arg();
                    let want = -2.0 * linalg::det(&siegel_geometry::tau(&da, &u)?).arg();
                    phase = phase.max(linalg::wrap_angle(lhs - want).abs()).max((det_au.norm() - 1.0).abs());
                }
            }
        }
    }
    let worst = memb.max(hom).max(act).max(coc).max(phase);
    Ok((
        worst <= 1e-8,
        format!("membership {memb:.1e}, cayley {hom:.1e}, action {act:.1e}, tau {coc:.1e}, det phase {phase:.1e}"),
    ))
}

fn fd_jacobian(m: &CMat, z: &CMat, variant: DiscVariant) -> kotani_core::Result<f64> {
    let d = z.nrows();
    let idx: Vec<(usize, usize)> = match variant {
        DiscVariant::Symmetric => (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect(),
        DiscVariant::General => (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect(),
    };
    let h = 1e-6;
    let mut jac = linalg::zeros(idx.len(), idx.len());
    for (col, &(i, j)) in idx.iter().enumerate() {
        let mut e = linalg::zeros(d, d);
        e[(i, j)] = linalg::ONE;
        if variant == DiscVariant::Symmetric {
            e[(j, i)] = linalg::ONE;
        }
        let dw = (siegel_geometry::mobius(m, &(z + &e * c(h, 0.0)))? - siegel_geometry::mobius(m, &(z - &e * c(h, 0.0)))?) / c(2.0 * h, 0.0);
        for (row, &(a, b)) in idx.iter().enumerate() {
            jac[(row, col)] = dw[(a, b)];
        }
    }
    Ok(linalg::det(&jac).norm_sqr())
}

fn jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0f64;
    for d in 1..=2 {
        for _ in 0..100 {
            let g = group_core::cayley_conjugate(&group_core::random_group_element(GroupTag::SpR, d, 0.5, &mut rng))?;
            let z = siegel_geometry::random_disc_point(d, DiscVariant::Symmetric, 0.7, &mut rng);
            let fd = fd_jacobian(&g, &z, DiscVariant::Symmetric)?;
            let t = linalg::det(&siegel_geometry::tau(&g, &z)?).norm();
            let want = t.powf(-2.0 * (d + 1) as f64);
            worst = worst.max((fd / want - 1.0).abs());
        }
    }
    Ok((worst <= 1e-4, format!("worst relative error {worst:.2e}")))
}

fn free_schrodinger(e: f64) -> kotani_core::Result<Cocycle> {
    Cocycle::constant(rotation_module::transfer_matrix(&linalg::zeros(1, 1), c(e, 0.0)), Some(GroupTag::SpR))
}

fn lyapunov_oracles() -> Outcome {
    let mut hyper = 0f64;
    for e in [2.5f64, 3.0, 4.0] {
        let rep = cocycle_engine::lyapunov_spectrum(&free_schrodinger(e)?, SampleSpec::default(), LyapunovMethod::Auto)?;
        let want = ((e.abs() + (e * e - 4.0).sqrt()) / 2.0).ln();
        hyper = hyper.max((rep.top() - want).abs());
    }
    let mut band = 0f64;
    for e in [0.0, 1.0] {
        let rep = cocycle_engine::lyapunov_spectrum(&free_schrodinger(e)?, SampleSpec { n: 100_000, samples: 1, seed: 0 }, LyapunovMethod::Qr)?;
        band = band.max(rep.top().abs());
    }
    let mut pairing = 0f64;
    for seed in 0..20 {
        let d = 1 + (seed as usize % 3);
        let ex = cocycle_engine::periodic_spectrum(&cocycle_engine::random_periodic(GroupTag::SpR, d, 5, 1.0, seed)?)?;
        pairing = pairing.max((0..d).map(|i| (ex[i] + ex[2 * d - 1 - i]).abs()).fold(0.0, f64::max));
    }
    Ok((
        hyper <= 1e-6 && band <= 1e-3 && pairing <= 1e-8,
        format!("hyperbolic error {hyper:.1e}, in-band |L| {band:.1e}, pairing {pairing:.1e}"),
    ))
}

fn rotation_function() -> Outcome {
    let grid: Vec<C64> = (0..200).map(|i| c(-3.0 + 6.0 * i as f64 / 199.0, 0.0)).collect();
    let mut rise = 0f64;
    let mut cr = 0f64;
    for seed in 0..20u64 {
        let d = 1 + (seed as usize % 2);
        let fam = RotationFamily::new(cocycle_engine::random_periodic(GroupTag::SpR, d, 3, 0.9, seed)?)?;
        let v = rotation_module::rotation_function(&fam, &grid, SampleSpec { n: 400, samples: 1, seed: 0 })?;
        rise = rise.max(v.windows(2).map(|w| w[1].rho - w[0].rho).fold(0.0, f64::max));
        if seed < 5 {
            for sigma in [-1.0, 0.0, 0.7, 2.0] {
                let r = rotation_module::cauchy_riemann_check(&fam, sigma, 0.1, 1e-3, SampleSpec { n: 400, samples: 1, seed: 0 })?;
                cr = cr.max(r.residual);
            }
        }
    }
    let fam = strip_operators::energy_family(&StripPotential::zero(1), &BaseSystem::Periodic { period: 1 }, GroupTag::SpR)?;
    let es: Vec<f64> = (0..41).map(|i| -2.0 + 4.0 * i as f64 / 40.0).collect();
    let targets: Vec<C64> = es.iter().map(|&e| c(e, 0.0)).collect();
    let v = rotation_module::rotation_function(&fam, &targets, SampleSpec { n: 20_000, samples: 1, seed: 0 })?;
    // integrated density of states of the free operator: acos(-E/2)/pi
    let ids = es.iter().zip(&v).map(|(e, z)| (z.rho + (-e / 2.0).acos()).abs()).fold(0.0, f64::max);
    let r = rotation_module::cauchy_riemann_check(&fam, 0.5, 0.1, 1e-3, SampleSpec { n: 20_000, samples: 1, seed: 0 })?;
    cr = cr.max(r.residual);
    Ok((
        rise <= 1e-6 && ids <= 1e-3 && cr <= 5e-3,
        format!("largest rise {rise:.1e}, free IDS error {ids:.1e}, Cauchy-Riemann {cr:.1e}"),
    ))
}

fn kotani_identities() -> Outcome {
    let spec = SampleSpec { n: 2000, samples: 1, seed: 0 };
    let (mut ids, mut key) = (0f64, 0f64);
    for seed in 0..20u64 {
        let d = 1 + (seed as usize % 2);
        let fam = RotationFamily::new(cocycle_engine::random_periodic(GroupTag::SpR, d, 3, 0.8, 100 + seed)?)?;
        for t in [0.05, 0.1, 0.2] {
            let r = kotani::ld_identities_check(&fam, c(0.3, t), spec)?;
            ids = ids.max(r.res_tau).max(r.res_q);
            key = key.max(kotani::key_equation_check(&fam, 0.3, t, spec)?.residual);
        }
    }
    Ok((ids <= 1e-6 && key <= 5e-3, format!("identity residual {ids:.1e}, key equation residual {key:.1e}")))
}

fn small_t_trend() -> Outcome {
    let t_list = [0.2, 0.1, 0.05, 0.02];
    let spec = SampleSpec { n: 2000, samples: 1, seed: 0 };
    let free = RotationFamily::new(free_schrodinger(1.0)?)?;
    let adj = strip_operators::adjacency_from_s(&[vec![1], vec![2]])?;
    let v = StripPotential::diagonal_from_s(&adj, vec![vec![0.0, 0.0]])?;
    let strip = RotationFamily::new(strip_operators::transfer_cocycle(&v, c(0.0, 0.0), &BaseSystem::Periodic { period: 1 }, GroupTag::SpR)?)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, fam) in [("free", &free), ("strip", &strip)] {
        let rep = kotani::small_t_diagnostics(fam, 0.0, &t_list, spec)?;
        pass &= !rep.partial && rep.bounded && rep.d_decay >= 10.0;
        parts.push(format!("{name}: D decay {:.1}x, bounded {}", rep.d_decay, rep.bounded));
    }
    Ok((pass, parts.join("; ")))
}

fn trace_gap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut diag) = (0f64, 0f64);
    for k in 0..10_000 {
        let d = 1 + k % 3;
        let variant = if rng.gen_bool(0.5) { DiscVariant::Symmetric } else { DiscVariant::General };
        let x = siegel_geometry::random_disc_point(d, variant, 0.999, &mut rng);
        let y = siegel_geometry::random_disc_point(d, variant, 0.999, &mut rng);
        worst = worst.max(-kotani::trace_gap(&x, &y)?);
        diag = diag.max(kotani::trace_gap(&x, &x)?.abs());
    }
    Ok((worst <= 1e-12 && diag <= 1e-12, format!("most negative gap {:.1e}, |gap(X, X)| {diag:.1e}", -worst)))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn band_bound() -> Outcome {
    let ns = [4usize, 8, 16, 32];
    let mut ratio = 0f64;
    let mut parts = Vec::new();
    let mut pass = true;
    for d in 1..=2 {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let mut shown = Vec::new();
        for &n in &ns {
            let mut best = 0f64;
            let (mut kept, mut seed) = (0, 0u64);
            while kept < 10 {
                seed += 1;
                let a = cocycle_engine::random_periodic(GroupTag::SHSp, d, n, 1.0, 1000 * n as u64 + seed)?;
                let rep = periodic_bands::band_scan_theta(&ThetaFamily::new(a)?, 4096, 1e-10)?;
                if !periodic_bands::is_generic(&rep, 1e-6) {
                    continue;
                }
                kept += 1;
                best = best.max(rep.max_length);
                ratio = ratio.max(rep.max_length / rep.bound);
            }
            shown.push(format!("{best:.2e}"));
            // without any band there is no length to regress on
            if best > 0.0 {
                xs.push((n as f64).ln());
                ys.push(best.ln());
            }
        }
        let s = if xs.len() >= 2 { slope(&xs, &ys) } else { f64::NAN };
        pass &= s <= -0.9;
        parts.push(format!("d = {d}: max lengths [{}], slope {s:.2}", shown.join(", ")));
    }
    pass &= ratio <= 1.05;
    Ok((pass, format!("largest length / (2 pi / n) {ratio:.3}; {}", parts.join(", "))))
}

fn reconstruction() -> Outcome {
    let a0 = rotation_module::transfer_matrix(&linalg::from_rows(&[&[0.3]]), c(0.5, 0.0));
    let a1 = rotation_module::transfer_matrix(&linalg::from_rows(&[&[-1.1]]), c(0.5, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // m^- at a point reads the future of the word
    let word: Vec<usize> = (0..400).map(|_| rng.gen_range(0..2)).collect();
    let table = [a0.clone(), a1.clone()];
    let cocycle = Cocycle::from_fn(BaseSystem::FiniteShift { weights: vec![0.5, 0.5] }, 1, Some(GroupTag::SpR), move |x| {
        Ok(table[x.symbol().expect("word point")].clone())
    })?;
    let fam = RotationFamily::new(cocycle)?;
    let start = BasePoint::Word { symbols: Arc::new(word.clone()), pos: 100 };
    let rec = kotani::reconstruct_generators(kotani::m_minus_oracle(&fam), &[a0, a1], fam.base(), &start, 20)?;
    let exact = rec.indices[..] == word[100..120];
    Ok((exact, format!("20 steps exact: {exact}, worst nearest/second margin {:.1e}", rec.worst_margin)))
}

fn perturbation_suite() -> Outcome {
    let mut found = 0;
    let mut worst_norm = 0f64;
    let mut worst_ld = f64::INFINITY;
    let mut elliptic = 0;
    for seed in 0..10u64 {
        let a = cocycle_engine::random_periodic(GroupTag::SpR, 1, 8, 1.0, 500 + seed)?;
        if cocycle_engine::lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto)?.ld() <= 1e-8 {
            elliptic += 1;
        }
        if let Ok(r) = perturbation::density_search(&a, DensityOptions { seed, ..DensityOptions::default() }) {
            let ld = cocycle_engine::lyapunov_spectrum(&perturbation::apply_perturbation(&a, &r.v)?, SampleSpec::default(), LyapunovMethod::Auto)?.ld();
            if r.v_norm < 0.5 && ld > 0.0 {
                found += 1;
            }
            worst_norm = worst_norm.max(r.v_norm);
            worst_ld = worst_ld.min(ld);
        }
    }
    // the same search on draws conditioned on L^d(A) = 0
    let (mut zero_found, mut zero_drawn, mut seed) = (0, 0, 0u64);
    while zero_drawn < 10 {
        seed += 1;
        let a = cocycle_engine::random_periodic(GroupTag::SpR, 1, 8, 0.5, 700 + seed)?;
        if cocycle_engine::lyapunov_spectrum(&a, SampleSpec::default(), LyapunovMethod::Auto)?.ld() > 1e-8 {
            continue;
        }
        zero_drawn += 1;
        if let Ok(r) = perturbation::density_search(&a, DensityOptions { seed, ..DensityOptions::default() }) {
            let ld = cocycle_engine::lyapunov_spectrum(&perturbation::apply_perturbation(&a, &r.v)?, SampleSpec::default(), LyapunovMethod::Auto)?.ld();
            if r.v_norm < 0.5 && ld > 0.0 {
                zero_found += 1;
            }
            worst_norm = worst_norm.max(r.v_norm);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut phi_bad = 0;
    let mut phi_checked = 0;
    for seed in 0..10u64 {
        let a = cocycle_engine::random_periodic(GroupTag::SpR, 1, 4, 1.0, 600 + seed)?;
        let table = (0..4).map(|_| perturbation::random_in_ball(1, perturbation::DEFAULT_ETA, &mut rng)).collect();
        let pair = PerturbationPair::new(AlgebraMap::Table(table), AlgebraMap::Constant(linalg::j_matrix(1)), 0.2, perturbation::DEFAULT_ETA)?;
        let rep = perturbation::phi_epsilon(&a, &pair, perturbation::DEFAULT_NODES, SampleSpec::default())?;
        if rep.centre().ld > 0.0 {
            phi_checked += 1;
            if rep.value <= 0.0 {
                phi_bad += 1;
            }
        }
    }
    let mut margin = f64::INFINITY;
    for k in 0..100 {
        let a = perturbation::random_in_ball(1 + k % 2, perturbation::DEFAULT_ETA, &mut rng);
        let d = a.nrows() / 2;
        let pair = PerturbationPair::new(AlgebraMap::Constant(a), AlgebraMap::Constant(linalg::j_matrix(d)), 0.2, perturbation::DEFAULT_ETA)?;
        margin = margin.min(perturbation::contraction_condition(&pair, c(0.0, 2f64.sqrt() - 1.0), 30, k as u64)?.margin);
    }
    Ok((
        found == 10 && zero_found == 10 && phi_bad == 0 && margin > 0.0,
        format!(
            "density search {found}/10 ({elliptic} starting from L^d = 0), {zero_found}/10 on draws with L^d = 0 (largest |v| {worst_norm:.3}, smallest L^d {worst_ld:.1e}); Phi positive on {}/{phi_checked} positive centres; contraction margin {margin:.2e}",
            phi_checked - phi_bad
        ),
    ))
}

fn kotani_bin(args: &[&str], out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_kotani")).args(args).arg("--out").arg(out).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&o.stderr).into_owned())
    }
}

fn zero_set_measure() -> Outcome {
    let dir = std::env::temp_dir().join(format!("kotani-acceptance-{}", std::process::id()));
    let (a, b, f) = (dir.join("a"), dir.join("b"), dir.join("free"));
    for p in [&a, &b, &f] {
        std::fs::create_dir_all(p)?;
    }
    kotani_bin(&["strip-scan", "--v", "zero", "--range", "-3", "3"], &f)?;
    let text = std::fs::read_to_string(f.join("strip-scan.csv"))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = header.iter().position(|h| *h == "zero_measure").ok_or("zero_measure column missing")?;
    let m: f64 = row[col].parse()?;
    let args = ["strip-scan", "--v", "anderson:1.5:4", "--seed", "42", "--grid", "120", "--n", "2000"];
    kotani_bin(&args, &a)?;
    kotani_bin(&args, &b)?;
    let mut same = true;
    for name in ["strip-scan.csv", "strip-scan-points.csv"] {
        same &= std::fs::read(a.join(name))? == std::fs::read(b.join(name))?;
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(((m - 4.0).abs() <= 0.05 && same, format!("free measure {m:.4}, byte-identical reruns {same}")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("group and geometry identities", Duration::from_secs(10), group_geometry),
        ("Jacobian of the disc action", Duration::from_secs(30), jacobian),
        ("Lyapunov oracles", Duration::from_secs(60), lyapunov_oracles),
        ("rotation function", Duration::from_secs(300), rotation_function),
        ("L^d identities and key equation", Duration::from_secs(300), kotani_identities),
        ("small-t trend of m-functions", Duration::from_secs(120), small_t_trend),
        ("trace inequality", Duration::from_secs(600), trace_gap),
        ("band length bound", Duration::from_secs(600), band_bound),
        ("reconstruction from m-", Duration::from_secs(600), reconstruction),
        ("perturbation", Duration::from_secs(600), perturbation_suite),
        ("zero-set measure and determinism", Duration::from_secs(600), zero_set_measure),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = run();
        let took = start.elapsed();
        let (pass, detail) = match res {
            Ok((p, d)) => (p && took <= *limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
