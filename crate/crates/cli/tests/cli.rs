use std::path::Path;
use std::process::{Command, Output};

fn kotani(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kotani"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn csv_field(path: &Path, column: &str) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    row[i].parse().unwrap()
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = kotani(&["verify", "--d", "1", "--seed", "7"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("verify.csv").exists());
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn free_strip_scan_measure() {
    let dir = tempfile::tempdir().unwrap();
    let out = kotani(&["strip-scan", "--d", "1", "--v", "zero", "--range", "-3", "3"], dir.path());
    assert!(out.status.success());
    let m = csv_field(&dir.path().join("strip-scan.csv"), "zero_measure");
    assert!((m - 4.0).abs() <= 0.05, "{m}");
}

#[test]
fn same_seed_same_bytes() {
    for args in [
        vec!["rotation", "--points", "25", "--seed", "11"],
        vec!["strip-scan", "--v", "anderson:3:2", "--grid", "40", "--n", "2000", "--seed", "5"],
        vec!["density-search", "--seed", "4"],
        vec!["bands", "--seed", "9", "--tag", "SHSp", "--grid", "512"],
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(kotani(&args, a.path()).status.success(), "{args:?}");
        assert!(kotani(&args, b.path()).status.success(), "{args:?}");
        let name = format!("{}.csv", args[0]);
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{args:?}");
    }
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[cocycle]\nd = 1\nperiod = \"eight\"\n").unwrap();
    let out = kotani(&["lyapunov", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("period"), "{err}");
    let out = kotani(&["lyapunov", "--d", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\n[cocycle]\nfamily = \"identity\"\nd = 2\n").unwrap();
    let out = kotani(&["lyapunov", "--config", cfg.to_str().unwrap(), "--d", "1"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn exhausted_search_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = kotani(&["density-search", "--family", "identity", "--delta", "1e-6", "--trials", "2"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}
