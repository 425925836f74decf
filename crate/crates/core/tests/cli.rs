use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn opspec(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opspec"))
        .args(args)
        .current_dir(dir)
        .env("OPSPEC_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn with_config(cmd: &str, name: &str, extra: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(name);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    opspec(&args, dir.path())
}

#[test]
fn check_exit_codes() {
    assert_eq!(with_config("check", "canonical_mixed.json", &[]).status.code(), Some(0));
    assert_eq!(with_config("check", "custom_swap.json", &[]).status.code(), Some(0));
    let bad = with_config("check", "non_admissible.json", &[]);
    assert_eq!(bad.status.code(), Some(1));
    let table = String::from_utf8(bad.stdout).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert!(row[3].parse::<f64>().unwrap() > 1e-8);
    assert_eq!(row[4], "not-admissible");
}

#[test]
fn validation_failures_exit_2() {
    for name in ["invalid_non_hermitian.json", "invalid_non_unitary.json", "invalid_syntax.json"] {
        for cmd in ["check", "spectrum", "normality"] {
            let out = with_config(cmd, name, &[]);
            assert_eq!(out.status.code(), Some(2), "{cmd} {name}");
        }
    }
    let msg = String::from_utf8(with_config("check", "invalid_non_hermitian.json", &[]).stderr).unwrap();
    assert!(msg.contains("block 1: A not Hermitian"), "{msg}");
    let msg = String::from_utf8(with_config("check", "invalid_non_unitary.json", &[]).stderr).unwrap();
    assert!(msg.contains("not unitary, residual"), "{msg}");
    let msg = String::from_utf8(with_config("check", "invalid_syntax.json", &[]).stderr).unwrap();
    assert!(msg.contains("line 5"), "{msg}");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(opspec(&["check"], dir.path()).status.code(), Some(2));
    assert_eq!(opspec(&["check", "--config", "missing.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn resource_cap_exit_3() {
    let out = with_config("spectrum", "oversize.json", &["--engine", "discrete"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(with_config("normality", "oversize.json", &[]).status.code(), Some(3));
}

#[test]
fn normality_exit_codes() {
    assert_eq!(with_config("normality", "canonical_mixed.json", &[]).status.code(), Some(0));
    let bad = with_config("normality", "non_admissible.json", &[]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8(bad.stdout).unwrap().contains("not-normal"));
}

#[test]
fn spectrum_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("canonical_mixed.json");
    let cfg = cfg.to_str().unwrap();
    for format in ["csv", "json"] {
        let a = opspec(&["spectrum", "--config", cfg, "--engine", "both", "--format", format], dir.path());
        let b = opspec(&["spectrum", "--config", cfg, "--engine", "both", "--format", format], dir.path());
        assert_eq!(a.status.code(), Some(0));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{format}");
    }
}

#[test]
fn spectrum_to_file_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("periodic_single.json");
    let out = opspec(&["spectrum", "--config", cfg.to_str().unwrap(), "--engine", "both", "--out", "spec.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("spec.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "block,engine,re_lambda,im_lambda,multiplicity,residual");
    let pairs = std::fs::read_to_string(dir.path().join("spec.csv.pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 3);
}

#[test]
fn counterexample_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = opspec(&["counterexample", "--n", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "5");
    assert_eq!(last[3].parse::<f64>().unwrap(), 5.0);
    let plot = std::fs::read_to_string(dir.path().join("partial_sums.dat")).unwrap();
    assert_eq!(plot.lines().count(), 5);
    assert!(String::from_utf8(out.stderr).unwrap().contains("divergent"));

    let one = opspec(&["counterexample", "--n", "1", "--plot", "one.dat"], dir.path());
    assert_eq!(one.status.code(), Some(0));
    let csv = String::from_utf8(one.stdout).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse::<f64>().unwrap(), 1.0);

    let summable = opspec(&["counterexample", "--n", "200", "--alpha-exp", "-2", "--format", "json"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&summable.stdout).unwrap();
    assert_eq!(report["membership"]["divergent"], false);
    assert!(report["norms"]["partial_sum"].as_f64().unwrap() < std::f64::consts::PI.powi(2) / 6.0);
}

#[test]
fn bad_thread_setting_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_opspec"))
        .args(["counterexample"])
        .current_dir(dir.path())
        .env("OPSPEC_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
