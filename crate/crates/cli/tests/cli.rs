use std::path::Path;
use std::process::{Command, Output};

use casbi_cli::ExperimentConfig;

fn casbi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casbi"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn oracle_prints_case_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = casbi(&["oracle", "--k", "1", "--theta-min", "100", "--theta-max", "1000", "--theta", "550"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let cg: f64 = text
        .lines()
        .find(|l| l.starts_with("CG,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((cg - 1100.0 * 10f64.ln() / 1800.0).abs() < 1e-12);
    assert!(text.contains("tilted_cdf,"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(casbi(&["--preset", "nonexistent", "diagnose"], dir.path()).status.code(), Some(2));
    assert_eq!(casbi(&["--config", "missing.toml", "diagnose"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nbogus = true\n").unwrap();
    assert_eq!(casbi(&["--config", "bad.toml", "diagnose"], dir.path()).status.code(), Some(2));
    let out = casbi(&["--preset", "gamma", "--epsilon", "-1", "abc"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("abc.epsilon"));
}

#[test]
fn empty_posterior_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = casbi(&["--preset", "gaussian-toy", "--epsilon", "1e-9", "--budget", "200", "abc"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_run_writes_headed_outputs_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("gaussian-toy").unwrap();
    cfg.abc.budget = 5000;
    cfg.abc.epsilon = 0.2;
    cfg.seed = 3;
    std::fs::write(dir.path().join("toy.toml"), cfg.to_toml().unwrap()).unwrap();

    let out = casbi(&["--config", "toy.toml", "--out", "run", "--workers", "2", "abc"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = format!("# casbi v0.1.0 config={} seed=3", cfg.hash());
    for name in ["posterior.csv", "posterior_stats.csv", "abc_report.csv"] {
        let text = std::fs::read_to_string(dir.path().join("run").join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{name}");
    }

    let out = casbi(&["metrics", "run/posterior.csv", "run/posterior.csv", "--lengthscale", "0.5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mmd: f64 = text
        .lines()
        .find(|l| l.starts_with("mmd2"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(mmd.abs() < 1e-12, "{text}");
}

#[test]
fn mis_flag_writes_one_sample_file_per_component() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("gamma").unwrap();
    cfg.sample.n = 500;
    cfg.sample.n_mc = 5000;
    cfg.sample.simulate = false;
    std::fs::write(dir.path().join("g.toml"), cfg.to_toml().unwrap()).unwrap();
    let out = casbi(&["--config", "g.toml", "--mis", "sample"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for j in 0..4 {
        assert!(dir.path().join("out").join(format!("samples_c{j}.csv")).exists());
    }
    assert!(dir.path().join("out/cost_report.csv").exists());
}
