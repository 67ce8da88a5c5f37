use std::path::PathBuf;
use std::process::Command as Proc;

use bishop_discs::cli::{
    resolve, run_command, run_selftest, run_selftest_with, write_outputs, Cli, Command, ExperimentConfig, GridSpec,
    SelftestHooks, OUT_ENV,
};
use bishop_discs::ops::mu_value;
use bishop_discs::C64;
use clap::Parser;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("bishop-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        grid: GridSpec::new(64, 16, 32),
        ..Default::default()
    };
    cfg.selftest.relax = 16.0;
    cfg
}

fn coarse() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        grid: GridSpec::default().halved(),
        ..Default::default()
    };
    cfg.selftest.relax = 4.0;
    cfg
}

fn bin() -> Proc {
    let mut p = Proc::new(env!("CARGO_BIN_EXE_bishop"));
    p.env_remove(OUT_ENV);
    p
}

#[test]
fn corrupted_mu_is_caught() {
    fn wrong(t: C64) -> C64 {
        mu_value(t) * 1.01
    }
    let cfg = coarse();
    let r = run_selftest_with(&cfg, &SelftestHooks { mu: wrong }).unwrap();
    assert!(!r.passed);
    let c = r.find("ops/T(mu) closed form").unwrap();
    assert!(!c.pass && c.value > 1e-3, "{c:?}");
    assert!(!r.find("ops/|mu|=1").unwrap().pass);
}

#[test]
fn halved_grid_passes_with_relaxed_tolerances() {
    let r = run_selftest(&coarse()).unwrap();
    let failed: Vec<_> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    assert!(r.passed, "{failed:?}");
}

#[test]
fn selftest_is_deterministic_per_seed() {
    let cfg = small();
    let a = run_selftest(&cfg).unwrap();
    let b = run_selftest(&cfg).unwrap();
    for (x, y) in a.checks.iter().zip(&b.checks) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.value.to_bits(), y.value.to_bits(), "{}", x.name);
    }
}

#[test]
fn outputs_have_expected_files_and_headers() {
    let mut cfg = small();
    cfg.disc.eps = 0.05;
    let r = run_command(Command::Solve, &cfg).unwrap();
    let dir = scratch("outputs");
    let files = write_outputs(&r, &dir).unwrap();
    assert!(files.contains(&dir.join("report.json")));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "solve");
    assert!(json["checks"].as_array().is_some_and(|c| !c.is_empty()));
    assert_eq!(json["config"]["grid"]["n_boundary"], 64);
    let csv = std::fs::read_to_string(dir.join("disc_0.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "r,theta,re_z,im_z,re_w,im_w");
    assert!(csv.lines().count() > 1);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn out_flag_beats_config_file() {
    let dir = scratch("resolve");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"out": "from-config", "seed": 7}"#).unwrap();
    let cli = Cli::parse_from([
        "bishop",
        "solve",
        "--config",
        path.to_str().unwrap(),
        "--grid",
        "64,16,32",
    ]);
    let (cfg, out) = resolve(&cli).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.grid, GridSpec::new(64, 16, 32));
    if std::env::var_os(OUT_ENV).is_none() {
        assert_eq!(out, PathBuf::from("from-config"));
    }
    let cli = Cli::parse_from(["bishop", "solve", "--config", path.to_str().unwrap(), "--out", "flag"]);
    assert_eq!(resolve(&cli).unwrap().1, PathBuf::from("flag"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn binary_succeeds_and_writes_outputs() {
    let dir = scratch("bin-ok");
    let st = bin()
        .args(["solve", "--grid", "64,16,32", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stdout));
    assert!(String::from_utf8_lossy(&st.stdout).contains("[PASS]"));
    assert!(dir.join("report.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn binary_reports_bad_config_with_code_2() {
    let dir = scratch("bin-bad");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"hypersurface": {"family": "quadric", "sigma": 50.0}}"#).unwrap();
    let st = bin().args(["solve", "--config"]).arg(&path).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("sigma"));

    std::fs::write(&path, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(
        bin()
            .args(["solve", "--config"])
            .arg(&path)
            .output()
            .unwrap()
            .status
            .code(),
        Some(2)
    );
    let missing = bin()
        .args(["solve", "--config"])
        .arg(dir.join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn binary_exits_1_on_failed_check() {
    // the flat hypersurface cannot be filled, so the default coverage floor fails
    let dir = scratch("bin-fail");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("flat.json");
    std::fs::write(&path, r#"{"hypersurface": {"family": "flat"}, "grid": {"n_boundary": 64, "n_radial": 16, "n_angular": 32}, "fill": {"n_family": 3, "n_targets": 200}}"#).unwrap();
    let st = bin()
        .args(["fill", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1), "{}", String::from_utf8_lossy(&st.stderr));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn env_override_sets_output_directory() {
    let dir = scratch("env");
    let st = bin().env(OUT_ENV, &dir).args(["dilate"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(dir.join("dilation.csv").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}
