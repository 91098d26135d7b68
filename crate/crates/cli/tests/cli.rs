//! End-to-end runs of the `holovr` binary.

use std::path::Path;
use std::process::Command;

fn holovr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holovr"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(
        &p,
        "seed = 4\n\n[surface]\nnx = 6\nny = 6\n\n[mobility]\nticks = 3\n\n[sweeps]\nseeds = 2\ne2e_seeds = 1\nsnr_db = [0.0]\n",
    )
    .unwrap();
    p
}

#[test]
fn e2e_run_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let res = holovr()
        .args(["e2e", "--config"])
        .arg(&cfg)
        .args(["--seed", "11", "--out"])
        .arg(&out)
        .env("HOLOVR_WORKERS", "2")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(res.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&res.stderr));
    assert!(stdout.contains("audit e2e_delay_recompute"));
    assert!(!stdout.contains("FAIL"));
    assert!(out.join("e2e_ticks.csv").exists());
    assert!(out.join("plot_e2e.py").exists());
}

#[test]
fn seed_flag_changes_output_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let st = holovr()
            .arg("beamform")
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(st.success());
        std::fs::read(out.join("beamform_states.csv")).unwrap()
    };
    let a = run("1", "a");
    assert_eq!(a, run("1", "b"));
    assert_ne!(a, run("2", "c"));
}

#[test]
fn bad_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[channel]\nsubbands = 0\n").unwrap();
    let res = holovr().args(["homo", "--config"]).arg(&p).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
}

#[test]
fn bad_worker_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let res = holovr().args(["homo", "--out"]).arg(dir.path()).env("HOLOVR_WORKERS", "many").output().unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let res = holovr().arg("fig7").output().unwrap();
    assert!(!res.status.success());
}
