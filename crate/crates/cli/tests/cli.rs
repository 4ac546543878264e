use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo/config.toml")
}

fn vaxstance(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaxstance"))
        .arg("--config")
        .arg(fixture_config())
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn dependency_error_exits_3_and_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(vaxstance(tmp.path(), &["ingest"]).status.code(), Some(0));
    let o = vaxstance(tmp.path(), &["users"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("run classify first"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vaxstance"))
        .args(["--config", "does/not/exist.toml", "ingest"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(vaxstance(tmp.path(), &["--stage", "nope", "run-all"]).status.code(), Some(1));
    assert_eq!(vaxstance(tmp.path(), &["--stage", "users", "ingest"]).status.code(), Some(1));
}

#[test]
fn run_all_stops_at_stage_and_then_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vaxstance(tmp.path(), &["--seed", "7", "--stage", "users", "run-all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("users/profiles.csv").is_file());
    assert!(!tmp.path().join("topics").exists());
    let header = std::fs::read_to_string(tmp.path().join("users/summary.csv")).unwrap();
    assert!(header.starts_with("# master_seed=7\n"));

    let again = vaxstance(tmp.path(), &["--seed", "7", "--stage", "users"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(stderr(&again).contains("up to date"), "{}", stderr(&again));
}
