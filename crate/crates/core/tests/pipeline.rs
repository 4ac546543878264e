use std::fs;
use std::path::{Path, PathBuf};

use vaxstance::pipeline::manifest::Manifest;
use vaxstance::pipeline::{tree_hash, Pipeline, PipelineConfig, PipelineError, Stage, StageOutcome};

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo/config.toml")
}

fn pipeline_in(out: &Path, edit: impl FnOnce(&mut PipelineConfig)) -> Pipeline {
    let mut cfg = PipelineConfig::from_file(&fixture_config()).unwrap();
    cfg.out_dir = out.to_path_buf();
    edit(&mut cfg);
    Pipeline::new(cfg).unwrap()
}

fn ran(outcomes: &[(Stage, StageOutcome)]) -> Vec<Stage> {
    outcomes.iter().filter(|(_, o)| matches!(o, StageOutcome::Ran { .. })).map(|(s, _)| *s).collect()
}

#[test]
fn missing_upstream_stage_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = pipeline_in(tmp.path(), |_| {});
    p.run_stage(Stage::Ingest, false).unwrap();
    let err = p.run_stage(Stage::Users, false).unwrap_err();
    match &err {
        PipelineError::MissingDependency { stage, missing } => {
            assert_eq!(stage, "users");
            assert_eq!(missing, &vec!["classify".to_string()]);
        }
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("run classify first"));
    assert!(!tmp.path().join("users").exists());
}

#[test]
fn changing_tau_recomputes_users_and_downstream_only() {
    let tmp = tempfile::tempdir().unwrap();
    let first = ran(&pipeline_in(tmp.path(), |_| {}).run_all(false).unwrap());
    assert_eq!(first, Stage::ALL.to_vec());

    let second = pipeline_in(tmp.path(), |c| c.users.tau = 0.6).run_all(false).unwrap();
    assert_eq!(ran(&second), vec![Stage::Users, Stage::Topics, Stage::Changes, Stage::Neighbors, Stage::Report]);

    let manifest = Manifest::open(tmp.path()).unwrap();
    assert_eq!(manifest.entries().len(), Stage::ALL.len() + 5);
    let users = manifest.latest("users").unwrap();
    assert_eq!(users.master_seed, 20210401);
    assert!(users.outputs.contains_key("users/profiles.json"));
}

#[test]
fn force_reruns_and_damaged_outputs_are_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    pipeline_in(tmp.path(), |_| {}).run_all(false).unwrap();
    let before = tree_hash(tmp.path()).unwrap();

    fs::remove_file(tmp.path().join("changes/groups.csv")).unwrap();
    let outcomes = pipeline_in(tmp.path(), |_| {}).run_all(false).unwrap();
    assert_eq!(ran(&outcomes), vec![Stage::Changes]);
    assert_eq!(tree_hash(tmp.path()).unwrap(), before);

    let forced = pipeline_in(tmp.path(), |_| {}).run_all(true).unwrap();
    assert_eq!(ran(&forced).len(), Stage::ALL.len());
    assert_eq!(tree_hash(tmp.path()).unwrap(), before);
}

#[test]
fn master_seed_is_recorded_in_outputs_and_changes_them() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    pipeline_in(&a, |_| {}).run_all(false).unwrap();
    pipeline_in(&b, |c| c.master_seed = 7).run_all(false).unwrap();

    let csv = fs::read_to_string(a.join("users/profiles.csv")).unwrap();
    assert!(csv.starts_with("# master_seed=20210401\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.join("changes/summary.json")).unwrap()).unwrap();
    assert_eq!(json["master_seed"], 7);
    assert!(json["data"].is_object());
    assert_ne!(tree_hash(&a).unwrap(), tree_hash(&b).unwrap());
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    let dir = fixture_config().parent().unwrap().to_path_buf();
    let base = fs::read_to_string(fixture_config()).unwrap();

    let unknown = base.replace("[users]", "[users]\nthreshold = 3");
    let err = PipelineConfig::from_toml_str(&unknown, &dir).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    let missing = base.replace("following.csv", "no-such-file.csv");
    let cfg = PipelineConfig::from_toml_str(&missing, &dir).unwrap();
    let err = Pipeline::new(cfg).err().unwrap();
    assert!(matches!(err, PipelineError::Validation(ref m) if m.contains("following")), "{err}");

    let bad_tau = base.replace("tau = 0.7", "tau = 1.5");
    let cfg = PipelineConfig::from_toml_str(&bad_tau, &dir).unwrap();
    assert_eq!(Pipeline::new(cfg).err().unwrap().exit_code(), 1);
}
