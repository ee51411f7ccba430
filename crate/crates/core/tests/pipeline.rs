use merge_guide::runner::sweep::{prepare_artifacts, ArtifactStore};
use merge_guide::runner::{front_csv, render_report, run_sweep, ExperimentConfig, Method};
use merge_guide::Error;
use sha2::{Digest, Sha256};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Default configuration restricted to one dominance value, to keep the
/// debug-build runtime short.
fn small() -> ExperimentConfig {
    ExperimentConfig {
        beta_candidates: vec![0.8],
        alpha_candidates: vec![0.3],
        gamma_candidates: vec![3.0],
        ..Default::default()
    }
}

#[test]
fn default_sweep_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(dir.path(), true);
    let config = ExperimentConfig::default();
    let result = run_sweep(&config, Some(&store)).unwrap();
    let csv = front_csv(&result.fronts).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 11);
    assert_eq!(hex(&Sha256::digest(csv.as_bytes())), "0b346bf51f1c18faf33e44a0bc2ac48bbed417919d47d35bd5e050202e20b1b2");
    assert_eq!(result.selections[0].beta, 0.8);
    assert_eq!(result.selections[0].alpha, 0.3);
    for f in &result.fronts {
        assert_eq!(f.len(), 11);
    }

    // reloading every checkpoint reproduces the run byte for byte
    let again = run_sweep(&config, Some(&ArtifactStore::new(dir.path(), false))).unwrap();
    assert_eq!(front_csv(&again.fronts).unwrap(), csv);
    assert_eq!(render_report(&again), render_report(&result));
}

#[test]
fn in_memory_runs_are_deterministic() {
    let a = run_sweep(&small(), None).unwrap();
    let b = run_sweep(&small(), None).unwrap();
    assert_eq!(front_csv(&a.fronts).unwrap(), front_csv(&b.fronts).unwrap());
    assert_eq!(render_report(&a), render_report(&b));
}

#[test]
fn unit_dominance_without_extrapolation_is_rewarded_soup() {
    let config = ExperimentConfig {
        beta_candidates: vec![1.0],
        alpha_candidates: vec![0.0],
        gamma_candidates: vec![1.0],
        methods: vec![Method::RewardedSoup, Method::BoneSoup],
        ..Default::default()
    };
    let r = run_sweep(&config, None).unwrap();
    let rs = r.front(Method::RewardedSoup, 0).unwrap();
    let bs = r.front(Method::BoneSoup, 0).unwrap();
    assert_eq!(rs.rewards(), bs.rewards());
}

#[test]
fn missing_checkpoint_is_an_error_when_training_is_off() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(dir.path(), false);
    match prepare_artifacts(&small(), 0, Some(&store)) {
        Err(Error::MissingArtifact(_)) => {}
        other => panic!("expected a missing artifact, got {other:?}"),
    }
}

#[test]
fn stale_checkpoint_is_refused_when_training_is_off() {
    let dir = tempfile::tempdir().unwrap();
    prepare_artifacts(&small(), 0, Some(&ArtifactStore::new(dir.path(), true))).unwrap();
    let changed = ExperimentConfig { rl_episodes: 1000, ..small() };
    assert!(matches!(
        prepare_artifacts(&changed, 0, Some(&ArtifactStore::new(dir.path(), false))),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn shipped_config_is_the_default() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ab-conflict.conf");
    let config = ExperimentConfig::load(&path).unwrap();
    assert_eq!(config.canonical(), ExperimentConfig::default().canonical());
    assert_eq!(config.digest(), "d8fba4da85e3951e85ff78eed6fb9b57b180d6d39e9c19d9715411417eb88054");
}
