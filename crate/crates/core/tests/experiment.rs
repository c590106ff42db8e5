use std::path::Path;

use srcpo::srcpo::{run_practical, run_tabular, Experiment, ExperimentConfig, Mode, RunError};

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_file(&path).unwrap()
}

#[test]
fn shipped_configs_are_consistent() {
    for name in [
        "quickstart.cfg",
        "practical.cfg",
        "two-hazard-grid.cfg",
        "random-sdac.cfg",
        "hazard-crpo.cfg",
    ] {
        config(name).check().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn practical_mode_lands_near_the_tabular_answer() {
    let tabular = run_tabular(config("quickstart.cfg")).unwrap().summary;
    let practical = run_practical(config("practical.cfg")).unwrap().summary;
    let d = practical.thresholds[0];
    assert!(practical.j_c[0] <= 1.1 * d, "J_C {}", practical.j_c[0]);
    assert!(
        practical.j_r >= 0.9 * tabular.j_r,
        "J_R {} vs {}",
        practical.j_r,
        tabular.j_r
    );
}

#[test]
fn checkpoint_files_resume_a_practical_run() {
    let mut cfg: ExperimentConfig = "env = hazard-chain(5)\nmode = practical\nepisodes = 3\nupdates = 4\nepochs = 6"
        .parse()
        .unwrap();
    cfg.seed = 21;
    let mut whole = Experiment::new(cfg.clone()).unwrap();
    whole.run(|_| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    let mut first = Experiment::new(ExperimentConfig {
        epochs: 3,
        ..cfg.clone()
    })
    .unwrap();
    first.run(|_| {}).unwrap();
    first.save_checkpoint(&path).unwrap();

    let mut resumed = Experiment::new(cfg.clone()).unwrap();
    resumed.load_checkpoint(&path).unwrap();
    assert_eq!(resumed.state().epoch, 3);
    resumed.run(|_| {}).unwrap();
    assert_eq!(resumed.checkpoint_bytes().unwrap(), whole.checkpoint_bytes().unwrap());

    let mut other = Experiment::new(ExperimentConfig {
        mode: Mode::Tabular,
        ..cfg
    })
    .unwrap();
    assert!(matches!(other.load_checkpoint(&path), Err(RunError::Checkpoint(_))));
}

#[test]
fn metrics_have_one_row_per_epoch() {
    let mut cfg = config("quickstart.cfg");
    cfg.epochs = 25;
    let out = run_tabular(cfg).unwrap();
    assert_eq!(out.metrics.len(), 25);
    assert!(out.metrics.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
}
