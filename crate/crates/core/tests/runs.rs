use std::path::Path;

use pgpo::distill::ReActRecord;
use pgpo::env::{Env, EnvKind};
use pgpo::harness::{read_metrics_csv, run, RunConfig};
use pgpo::trajectory::{replay, PlanMode, Trajectory, PLAN_PREFIX};
use pgpo::Error;

fn config(dir: &Path, env: EnvKind) -> RunConfig {
    RunConfig {
        env,
        seed: 2,
        iterations: 2,
        mc_samples: 3,
        out_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

const ARTIFACTS: [&str; 7] =
    ["metrics.csv", "losses.csv", "dp.jsonl", "df.jsonl", "skips.jsonl", "trajectories.jsonl", "sft.jsonl"];

#[test]
fn identical_configs_give_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&config(a.path(), EnvKind::Shop)).unwrap();
    run(&config(b.path(), EnvKind::Shop)).unwrap();
    for name in ARTIFACTS {
        let read = |d: &Path| std::fs::read(d.join(name)).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{name} differs");
    }
}

#[test]
fn run_artifacts_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), EnvKind::Household);
    let summary = run(&cfg).unwrap();

    let rows = read_metrics_csv(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1 + cfg.iterations as usize);
    assert_eq!(rows, summary.rows);
    assert_eq!((rows[0].wins, rows[0].losses, rows[0].ties), (0, 0, 0));
    let experts = std::fs::read_to_string(dir.path().join("sft.jsonl")).unwrap().lines().count();
    for r in &rows[1..] {
        assert_eq!(r.wins + r.losses + r.ties, experts);
        assert_eq!(r.plan_mode, PlanMode::Pcode);
    }

    let text = std::fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap();
    let ts: Vec<Trajectory> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let report = replay(&Env::bundled(), &ts);
    assert!(report.trajectories > 0);
    assert!(report.mismatches.is_empty(), "{:?}", report.mismatches);

    let sft = std::fs::read_to_string(dir.path().join("sft.jsonl")).unwrap();
    for line in sft.lines() {
        let record: ReActRecord = serde_json::from_str(line).unwrap();
        assert!(record.rounds()[0].thought.starts_with(PLAN_PREFIX));
    }

    let losses = &summary.sft.epoch_losses;
    assert_eq!(losses.len(), cfg.sft_epochs as usize);
    assert!(losses.iter().all(|&l| l < summary.sft.initial_loss / 2.0), "{losses:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), EnvKind::Craft);
    cfg.expert_data = Some(dir.path().join("missing.jsonl"));
    assert!(matches!(run(&cfg), Err(Error::MissingExpertData(_))));

    let mut cfg = config(dir.path(), EnvKind::Craft);
    cfg.use_nl_plan = true;
    assert!(matches!(run(&cfg), Err(Error::Config(_))));
}

#[test]
fn example_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
}
