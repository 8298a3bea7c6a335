use std::path::PathBuf;

use cabo::harness::{compare_baseline, run_grid, ExperimentConfig, RunOptions, SummaryRow};

fn baseline_config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.toml");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.output = None;
    cfg
}

fn pick(rows: &[SummaryRow], policy: &str, env: &str, norm: f64) -> Vec<SummaryRow> {
    rows.iter()
        .filter(|r| r.policy == policy && r.environment == env && r.norm == norm)
        .cloned()
        .collect()
}

#[test]
fn adaptive_policy_wins_at_the_origin() {
    let mut cfg = baseline_config();
    cfg.environments.retain(|e| e.label() == "quadratic-origin");
    let out = run_grid(&cfg, &RunOptions::default()).unwrap();
    assert!(out.success());
    let a = pick(
        &out.summary,
        "convex_bandit-smooth_unconstrained",
        "quadratic-origin",
        0.0,
    );
    let b = pick(&out.summary, "flaxman", "quadratic-origin", 0.0);
    let rows = compare_baseline(&a, &b).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r.horizon, 1 << 14);
    assert!(r.a_wins, "{r:?}");
    // The fixed exploration radius costs the baseline about δ² per round.
    let delta = (1u64 << 14) as f64;
    let delta = delta.powf(-0.25);
    assert!(
        (r.mean_b - delta * delta * 16384.0).abs() < 0.05 * r.mean_b,
        "{r:?}"
    );
    assert!(r.mean_a.abs() < 1.0, "{r:?}");
}

#[test]
fn identical_summaries_tie() {
    let mut cfg = baseline_config();
    cfg.environments.truncate(1);
    cfg.horizons = Some(vec![2048]);
    cfg.seeds = cabo::harness::Seeds::Range("0..5".into());
    let out = run_grid(&cfg, &RunOptions::default()).unwrap();
    let a: Vec<SummaryRow> = out
        .summary
        .iter()
        .filter(|r| r.policy == "flaxman")
        .cloned()
        .collect();
    let rows = compare_baseline(&a, &a).unwrap();
    for r in rows.iter().filter(|r| r.mean_a != 0.0) {
        assert_eq!(r.ratio, 1.0);
        assert!(!r.a_wins);
    }
}
