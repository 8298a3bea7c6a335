use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baselines::{run_full_info_ogd, Flaxman};
use super::config::{ExperimentConfig, PolicySpec};
use super::stats::{mean_stderr, write_summary, SummaryRow};
use crate::envs::{resolve_comparators, ComparatorSearch, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::geometry::{BodySpec, ConvexBody};
use crate::numeric::{dot, norm};
use crate::reductions::{
    run_policy, write_trace_csv, BanditPolicy, ConvexBandit, ConvexBanditConfig, ConvexMode,
    ConvexParameters, LinearBandit, LinearBanditConfig, PolicyDiagnostics, RegretLedger,
    RoundRecord,
};
use crate::rng::{SeedStreams, Stream};

/// Command-line overrides of an [`ExperimentConfig`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub trace: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Error,
}

/// `Σ⟨z_t − u, ĝ_t⟩ ≤ 1/(2η) + 2η(dL/δ)²T` evaluated on a comparator grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgdCheck {
    pub bound: f64,
    pub worst: f64,
    pub comparators: usize,
    pub satisfied: bool,
}

/// Everything recorded about one (policy, environment, horizon, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLedger {
    pub config_hash: String,
    pub policy: String,
    pub algorithm: String,
    pub environment: String,
    pub family: String,
    pub horizon: u64,
    pub seed: u64,
    pub schedule_hash: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_round: Option<u64>,
    pub parameters: serde_json::Value,
    pub ledger: RegretLedger,
    pub diagnostics: PolicyDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ogd_check: Option<OgdCheck>,
    pub violations: u64,
}

impl CellLedger {
    pub fn file_stem(&self) -> String {
        format!(
            "{}__{}__T{}__s{}",
            sanitize(&self.policy),
            sanitize(&self.environment),
            self.horizon,
            self.seed
        )
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub struct CellOutput {
    pub ledger: CellLedger,
    pub trace: Vec<RoundRecord>,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureEntry {
    pub policy: String,
    pub environment: String,
    pub horizon: u64,
    pub seed: u64,
    pub round: Option<u64>,
    pub error: String,
}

pub struct GridOutcome {
    pub config_hash: String,
    pub cells: Vec<CellLedger>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<FailureEntry>,
    pub output: Option<PathBuf>,
}

impl GridOutcome {
    pub fn violations(&self) -> u64 {
        self.cells.iter().map(|c| c.violations).sum()
    }

    /// True iff every cell finished with zero violation counters.
    pub fn success(&self) -> bool {
        self.failures.is_empty() && self.violations() == 0
    }
}

/// Ten comparators in `(1 − α)Z`: nine on the boundary along evenly spaced
/// directions of the first coordinate plane, plus the boundary point that
/// maximizes the left-hand side.
fn ogd_check(
    params: &ConvexParameters,
    body: &ConvexBody,
    diag: &PolicyDiagnostics,
) -> Result<OgdCheck> {
    let d = params.dim;
    let linear = diag.direction_linear_sum.unwrap_or(0.0);
    let gsum = diag.estimate_sum.clone().unwrap_or_else(|| vec![0.0; d]);
    let shrink = 1.0 - params.alpha;
    let mut dirs: Vec<Vec<f64>> = (0..9)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 9.0;
            let mut v = vec![0.0; d];
            v[0] = a.cos();
            if d > 1 {
                v[1] = a.sin();
            } else if a.cos().abs() < 1e-12 {
                v[0] = 1.0;
            }
            v
        })
        .collect();
    let gn = norm(&gsum);
    dirs.push(if gn > 0.0 {
        gsum.iter().map(|g| -g / gn).collect()
    } else {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    });
    let mut worst = f64::NEG_INFINITY;
    // The extreme point in direction −Σĝ is found by projecting far along it.
    for (k, dir) in dirs.iter().enumerate() {
        let u: Vec<f64> = if k == 9 && !matches!(body.shape(), crate::geometry::Shape::Ball { .. })
        {
            let far: Vec<f64> = dir.iter().map(|x| x * 1e6).collect();
            body.project(shrink, &far)?
        } else {
            let r = body.radial_scale(dir)?;
            dir.iter().map(|x| shrink * r * x).collect()
        };
        worst = worst.max(linear - dot(&u, &gsum));
    }
    let bound = params.ogd_bound();
    Ok(OgdCheck {
        bound,
        worst,
        comparators: dirs.len(),
        satisfied: worst <= bound + 1e-6,
    })
}

fn build_body(spec: Option<&BodySpec>) -> Result<Option<ConvexBody>> {
    spec.map(BodySpec::build).transpose()
}

/// Runs a single cell. Hard errors inside the run are recorded in the ledger,
/// not returned.
pub fn run_cell(
    config: &ExperimentConfig,
    config_hash: &str,
    policy_spec: &PolicySpec,
    env_spec: &EnvSpec,
    horizon: u64,
    seed: u64,
    trace: bool,
) -> Result<CellOutput> {
    let env = Environment::generate(env_spec, horizon, seed)?;
    let body = build_body(policy_spec.body())?;
    let streams = SeedStreams::new(seed);
    let mut cmp_rng =
        SeedStreams::salted(seed, env_spec.seed.unwrap_or(0)).stream(Stream::Comparator);
    let comparators = resolve_comparators(
        &env,
        body.as_ref(),
        &config.comparators,
        &ComparatorSearch::default(),
        &mut cmp_rng,
    )?;
    let d = env.dim();
    let lipschitz = env.lipschitz();

    let mut ledger_out = CellLedger {
        config_hash: config_hash.to_string(),
        policy: policy_spec.label(),
        algorithm: policy_spec.algorithm().to_string(),
        environment: env_spec.label(),
        family: env.family().name().to_string(),
        horizon,
        seed,
        schedule_hash: env.schedule_hash().to_string(),
        status: CellStatus::Ok,
        error: None,
        failed_round: None,
        parameters: serde_json::Value::Null,
        ledger: RegretLedger::new(0.0, 0, &[]),
        diagnostics: PolicyDiagnostics::default(),
        ogd_check: None,
        violations: 0,
    };

    let run_bandit = |policy: &mut dyn BanditPolicy, stream: Stream, out: &mut CellLedger| {
        let mut rng = streams.stream(stream);
        match run_policy(policy, &env, &comparators, &mut rng) {
            Ok(l) => out.ledger = l,
            Err(f) => {
                out.status = CellStatus::Error;
                out.error = Some(f.error.to_string());
                out.failed_round = Some(f.round);
                out.ledger = RegretLedger::new(f.learner_loss, f.round.saturating_sub(1), &[]);
            }
        }
        out.diagnostics = policy.diagnostics();
    };

    let trace_records = match policy_spec {
        PolicySpec::LinearBandit {
            body: b,
            barrier_rate,
            ..
        } => {
            let cfg = LinearBanditConfig {
                dim: d,
                horizon,
                lipschitz,
                body: b.clone(),
                barrier_rate: *barrier_rate,
            };
            let mut p = LinearBandit::new(&cfg)?.with_trace(trace);
            ledger_out.parameters = serde_json::to_value(p.parameters())?;
            run_bandit(&mut p, Stream::Policy, &mut ledger_out);
            p.trace().to_vec()
        }
        PolicySpec::ConvexBandit {
            mode,
            body: b,
            delta,
            alpha,
            eta,
            v_cap,
            ..
        } => {
            let cfg = ConvexBanditConfig {
                mode: *mode,
                dim: d,
                horizon,
                lipschitz,
                smoothness: match mode {
                    ConvexMode::SmoothUnconstrained => Some(env.smoothness().ok_or_else(|| {
                        Error::config(format!(
                            "smooth mode needs a smooth environment, {} is not",
                            env_spec.label()
                        ))
                    })?),
                    _ => None,
                },
                body: b.clone(),
                delta: *delta,
                alpha: *alpha,
                eta: *eta,
                v_cap: *v_cap,
            };
            let mut p = ConvexBandit::new(&cfg)?.with_trace(trace);
            let params = p.parameters().clone();
            ledger_out.parameters = serde_json::to_value(&params)?;
            run_bandit(&mut p, Stream::Policy, &mut ledger_out);
            let domain = match &body {
                Some(w) => w.clone(),
                None => ConvexBody::unit_ball(d)?,
            };
            let check = ogd_check(&params, &domain, &ledger_out.diagnostics)?;
            if ledger_out.status == CellStatus::Ok && !check.satisfied {
                ledger_out.violations += 1;
            }
            ledger_out.ogd_check = Some(check);
            p.trace().to_vec()
        }
        PolicySpec::Flaxman { delta, eta, .. } => {
            let mut p =
                Flaxman::new(body.clone(), d, horizon, lipschitz, *delta, *eta)?.with_trace(trace);
            ledger_out.parameters = serde_json::to_value(p.parameters())?;
            run_bandit(&mut p, Stream::Baseline, &mut ledger_out);
            p.trace().to_vec()
        }
        PolicySpec::FullInfoOgd { eta, .. } => {
            match run_full_info_ogd(&env, body.as_ref(), *eta, &comparators) {
                Ok((l, step)) => {
                    ledger_out.ledger = l;
                    ledger_out.parameters = serde_json::json!({ "eta": step });
                }
                Err(e) => {
                    ledger_out.status = CellStatus::Error;
                    ledger_out.error = Some(e.to_string());
                }
            }
            Vec::new()
        }
    };
    ledger_out.violations +=
        ledger_out.diagnostics.violation_count() + ledger_out.ledger.query_violations;
    Ok(CellOutput {
        ledger: ledger_out,
        trace: trace_records,
        dim: d,
    })
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn persist(dir: &Path, out: &CellOutput) -> Result<()> {
    let stem = out.ledger.file_stem();
    let mut json = serde_json::to_vec_pretty(&out.ledger)?;
    json.push(b'\n');
    write_atomic(&dir.join("ledgers").join(format!("{stem}.json")), &json)?;
    if !out.trace.is_empty() {
        let mut buf = Vec::new();
        write_trace_csv(&out.trace, out.dim, &mut buf)?;
        write_atomic(&dir.join("traces").join(format!("{stem}.csv")), &buf)?;
    }
    Ok(())
}

struct CellPlan<'a> {
    policy: &'a PolicySpec,
    env: &'a EnvSpec,
    horizon: u64,
    seed: u64,
}

fn setup_failure(hash: &str, plan: &CellPlan<'_>, error: Error) -> CellOutput {
    CellOutput {
        ledger: CellLedger {
            config_hash: hash.to_string(),
            policy: plan.policy.label(),
            algorithm: plan.policy.algorithm().to_string(),
            environment: plan.env.label(),
            family: plan.env.family.name().to_string(),
            horizon: plan.horizon,
            seed: plan.seed,
            schedule_hash: String::new(),
            status: CellStatus::Error,
            error: Some(error.to_string()),
            failed_round: None,
            parameters: serde_json::Value::Null,
            ledger: RegretLedger::new(0.0, 0, &[]),
            diagnostics: PolicyDiagnostics::default(),
            ogd_check: None,
            violations: 0,
        },
        trace: Vec::new(),
        dim: plan.env.d,
    }
}

/// Runs every (policy, environment, horizon, seed) cell on a worker pool and
/// aggregates the results. With an output directory, each cell's ledger
/// (and trace, if enabled) is written as soon as it finishes, followed by
/// `summary.csv` and, when any cell failed, `errors.json`.
pub fn run_grid(config: &ExperimentConfig, options: &RunOptions) -> Result<GridOutcome> {
    let mut config = config.clone();
    if let Some(seeds) = &options.seeds {
        if seeds.is_empty() {
            return Err(Error::config("no seeds selected"));
        }
        config.seeds = super::config::Seeds::List(seeds.clone());
    }
    config.validate()?;
    let seeds = config.seeds.resolve()?;
    let trace = options.trace.unwrap_or(config.trace);
    let output = options.output.clone().or_else(|| config.output.clone());
    let workers = options
        .workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let hash = config.hash()?;

    let mut plans = Vec::new();
    for policy in &config.policies {
        for env in &config.environments {
            for horizon in config.horizons_for(env) {
                for &seed in &seeds {
                    plans.push(CellPlan {
                        policy,
                        env,
                        horizon,
                        seed,
                    });
                }
            }
        }
    }

    if let Some(dir) = &output {
        fs::create_dir_all(dir)?;
        let mut cfg = serde_json::to_vec_pretty(&config)?;
        cfg.push(b'\n');
        write_atomic(&dir.join("config.json"), &cfg)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<CellLedger>> = pool.install(|| {
        plans
            .par_iter()
            .map(|p| {
                let out = run_cell(&config, &hash, p.policy, p.env, p.horizon, p.seed, trace)
                    .unwrap_or_else(|e| setup_failure(&hash, p, e));
                if let Some(dir) = &output {
                    persist(dir, &out)?;
                }
                Ok(out.ledger)
            })
            .collect()
    });
    let mut cells = Vec::with_capacity(results.len());
    for r in results {
        cells.push(r?);
    }

    let failures: Vec<FailureEntry> = cells
        .iter()
        .filter(|c| c.status == CellStatus::Error)
        .map(|c| FailureEntry {
            policy: c.policy.clone(),
            environment: c.environment.clone(),
            horizon: c.horizon,
            seed: c.seed,
            round: c.failed_round,
            error: c.error.clone().unwrap_or_default(),
        })
        .collect();
    let summary = summarize(&config, &hash, &cells);
    if let Some(dir) = &output {
        let mut buf = Vec::new();
        write_summary(&summary, &mut buf)?;
        write_atomic(&dir.join("summary.csv"), &buf)?;
        let manifest = dir.join("errors.json");
        if failures.is_empty() {
            if manifest.exists() {
                fs::remove_file(&manifest)?;
            }
        } else {
            let mut json = serde_json::to_vec_pretty(&failures)?;
            json.push(b'\n');
            write_atomic(&manifest, &json)?;
        }
    }
    Ok(GridOutcome {
        config_hash: hash,
        cells,
        summary,
        failures,
        output,
    })
}

/// One row per (policy, environment, horizon, comparator norm), in config order.
pub fn summarize(config: &ExperimentConfig, hash: &str, cells: &[CellLedger]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for policy in &config.policies {
        let pl = policy.label();
        for env in &config.environments {
            let el = env.label();
            for horizon in config.horizons_for(env) {
                let group: Vec<&CellLedger> = cells
                    .iter()
                    .filter(|c| c.policy == pl && c.environment == el && c.horizon == horizon)
                    .collect();
                let mut digest = Sha256::new();
                for c in &group {
                    digest.update(c.schedule_hash.as_bytes());
                }
                let schedule_hash = hex::encode(digest.finalize());
                let ok: Vec<&&CellLedger> = group
                    .iter()
                    .filter(|c| c.status == CellStatus::Ok)
                    .collect();
                let errors = (group.len() - ok.len()) as u64;
                let violations: u64 = group.iter().map(|c| c.violations).sum();
                let (learner, _) =
                    mean_stderr(&ok.iter().map(|c| c.ledger.learner_loss).collect::<Vec<_>>());
                for (k, &target) in config.comparators.norms.iter().enumerate() {
                    let entries: Vec<_> = ok
                        .iter()
                        .filter_map(|c| c.ledger.comparators.get(k))
                        .collect();
                    let regrets: Vec<f64> = entries.iter().map(|e| e.regret).collect();
                    let norms: Vec<f64> = entries.iter().map(|e| e.norm).collect();
                    let (mean, se) = mean_stderr(&regrets);
                    rows.push(SummaryRow {
                        policy: pl.clone(),
                        environment: el.clone(),
                        horizon,
                        norm: target,
                        seeds: entries.len() as u64,
                        mean_regret: mean,
                        stderr_regret: se,
                        mean_learner_loss: learner,
                        mean_comparator_norm: mean_stderr(&norms).0,
                        flagged: entries.iter().filter(|e| e.flagged).count() as u64,
                        violations,
                        errors,
                        schedule_hash: schedule_hash.clone(),
                        config_hash: hash.to_string(),
                    });
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
seeds = [0, 1, 2]
horizons = [200]

[comparators]
norms = [0.0, 0.5, 1.0]

[[policies]]
algorithm = "convex_bandit"
mode = "lipschitz_unconstrained"

[[environments]]
family = "linear"
schedule = { kind = "stochastic" }
d = 2
L = 1.0
"#;

    #[test]
    fn three_seeds_three_ledgers_one_summary() {
        let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            output: Some(dir.path().to_path_buf()),
            workers: Some(2),
            ..Default::default()
        };
        let out = run_grid(&cfg, &opts).unwrap();
        assert!(out.success());
        let ledgers = fs::read_dir(dir.path().join("ledgers")).unwrap().count();
        assert_eq!(ledgers, 3);
        assert_eq!(out.summary.len(), 3);
        let first = fs::read(dir.path().join("summary.csv")).unwrap();
        run_grid(&cfg, &opts).unwrap();
        assert_eq!(first, fs::read(dir.path().join("summary.csv")).unwrap());
        for c in &out.cells {
            let l = &c.ledger;
            assert_eq!(l.comparators[0].regret, l.learner_loss);
            assert!(c.ogd_check.as_ref().unwrap().satisfied);
        }
    }

    #[test]
    fn zero_horizon_gives_zero_summary() {
        let cfg =
            ExperimentConfig::from_toml(&CONFIG.replace("horizons = [200]", "horizons = [0]"))
                .unwrap();
        let out = run_grid(&cfg, &RunOptions::default()).unwrap();
        assert!(out.success());
        assert!(out
            .summary
            .iter()
            .all(|r| r.mean_regret == 0.0 && r.stderr_regret == 0.0));
    }
}
