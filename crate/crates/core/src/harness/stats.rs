//! Cross-seed summaries, scaling fits and baseline comparisons.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard error of the mean (sample standard deviation over √n).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = crate::numeric::sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = crate::numeric::sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One line of the summary CSV: one (policy, environment, horizon, norm) cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub environment: String,
    pub horizon: u64,
    pub norm: f64,
    pub seeds: u64,
    pub mean_regret: f64,
    pub stderr_regret: f64,
    pub mean_learner_loss: f64,
    pub mean_comparator_norm: f64,
    pub flagged: u64,
    pub violations: u64,
    pub errors: u64,
    /// Digest of the per-seed schedule hashes, in seed order.
    pub schedule_hash: String,
    pub config_hash: String,
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "policy",
            "environment",
            "horizon",
            "norm",
            "seeds",
            "mean_regret",
            "stderr_regret",
            "mean_learner_loss",
            "mean_comparator_norm",
            "flagged",
            "violations",
            "errors",
            "schedule_hash",
            "config_hash",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "T")]
    Horizon,
    #[serde(rename = "norm")]
    Norm,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" => Ok(Axis::Horizon),
            "norm" => Ok(Axis::Norm),
            _ => Err(Error::arg(format!("axis must be T or norm, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    InsufficientPoints,
    NonpositiveRegret,
    Degenerate,
}

/// Least-squares fit along one axis for one (policy, environment) series.
/// On the `T` axis `slope` is the log-log exponent and `intercept` the log
/// prefactor; on the norm axis both are in regret units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub policy: String,
    pub environment: String,
    pub axis: Axis,
    /// The norm (for the T axis) or horizon (for the norm axis) held fixed.
    pub held: f64,
    pub points: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub status: FitStatus,
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, R²)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = crate::numeric::sum(x) / n;
    let my = crate::numeric::sum(y) / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        let sse: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let e = b - (intercept + slope * a);
                e * e
            })
            .sum();
        1.0 - sse / syy
    } else {
        1.0
    };
    Some((slope, intercept, r2))
}

pub const MIN_FIT_POINTS: usize = 4;

/// Fits every (policy, environment, held value) series in `rows` along `axis`.
pub fn fit_scaling(rows: &[SummaryRow], axis: Axis) -> Vec<FitResult> {
    let mut groups: BTreeMap<(String, String, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let (held, x) = match axis {
            Axis::Horizon => (r.norm, r.horizon as f64),
            Axis::Norm => (r.horizon as f64, r.norm),
        };
        groups
            .entry((r.policy.clone(), r.environment.clone(), held.to_bits()))
            .or_default()
            .push((x, r.mean_regret));
    }
    groups
        .into_iter()
        .map(|((policy, environment, held), mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut fit = FitResult {
                policy,
                environment,
                axis,
                held: f64::from_bits(held),
                points: pts.len(),
                slope: None,
                intercept: None,
                r_squared: None,
                status: FitStatus::Ok,
            };
            if pts.len() < MIN_FIT_POINTS {
                fit.status = FitStatus::InsufficientPoints;
                return fit;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = match axis {
                Axis::Horizon => {
                    if pts.iter().any(|(_, r)| !(*r > 0.0)) {
                        fit.status = FitStatus::NonpositiveRegret;
                        return fit;
                    }
                    pts.iter().map(|(t, r)| (t.ln(), r.ln())).unzip()
                }
                Axis::Norm => pts.iter().copied().unzip(),
            };
            match least_squares(&x, &y) {
                Some((b, a, r2)) => {
                    fit.slope = Some(b);
                    fit.intercept = Some(a);
                    fit.r_squared = Some(r2);
                }
                None => fit.status = FitStatus::Degenerate,
            }
            fit
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub environment: String,
    pub horizon: u64,
    pub norm: f64,
    pub policy_a: String,
    pub mean_a: f64,
    pub stderr_a: f64,
    pub policy_b: String,
    pub mean_b: f64,
    pub stderr_b: f64,
    pub ratio: f64,
    /// `mean_a + stderr_a < mean_b − stderr_b`
    pub a_wins: bool,
}

/// Pairs the cells of two summaries on (environment, horizon, norm).
/// Each summary must hold a single policy per cell; schedules must match.
pub fn compare_baseline(a: &[SummaryRow], b: &[SummaryRow]) -> Result<Vec<CompareRow>> {
    let key = |r: &SummaryRow| (r.environment.clone(), r.horizon, r.norm.to_bits());
    let mut index: BTreeMap<_, &SummaryRow> = BTreeMap::new();
    for r in b {
        if index.insert(key(r), r).is_some() {
            return Err(Error::arg(format!(
                "summary b has several policies for {} T={} norm={}",
                r.environment, r.horizon, r.norm
            )));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for ra in a {
        if !seen.insert(key(ra)) {
            return Err(Error::arg(format!(
                "summary a has several policies for {} T={} norm={}",
                ra.environment, ra.horizon, ra.norm
            )));
        }
        let Some(rb) = index.get(&key(ra)) else {
            continue;
        };
        if ra.schedule_hash != rb.schedule_hash {
            return Err(Error::ScheduleMismatch(format!(
                "{} T={}: {} vs {}",
                ra.environment, ra.horizon, ra.schedule_hash, rb.schedule_hash
            )));
        }
        out.push(compare_rows(ra, rb));
    }
    Ok(out)
}

pub fn compare_rows(a: &SummaryRow, b: &SummaryRow) -> CompareRow {
    CompareRow {
        environment: a.environment.clone(),
        horizon: a.horizon,
        norm: a.norm,
        policy_a: a.policy.clone(),
        mean_a: a.mean_regret,
        stderr_a: a.stderr_regret,
        policy_b: b.policy.clone(),
        mean_b: b.mean_regret,
        stderr_b: b.stderr_regret,
        ratio: a.mean_regret / b.mean_regret,
        a_wins: a.mean_regret + a.stderr_regret < b.mean_regret - b.stderr_regret,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, horizon: u64, norm: f64, mean: f64, se: f64) -> SummaryRow {
        SummaryRow {
            policy: policy.into(),
            environment: "env".into(),
            horizon,
            norm,
            seeds: 20,
            mean_regret: mean,
            stderr_regret: se,
            mean_learner_loss: 0.0,
            mean_comparator_norm: norm,
            flagged: 0,
            violations: 0,
            errors: 0,
            schedule_hash: "h".into(),
            config_hash: "c".into(),
        }
    }

    #[test]
    fn power_law_exponent() {
        let rows: Vec<_> = (10..=16)
            .map(|k| {
                let t = 1u64 << k;
                row("p", t, 1.0, 7.0 * (t as f64).powf(0.75), 0.0)
            })
            .collect();
        let f = &fit_scaling(&rows, Axis::Horizon)[0];
        assert!((f.slope.unwrap() - 0.75).abs() < 0.01);
        assert!(f.r_squared.unwrap() >= 0.999);

        let flat: Vec<_> = (10..=16).map(|k| row("p", 1 << k, 1.0, 4.0, 0.0)).collect();
        assert!(fit_scaling(&flat, Axis::Horizon)[0].slope.unwrap().abs() < 0.02);
    }

    #[test]
    fn affine_norm_fit() {
        let rows: Vec<_> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&n| row("p", 100, n, 3.0 + 5.0 * n, 0.0))
            .collect();
        let f = &fit_scaling(&rows, Axis::Norm)[0];
        assert!((f.slope.unwrap() - 5.0).abs() < 1e-12);
        assert!((f.intercept.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_flags() {
        let few: Vec<_> = (0..3).map(|k| row("p", 1 << k, 1.0, 1.0, 0.0)).collect();
        assert_eq!(
            fit_scaling(&few, Axis::Horizon)[0].status,
            FitStatus::InsufficientPoints
        );
        let mut neg: Vec<_> = (0..5).map(|k| row("p", 1 << k, 1.0, 1.0, 0.0)).collect();
        neg[2].mean_regret = -1.0;
        assert_eq!(
            fit_scaling(&neg, Axis::Horizon)[0].status,
            FitStatus::NonpositiveRegret
        );
    }

    #[test]
    fn comparisons() {
        let a = vec![row("a", 10, 0.0, 5.0, 1.0)];
        let r = compare_baseline(&a, &a).unwrap();
        assert_eq!(r[0].ratio, 1.0);
        assert!(!r[0].a_wins);
        let b = vec![row("b", 10, 0.0, 20.0, 2.0)];
        assert!(compare_baseline(&a, &b).unwrap()[0].a_wins);
        let mut c = b.clone();
        c[0].schedule_hash = "other".into();
        assert!(matches!(
            compare_baseline(&a, &c),
            Err(Error::ScheduleMismatch(_))
        ));
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![row("a", 10, 0.125, 5.0, 1.0), row("a", 10, 1.0, 6.5, 0.25)];
        let mut out = Vec::new();
        write_summary(&rows, &mut out).unwrap();
        assert_eq!(read_summary(out.as_slice()).unwrap(), rows);
        let mut empty = Vec::new();
        write_summary(&[], &mut empty).unwrap();
        assert!(read_summary(empty.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
