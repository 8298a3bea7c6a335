use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BanditPolicy, RoundRecord};
use crate::envs::{Comparator, Environment};
use crate::error::{Error, Result};
use crate::numeric::{norm, CompensatedSum};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorResult {
    pub target_norm: f64,
    pub norm: f64,
    pub u: Vec<f64>,
    pub comparator_loss: f64,
    pub regret: f64,
    pub flagged: bool,
}

/// Cumulative losses of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub rounds: u64,
    pub learner_loss: f64,
    pub comparators: Vec<ComparatorResult>,
    pub query_violations: u64,
}

impl RegretLedger {
    pub fn new(learner_loss: f64, rounds: u64, comparators: &[Comparator]) -> Self {
        let comparators = comparators
            .iter()
            .map(|c| ComparatorResult {
                target_norm: c.target_norm,
                norm: norm(&c.u),
                u: c.u.clone(),
                comparator_loss: c.total_loss,
                regret: learner_loss - c.total_loss,
                flagged: c.flagged,
            })
            .collect();
        Self {
            rounds,
            learner_loss,
            comparators,
            query_violations: 0,
        }
    }

    pub fn regret_at(&self, target_norm: f64) -> Option<f64> {
        self.comparators
            .iter()
            .find(|c| c.target_norm == target_norm)
            .map(|c| c.regret)
    }
}

/// A run that stopped early; the policy's trace up to `round` is intact.
#[derive(Debug)]
pub struct RunFailure {
    pub round: u64,
    pub learner_loss: f64,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "round {}: {}", self.round, self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Plays every round of `env`: the policy proposes `w_t`, the round's oracle
/// is queried once at `w_t`, and the value is fed back.
pub fn run_policy<P: BanditPolicy + ?Sized>(
    policy: &mut P,
    env: &Environment,
    comparators: &[Comparator],
    rng: &mut StreamRng,
) -> std::result::Result<RegretLedger, RunFailure> {
    if policy.dim() != env.dim() {
        return Err(RunFailure {
            round: 0,
            learner_loss: 0.0,
            error: Error::DimensionMismatch {
                expected: env.dim(),
                got: policy.dim(),
            },
        });
    }
    let mut learner = CompensatedSum::new();
    for t in 0..env.horizon() as usize {
        let fail = |error, learner: &CompensatedSum| RunFailure {
            round: t as u64 + 1,
            learner_loss: learner.value(),
            error,
        };
        let w = policy.begin_round(rng).map_err(|e| fail(e, &learner))?;
        let mut oracle = env.metered(t);
        let loss = oracle.eval(&w).map_err(|e| fail(e, &learner))?;
        if !loss.is_finite() {
            return Err(fail(
                Error::Numerical(format!("loss oracle returned {loss}")),
                &learner,
            ));
        }
        learner.add(loss);
        policy.end_round(loss).map_err(|e| fail(e, &learner))?;
    }
    Ok(RegretLedger::new(
        learner.value(),
        env.horizon(),
        comparators,
    ))
}

/// One row per round: `t, v, z…, s…, w…, loss_value, surrogate_grad, ghat_norm`.
pub fn write_trace_csv<W: Write>(records: &[RoundRecord], dim: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "v".to_string()];
    for prefix in ["z", "s", "w"] {
        header.extend((1..=dim).map(|i| format!("{prefix}{i}")));
    }
    header.extend(["loss_value", "surrogate_grad", "ghat_norm"].map(String::from));
    w.write_record(&header)?;
    let blank = || std::iter::repeat_n(String::new(), dim);
    for r in records {
        let mut row = vec![r.t.to_string(), r.v.to_string()];
        row.extend(r.z.iter().map(f64::to_string));
        match &r.s {
            Some(s) => row.extend(s.iter().map(f64::to_string)),
            None => row.extend(blank()),
        }
        row.extend(r.w.iter().map(f64::to_string));
        row.push(r.loss_value.to_string());
        row.push(r.surrogate_grad.map(|g| g.to_string()).unwrap_or_default());
        row.push(
            r.ghat
                .as_ref()
                .map(|g| norm(g).to_string())
                .unwrap_or_default(),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvSpec, Family, ScheduleSpec};
    use crate::reductions::{LinearBandit, LinearBanditConfig, PolicyDiagnostics};
    use rand::SeedableRng;

    struct Zero(usize);

    impl BanditPolicy for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn begin_round(&mut self, _: &mut StreamRng) -> Result<Vec<f64>> {
            Ok(vec![0.0; self.0])
        }
        fn end_round(&mut self, _: f64) -> Result<()> {
            Ok(())
        }
        fn trace(&self) -> &[RoundRecord] {
            &[]
        }
        fn diagnostics(&self) -> PolicyDiagnostics {
            PolicyDiagnostics::default()
        }
    }

    fn zero_comparator(d: usize) -> Comparator {
        Comparator {
            target_norm: 0.0,
            u: vec![0.0; d],
            total_loss: 0.0,
            flagged: false,
        }
    }

    #[test]
    fn zero_policy_and_empty_runs() {
        let mut rng = StreamRng::seed_from_u64(0);
        for family in [Family::Hinge, Family::Quadratic, Family::LogisticShifted] {
            let env = Environment::generate(
                &EnvSpec::new(family, ScheduleSpec::Stochastic, 2, 1.0),
                100,
                1,
            )
            .unwrap();
            let l = run_policy(&mut Zero(2), &env, &[zero_comparator(2)], &mut rng).unwrap();
            assert_eq!(l.learner_loss, 0.0);
            assert_eq!(l.comparators[0].regret, 0.0);
        }
        let env = Environment::generate(
            &EnvSpec::new(Family::Linear, ScheduleSpec::Fixed, 2, 1.0),
            0,
            1,
        )
        .unwrap();
        let l = run_policy(&mut Zero(2), &env, &[], &mut rng).unwrap();
        assert_eq!((l.rounds, l.learner_loss), (0, 0.0));
    }

    #[test]
    fn regret_against_zero_is_learner_loss() {
        let env = Environment::generate(
            &EnvSpec::new(Family::Linear, ScheduleSpec::Stochastic, 2, 1.0),
            300,
            4,
        )
        .unwrap();
        let mut p = LinearBandit::new(&LinearBanditConfig {
            dim: 2,
            horizon: 300,
            lipschitz: 1.0,
            body: None,
            barrier_rate: None,
        })
        .unwrap()
        .with_trace(true);
        let mut rng = StreamRng::seed_from_u64(0);
        let l = run_policy(&mut p, &env, &[zero_comparator(2)], &mut rng).unwrap();
        assert_eq!(l.comparators[0].regret, l.learner_loss);
        let mut out = Vec::new();
        write_trace_csv(p.trace(), 2, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 301);
        assert!(text.starts_with("t,v,z1,z2,s1,s2,w1,w2,loss_value,surrogate_grad,ghat_norm"));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let env = Environment::generate(
            &EnvSpec::new(Family::Linear, ScheduleSpec::Fixed, 3, 1.0),
            5,
            0,
        )
        .unwrap();
        let mut rng = StreamRng::seed_from_u64(0);
        let err = run_policy(&mut Zero(2), &env, &[], &mut rng).unwrap_err();
        assert_eq!(err.round, 0);
    }
}
