//! Non-adaptive reference algorithms.

use serde::{Deserialize, Serialize};

use crate::envs::{Comparator, Environment};
use crate::error::{Error, Result};
use crate::geometry::{sample_sphere, ConvexBody};
use crate::numeric::{norm, CompensatedSum};
use crate::reductions::{BanditPolicy, PolicyDiagnostics, RegretLedger, RoundRecord};
use crate::rng::StreamRng;

const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaxmanParameters {
    pub delta: f64,
    pub eta: f64,
    pub shrink: f64,
}

/// One-point bandit gradient descent over `W` (the unit ball when no body is
/// given): play `y_t + δ s_t`, estimate `(d/δ) ℓ_t(y_t + δ s_t) s_t`, and
/// step `y` within `(1 − δ/r) W`, `r` the inner radius. The defaults
/// `δ = T^{-1/4}` and `η = δ/(dL√T)` are tuned for comparators of norm one.
#[derive(Debug, Clone)]
pub struct Flaxman {
    body: ConvexBody,
    params: FlaxmanParameters,
    y: Vec<f64>,
    pending: Option<(Vec<f64>, Vec<f64>)>,
    round: u64,
    record: bool,
    trace: Vec<RoundRecord>,
    diag: PolicyDiagnostics,
}

impl Flaxman {
    pub fn new(
        body: Option<ConvexBody>,
        dim: usize,
        horizon: u64,
        lipschitz: f64,
        delta: Option<f64>,
        eta: Option<f64>,
    ) -> Result<Self> {
        let body = match body {
            Some(b) => b,
            None => ConvexBody::unit_ball(dim)?,
        };
        if body.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: body.dim(),
            });
        }
        let t = horizon.max(1) as f64;
        let r = body.inner_radius();
        let delta = delta.unwrap_or_else(|| t.powf(-0.25).min(r));
        if !(delta > 0.0 && delta <= r) {
            return Err(Error::config(format!(
                "flaxman delta must lie in (0, {r}], got {delta}"
            )));
        }
        let eta = eta.unwrap_or(delta / (dim as f64 * lipschitz * t.sqrt()));
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::config(format!(
                "flaxman eta must be positive, got {eta}"
            )));
        }
        Ok(Self {
            body,
            params: FlaxmanParameters {
                delta,
                eta,
                shrink: 1.0 - delta / r,
            },
            y: vec![0.0; dim],
            pending: None,
            round: 0,
            record: false,
            trace: Vec::new(),
            diag: PolicyDiagnostics::default(),
        })
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn parameters(&self) -> &FlaxmanParameters {
        &self.params
    }
}

impl BanditPolicy for Flaxman {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn begin_round(&mut self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        if self.pending.is_some() {
            return Err(Error::Protocol(
                "begin_round called twice without end_round".into(),
            ));
        }
        let s = sample_sphere(self.y.len(), rng)?.into_vec();
        let w: Vec<f64> = self
            .y
            .iter()
            .zip(&s)
            .map(|(y, si)| y + self.params.delta * si)
            .collect();
        if !self.body.contains(&w, FEASIBILITY_TOL) {
            self.diag.feasibility_violations += 1;
            return Err(Error::Invariant(format!(
                "flaxman play {w:?} left the decision set"
            )));
        }
        self.pending = Some((s, w.clone()));
        Ok(w)
    }

    fn end_round(&mut self, loss_value: f64) -> Result<()> {
        let (s, w) = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("end_round called without begin_round".into()))?;
        if !loss_value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss value {loss_value}"
            )));
        }
        let c = self.y.len() as f64 / self.params.delta * loss_value;
        let ghat: Vec<f64> = s.iter().map(|si| c * si).collect();
        self.diag.max_estimate_norm = self.diag.max_estimate_norm.max(c.abs());
        let moved: Vec<f64> = self
            .y
            .iter()
            .zip(&ghat)
            .map(|(y, g)| y - self.params.eta * g)
            .collect();
        let z = self.y.clone();
        self.y = self.body.project(self.params.shrink, &moved)?;
        self.round += 1;
        self.diag.rounds = self.round;
        if self.record {
            self.trace.push(RoundRecord {
                t: self.round,
                v: 1.0,
                z,
                s: Some(s),
                w,
                loss_value,
                ghat: Some(ghat),
                surrogate_grad: None,
            });
        }
        Ok(())
    }

    fn trace(&self) -> &[RoundRecord] {
        &self.trace
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        self.diag.clone()
    }
}

/// Projected gradient descent on `W` (the unit ball when absent) fed the
/// exact gradient of each round's loss, step `η = 1/(L√T)` by default.
pub fn run_full_info_ogd(
    env: &Environment,
    body: Option<&ConvexBody>,
    eta: Option<f64>,
    comparators: &[Comparator],
) -> Result<(RegretLedger, f64)> {
    let d = env.dim();
    let ball;
    let body = match body {
        Some(b) => b,
        None => {
            ball = ConvexBody::unit_ball(d)?;
            &ball
        }
    };
    let eta = eta.unwrap_or(1.0 / (env.lipschitz() * (env.horizon().max(1) as f64).sqrt()));
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::config(format!(
            "OGD step must be positive, got {eta}"
        )));
    }
    let mut x = vec![0.0; d];
    let mut learner = CompensatedSum::new();
    for o in env.rounds() {
        learner.add(o.eval(&x));
        let g = o.gradient(&x);
        if norm(&g) > env.lipschitz() * (1.0 + 1e-9) {
            return Err(Error::Invariant(
                "oracle gradient exceeds the declared L".into(),
            ));
        }
        let moved: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
        x = body.project(1.0, &moved)?;
    }
    Ok((
        RegretLedger::new(learner.value(), env.horizon(), comparators),
        eta,
    ))
}
