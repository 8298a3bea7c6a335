use serde::{Deserialize, Serialize};

use super::{BanditPolicy, PolicyDiagnostics, RoundRecord};
use crate::direction::{BarrierBandit, PerturbationToken};
use crate::error::{Error, Result};
use crate::geometry::{BodySpec, ConvexBody};
use crate::rng::StreamRng;
use crate::scale::{ScaleLearner, Segment};

const FEASIBILITY_TOL: f64 = 1e-9;

/// Linear-bandit reduction settings. With `body` absent the problem is
/// unconstrained: directions live in the unit ball and scales in `[1/T, ∞)`.
/// With a body `W`, directions live in `W` and scales in `[1/T, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBanditConfig {
    pub dim: usize,
    pub horizon: u64,
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySpec>,
    /// Override for the direction learner's learning rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParameters {
    pub scale_lipschitz: f64,
    pub scale_floor: f64,
    pub segment_low: f64,
    pub segment_high: f64,
    pub barrier_rate: f64,
    pub barrier_parameter: f64,
    pub constrained: bool,
}

/// Algorithm state for the linear-bandit reduction.
#[derive(Debug, Clone)]
pub struct LinearBandit {
    scale: ScaleLearner,
    direction: BarrierBandit,
    body: Option<ConvexBody>,
    floor: f64,
    params: LinearParameters,
    pending: Option<Pending>,
    round: u64,
    record: bool,
    trace: Vec<RoundRecord>,
    diag: PolicyDiagnostics,
}

#[derive(Debug, Clone)]
struct Pending {
    v: f64,
    z: Vec<f64>,
    w: Vec<f64>,
    token: PerturbationToken,
}

impl LinearBanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(self.lipschitz > 0.0) || !self.lipschitz.is_finite() {
            return Err(Error::config(format!(
                "L must be positive, got {}",
                self.lipschitz
            )));
        }
        if let Some(b) = &self.body {
            if b.dim != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: b.dim,
                });
            }
        }
        Ok(())
    }
}

impl LinearBandit {
    pub fn new(config: &LinearBanditConfig) -> Result<Self> {
        config.validate()?;
        let horizon = config.horizon.max(1);
        let floor = 1.0 / horizon as f64;
        let body = config.body.as_ref().map(BodySpec::build).transpose()?;
        let (segment, domain) = match &body {
            Some(w) => (Segment::unit().with_floor(floor)?, w.clone()),
            None => (
                Segment::nonnegative().with_floor(floor)?,
                ConvexBody::unit_ball(config.dim)?,
            ),
        };
        let scale = ScaleLearner::new(segment, config.lipschitz)?;
        let direction = match config.barrier_rate {
            Some(rate) => BarrierBandit::with_learning_rate(
                crate::direction::Barrier::new(domain),
                config.lipschitz,
                rate,
            )?,
            None => BarrierBandit::new(domain, config.lipschitz, config.horizon)?,
        };
        let params = LinearParameters {
            scale_lipschitz: config.lipschitz,
            scale_floor: floor,
            segment_low: segment.low,
            segment_high: segment.high,
            barrier_rate: direction.learning_rate(),
            barrier_parameter: direction.barrier().parameter(),
            constrained: body.is_some(),
        };
        Ok(Self {
            scale,
            direction,
            body,
            floor,
            params,
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

    pub fn parameters(&self) -> &LinearParameters {
        &self.params
    }

    pub fn scale(&self) -> &ScaleLearner {
        &self.scale
    }

    pub fn direction(&self) -> &BarrierBandit {
        &self.direction
    }
}

/// Recovers `L_t = loss_value / v_t = ⟨z_t, g_t⟩` and feeds it to both the
/// scale learner and the direction learner.
pub fn linear_bandit_round(
    scale: &mut ScaleLearner,
    direction: &mut BarrierBandit,
    token: &PerturbationToken,
    loss_value: f64,
    v: f64,
    floor: f64,
) -> Result<f64> {
    if !(v >= floor) || v <= 0.0 {
        return Err(Error::Invariant(format!(
            "played scale {v} is below the floor {floor}"
        )));
    }
    if !loss_value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss value {loss_value}"
        )));
    }
    let normalized = loss_value / v;
    scale.update(normalized)?;
    direction.update(normalized, token)?;
    Ok(normalized)
}

impl BanditPolicy for LinearBandit {
    fn dim(&self) -> usize {
        self.direction.center().len()
    }

    fn begin_round(&mut self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        if self.pending.is_some() {
            return Err(Error::Protocol(
                "begin_round called twice without end_round".into(),
            ));
        }
        let v = self.scale.predict();
        let (z, token) = self.direction.predict(rng);
        let w: Vec<f64> = z.iter().map(|zi| v * zi).collect();
        if let Some(body) = &self.body {
            if !body.contains(&w, FEASIBILITY_TOL) {
                self.diag.feasibility_violations += 1;
                return Err(Error::Invariant(format!(
                    "round {}: play {w:?} left the decision set",
                    self.round + 1
                )));
            }
        }
        self.diag.max_scale = self.diag.max_scale.max(v);
        self.pending = Some(Pending {
            v,
            z,
            w: w.clone(),
            token,
        });
        Ok(w)
    }

    fn end_round(&mut self, loss_value: f64) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("end_round called without begin_round".into()))?;
        let normalized = linear_bandit_round(
            &mut self.scale,
            &mut self.direction,
            &p.token,
            loss_value,
            p.v,
            self.floor,
        )?;
        self.round += 1;
        self.diag.rounds = self.round;
        self.diag.max_surrogate_abs = self.diag.max_surrogate_abs.max(normalized.abs());
        self.diag.lipschitz_violations = self.scale.lipschitz_violations();
        self.diag.loss_violations = self.direction.loss_violations();
        if self.record {
            self.trace.push(RoundRecord {
                t: self.round,
                v: p.v,
                z: p.z,
                s: None,
                w: p.w,
                loss_value,
                ghat: None,
                surrogate_grad: Some(normalized),
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
