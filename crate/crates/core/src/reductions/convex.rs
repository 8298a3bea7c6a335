use serde::{Deserialize, Serialize};

use super::{BanditPolicy, PolicyDiagnostics, RoundRecord};
use crate::direction::OgdDirection;
use crate::error::{Error, Result};
use crate::geometry::{sample_sphere, BodySpec, ConvexBody};
use crate::numeric::{dot, norm, CompensatedSum, CompensatedVec};
use crate::rng::StreamRng;
use crate::scale::{ScaleLearner, Segment};

const FEASIBILITY_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexMode {
    LipschitzUnconstrained,
    SmoothUnconstrained,
    LipschitzConstrained,
}

/// Convex-bandit reduction settings; `delta`, `alpha`, `eta` and `v_cap`
/// take their mode presets when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexBanditConfig {
    pub mode: ConvexMode,
    pub dim: usize,
    pub horizon: u64,
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Constrained default: `δ/r` capped at 1, `r` the inner radius, so that
    /// `(1 − α)W + δB ⊆ W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_cap: Option<f64>,
}

/// Everything derived from a [`ConvexBanditConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexParameters {
    pub mode: ConvexMode,
    pub dim: usize,
    pub horizon: u64,
    pub lipschitz: f64,
    pub smoothness: Option<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub eta: f64,
    pub v_cap: Option<f64>,
    pub scale_floor: f64,
    pub scale_lipschitz: f64,
    pub segment_low: f64,
    pub segment_high: f64,
    /// `dL(1 − α + δ)/δ`
    pub estimate_bound: f64,
}

impl ConvexParameters {
    pub fn segment(&self) -> Segment {
        Segment {
            low: self.segment_low,
            high: self.segment_high,
        }
    }

    /// Right-hand side of the OGD bound `1/(2η) + 2η(dL/δ)²T`.
    pub fn ogd_bound(&self) -> f64 {
        let g = self.dim as f64 * self.lipschitz / self.delta;
        1.0 / (2.0 * self.eta) + 2.0 * self.eta * g * g * self.horizon as f64
    }
}

impl ConvexBanditConfig {
    pub fn preset(mode: ConvexMode, dim: usize, horizon: u64, lipschitz: f64) -> Self {
        Self {
            mode,
            dim,
            horizon,
            lipschitz,
            smoothness: None,
            body: None,
            delta: None,
            alpha: None,
            eta: None,
            v_cap: None,
        }
    }

    pub fn derive(&self) -> Result<ConvexParameters> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let l = self.lipschitz;
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::config(format!("L must be positive, got {l}")));
        }
        let df = d as f64;
        let t = self.horizon.max(1) as f64;
        let smoothness = match self.mode {
            ConvexMode::SmoothUnconstrained => {
                let b = self.smoothness.ok_or_else(|| {
                    Error::config("smooth mode needs the smoothness constant beta")
                })?;
                if !(b > 0.0) || !b.is_finite() {
                    return Err(Error::config(format!("beta must be positive, got {b}")));
                }
                Some(b)
            }
            _ => self.smoothness,
        };
        match (self.mode, &self.body) {
            (ConvexMode::LipschitzConstrained, None) => {
                return Err(Error::config("constrained mode needs a body"))
            }
            (ConvexMode::LipschitzConstrained, Some(b)) if b.dim != d => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.dim,
                })
            }
            (ConvexMode::LipschitzUnconstrained | ConvexMode::SmoothUnconstrained, Some(_)) => {
                return Err(Error::config("unconstrained modes do not take a body"))
            }
            _ => {}
        }

        let delta = self.delta.unwrap_or_else(|| match self.mode {
            ConvexMode::SmoothUnconstrained => (df * l).cbrt() * t.powf(-1.0 / 6.0),
            _ => df.sqrt() * t.powf(-0.25),
        });
        let delta = if self.delta.is_some() {
            delta
        } else {
            delta.min(1.0)
        };
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::config(format!(
                "delta must lie in (0, 1], got {delta}"
            )));
        }
        let alpha = match (self.alpha, self.mode, &self.body) {
            (Some(a), _, _) => a,
            (None, ConvexMode::LipschitzConstrained, Some(b)) => {
                (delta / b.build()?.inner_radius()).min(1.0)
            }
            _ => 0.0,
        };
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        let eta = self.eta.unwrap_or(delta / (2.0 * df * l * t.sqrt()));
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::config(format!("eta must be positive, got {eta}")));
        }
        let v_cap = match (self.mode, self.v_cap) {
            (_, Some(c)) => Some(c),
            (ConvexMode::SmoothUnconstrained, None) => Some(delta.powi(-3)),
            _ => None,
        };
        if let Some(c) = v_cap {
            if !(c > 0.0) {
                return Err(Error::config(format!("v_cap must be positive, got {c}")));
            }
        }
        let high = match self.mode {
            ConvexMode::LipschitzConstrained => v_cap.map_or(1.0, |c| c.min(1.0)),
            _ => v_cap.unwrap_or(f64::INFINITY),
        };
        let floor = (1.0 / t).min(0.5 * high);

        let estimate_bound = df * l * (1.0 - alpha + delta) / delta;
        let direction_term = (1.0 - alpha) * estimate_bound;
        let scale_lipschitz = match self.mode {
            ConvexMode::LipschitzUnconstrained => {
                (2.0 * df * l / delta + 2.0 * delta * l).max(direction_term + 2.0 * delta * l)
            }
            ConvexMode::LipschitzConstrained => {
                (df * l / delta + 2.0 * delta * l).max(direction_term + 2.0 * delta * l)
            }
            ConvexMode::SmoothUnconstrained => {
                let b = smoothness.unwrap_or(1.0);
                let cap = high;
                (b * (df * l + 2.0) / delta).max(direction_term + 2.0 * b * delta * delta * cap)
            }
        };
        if !scale_lipschitz.is_finite() {
            return Err(Error::config("scale-learner gradient bound is not finite"));
        }
        Ok(ConvexParameters {
            mode: self.mode,
            dim: d,
            horizon: self.horizon,
            lipschitz: l,
            smoothness,
            delta,
            alpha,
            eta,
            v_cap,
            scale_floor: floor,
            scale_lipschitz,
            segment_low: floor,
            segment_high: high,
            estimate_bound,
        })
    }
}

/// Comparator-adaptive convex bandit algorithm: a coin-betting scale learner
/// on surrogate losses and projected gradient descent on one-point gradient
/// estimates for the direction.
#[derive(Debug, Clone)]
pub struct ConvexBandit {
    params: ConvexParameters,
    scale: ScaleLearner,
    ogd: OgdDirection,
    body: Option<ConvexBody>,
    pending: Option<Pending>,
    round: u64,
    record: bool,
    trace: Vec<RoundRecord>,
    diag: PolicyDiagnostics,
    linear_sum: CompensatedSum,
    estimate_sum: CompensatedVec,
}

#[derive(Debug, Clone)]
struct Pending {
    v: f64,
    z: Vec<f64>,
    s: Vec<f64>,
    w: Vec<f64>,
}

impl ConvexBandit {
    pub fn new(config: &ConvexBanditConfig) -> Result<Self> {
        let params = config.derive()?;
        let body = config.body.as_ref().map(BodySpec::build).transpose()?;
        let domain = match &body {
            Some(w) => w.clone(),
            None => ConvexBody::unit_ball(params.dim)?,
        };
        let scale = ScaleLearner::new(params.segment(), params.scale_lipschitz)?;
        let ogd = OgdDirection::new(domain, 1.0 - params.alpha, params.eta)?;
        let d = params.dim;
        Ok(Self {
            params,
            scale,
            ogd,
            body,
            pending: None,
            round: 0,
            record: false,
            trace: Vec::new(),
            diag: PolicyDiagnostics::default(),
            linear_sum: CompensatedSum::new(),
            estimate_sum: CompensatedVec::zeros(d),
        })
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn parameters(&self) -> &ConvexParameters {
        &self.params
    }

    pub fn scale(&self) -> &ScaleLearner {
        &self.scale
    }

    pub fn direction(&self) -> &OgdDirection {
        &self.ogd
    }

    /// Closes the pending round with the observed loss and updates both learners.
    fn finish(&mut self, loss_value: f64) -> Result<RoundRecord> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("end_round called without begin_round".into()))?;
        if !loss_value.is_finite() {
            return Err(Error::Numerical(format!(
                "round {}: loss oracle returned {loss_value}",
                self.round + 1
            )));
        }
        let prm = &self.params;
        let ghat = one_point_estimate(p.v, prm.delta, loss_value, &p.s);
        let gnorm = norm(&ghat);
        self.diag.max_estimate_norm = self.diag.max_estimate_norm.max(gnorm);
        if gnorm > prm.estimate_bound + BOUND_TOL {
            self.diag.gradient_bound_violations += 1;
            return Err(Error::Invariant(format!(
                "round {}: gradient estimate norm {gnorm} exceeds {}",
                self.round + 1,
                prm.estimate_bound
            )));
        }
        let zg = dot(&p.z, &ghat);
        let regularizer = match prm.mode {
            ConvexMode::SmoothUnconstrained => {
                2.0 * prm.smoothness.unwrap_or(1.0) * prm.delta * prm.delta * p.v
            }
            _ => {
                let sign = if p.v > 0.0 {
                    1.0
                } else if p.v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                2.0 * prm.delta * prm.lipschitz * sign
            }
        };
        let surrogate = zg + regularizer;
        self.diag.max_surrogate_abs = self.diag.max_surrogate_abs.max(surrogate.abs());
        self.scale.update(surrogate)?;
        self.ogd.step(&ghat)?;
        self.linear_sum.add(zg);
        self.estimate_sum.add_scaled(1.0, &ghat);

        self.round += 1;
        self.diag.rounds = self.round;
        self.diag.lipschitz_violations = self.scale.lipschitz_violations();
        let record = RoundRecord {
            t: self.round,
            v: p.v,
            z: p.z,
            s: Some(p.s),
            w: p.w,
            loss_value,
            ghat: Some(ghat),
            surrogate_grad: Some(surrogate),
        };
        if self.record {
            self.trace.push(record.clone());
        }
        Ok(record)
    }
}

/// `(d/(vδ)) ℓ(v(z + δs)) s`, an unbiased estimate of the gradient of the
/// `vδ`-smoothed loss at `vz`.
pub fn one_point_estimate(v: f64, delta: f64, loss_value: f64, s: &[f64]) -> Vec<f64> {
    let c = s.len() as f64 / (v * delta) * loss_value;
    s.iter().map(|si| c * si).collect()
}

/// One complete round: draw `s`, play `w = v(z + δs)`, query the oracle once,
/// and update both learners.
pub fn convex_bandit_round<F>(
    policy: &mut ConvexBandit,
    rng: &mut StreamRng,
    oracle: F,
) -> Result<RoundRecord>
where
    F: FnOnce(&[f64]) -> Result<f64>,
{
    let w = policy.begin_round(rng)?;
    let loss = oracle(&w)?;
    policy.finish(loss)
}

impl BanditPolicy for ConvexBandit {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn begin_round(&mut self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        if self.pending.is_some() {
            return Err(Error::Protocol(
                "begin_round called twice without end_round".into(),
            ));
        }
        let prm = &self.params;
        let v = self.scale.predict();
        if !(v >= prm.scale_floor) {
            return Err(Error::Invariant(format!(
                "played scale {v} is below the floor {}",
                prm.scale_floor
            )));
        }
        if let Some(cap) = prm.v_cap {
            if v > cap {
                self.diag.cap_violations += 1;
                return Err(Error::Invariant(format!(
                    "played scale {v} exceeds the cap {cap}"
                )));
            }
        }
        let s = sample_sphere(prm.dim, rng)?.into_vec();
        let z = self.ogd.iterate().to_vec();
        let w: Vec<f64> = z
            .iter()
            .zip(&s)
            .map(|(zi, si)| v * (zi + prm.delta * si))
            .collect();
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
            s,
            w: w.clone(),
        });
        Ok(w)
    }

    fn end_round(&mut self, loss_value: f64) -> Result<()> {
        self.finish(loss_value).map(|_| ())
    }

    fn trace(&self) -> &[RoundRecord] {
        &self.trace
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        let mut diag = self.diag.clone();
        diag.direction_linear_sum = Some(self.linear_sum.value());
        diag.estimate_sum = Some(self.estimate_sum.value());
        diag
    }
}
