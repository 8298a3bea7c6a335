//! Loss environments with `ℓ_t(0) = 0`, a per-round query meter enforcing
//! bandit feedback, and an offline comparator search.

mod comparator;
mod schedule;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, norm};

pub use comparator::{
    best_comparator, resolve_comparators, Comparator, ComparatorSearch, ComparatorSpec,
    DirectionMode,
};
pub use schedule::{EnvSpec, Environment, FamilyParams, NoiseKind, ScheduleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    AbsLinear,
    Hinge,
    LogisticShifted,
    Quadratic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::AbsLinear => "abs_linear",
            Family::Hinge => "hinge",
            Family::LogisticShifted => "logistic_shifted",
            Family::Quadratic => "quadratic",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Family::Linear => 0,
            Family::AbsLinear => 1,
            Family::Hinge => 2,
            Family::LogisticShifted => 3,
            Family::Quadratic => 4,
        }
    }
}

/// One round's loss. `param` is `g_t`, `x_t` or `m_t` depending on the
/// family; `label` is `y_t` for the classification losses; `radius` is the
/// Huber radius of the quadratic family.
///
/// The quadratic loss is `h(w − m) − h(−m)` with `h(r) = ‖r‖²` for
/// `‖r‖ ≤ R` and `2R‖r‖ − R²` beyond, i.e. `‖w − m‖² − ‖m‖²` wherever both
/// points are within `R` of `m`, 2-smooth, and `2R`-Lipschitz everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossOracle {
    pub family: Family,
    pub param: Vec<f64>,
    pub label: f64,
    pub radius: f64,
}

fn huber(r: f64, radius: f64) -> f64 {
    if r <= radius {
        r * r
    } else {
        2.0 * radius * r - radius * radius
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LossOracle {
    pub fn linear(g: Vec<f64>) -> Self {
        Self {
            family: Family::Linear,
            param: g,
            label: 1.0,
            radius: 0.0,
        }
    }

    pub fn abs_linear(g: Vec<f64>) -> Self {
        Self {
            family: Family::AbsLinear,
            param: g,
            label: 1.0,
            radius: 0.0,
        }
    }

    pub fn hinge(x: Vec<f64>, y: f64) -> Self {
        Self {
            family: Family::Hinge,
            param: x,
            label: y,
            radius: 0.0,
        }
    }

    pub fn logistic(x: Vec<f64>, y: f64) -> Self {
        Self {
            family: Family::LogisticShifted,
            param: x,
            label: y,
            radius: 0.0,
        }
    }

    pub fn quadratic(m: Vec<f64>, radius: f64) -> Self {
        Self {
            family: Family::Quadratic,
            param: m,
            label: 1.0,
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.param.len()
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        let p = &self.param;
        match self.family {
            Family::Linear => dot(p, w),
            Family::AbsLinear => dot(p, w).abs(),
            Family::Hinge => (1.0 - self.label * dot(p, w)).max(0.0) - 1.0,
            Family::LogisticShifted => softplus(-self.label * dot(p, w)) - std::f64::consts::LN_2,
            Family::Quadratic => {
                let r: f64 = w
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                huber(r, self.radius) - huber(norm(p), self.radius)
            }
        }
    }

    /// A (sub)gradient at `w`; used by audits, baselines with oracle
    /// gradients, and the comparator search, never by bandit policies.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let p = &self.param;
        match self.family {
            Family::Linear => p.clone(),
            Family::AbsLinear => {
                let s = dot(p, w);
                let sign = if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                p.iter().map(|x| sign * x).collect()
            }
            Family::Hinge => {
                if 1.0 - self.label * dot(p, w) > 0.0 {
                    p.iter().map(|x| -self.label * x).collect()
                } else {
                    vec![0.0; p.len()]
                }
            }
            Family::LogisticShifted => {
                let c = -self.label * sigmoid(-self.label * dot(p, w));
                p.iter().map(|x| c * x).collect()
            }
            Family::Quadratic => {
                let diff: Vec<f64> = w.iter().zip(p).map(|(a, b)| a - b).collect();
                let r = norm(&diff);
                let c = if r <= self.radius {
                    2.0
                } else {
                    2.0 * self.radius / r
                };
                diff.iter().map(|x| c * x).collect()
            }
        }
    }

    /// Global Lipschitz constant of this round's loss.
    pub fn lipschitz(&self) -> f64 {
        match self.family {
            Family::Quadratic => 2.0 * self.radius,
            Family::Linear | Family::AbsLinear => norm(&self.param),
            Family::Hinge | Family::LogisticShifted => norm(&self.param) * self.label.abs(),
        }
    }

    /// Smoothness constant, when the loss is smooth.
    pub fn smoothness(&self) -> Option<f64> {
        match self.family {
            Family::Linear => Some(0.0),
            Family::Quadratic => Some(2.0),
            Family::LogisticShifted => {
                let n = norm(&self.param) * self.label.abs();
                Some(n * n / 4.0)
            }
            Family::AbsLinear | Family::Hinge => None,
        }
    }
}

/// A round's oracle that answers exactly one query.
#[derive(Debug)]
pub struct MeteredOracle<'a> {
    oracle: &'a LossOracle,
    round: u64,
    queries: u32,
}

impl<'a> MeteredOracle<'a> {
    pub fn new(oracle: &'a LossOracle, round: u64) -> Self {
        Self {
            oracle,
            round,
            queries: 0,
        }
    }

    pub fn eval(&mut self, w: &[f64]) -> Result<f64> {
        if self.queries > 0 {
            return Err(Error::Protocol(format!(
                "second loss query in round {}",
                self.round
            )));
        }
        if w.len() != self.oracle.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.oracle.dim(),
                got: w.len(),
            });
        }
        if !crate::numeric::all_finite(w) {
            return Err(Error::Numerical(format!(
                "round {}: queried a non-finite point",
                self.round
            )));
        }
        self.queries += 1;
        Ok(self.oracle.eval(w))
    }

    pub fn queries(&self) -> u32 {
        self.queries
    }
}
