//! Black-box reductions that learn the comparator's norm and direction
//! separately, all exposed through [`BanditPolicy`].

mod convex;
mod linear;
mod run;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{dot, CompensatedSum};
use crate::rng::StreamRng;

pub use convex::{
    convex_bandit_round, one_point_estimate, ConvexBandit, ConvexBanditConfig, ConvexMode,
    ConvexParameters,
};
pub use linear::{linear_bandit_round, LinearBandit, LinearBanditConfig, LinearParameters};
pub use run::{run_policy, write_trace_csv, ComparatorResult, RegretLedger, RunFailure};

/// Round-based bandit learner: propose a point, then consume the scalar loss
/// observed there.
pub trait BanditPolicy {
    fn dim(&self) -> usize;

    /// Plays the round's point. Exactly one `end_round` must follow.
    fn begin_round(&mut self, rng: &mut StreamRng) -> Result<Vec<f64>>;

    fn end_round(&mut self, loss_value: f64) -> Result<()>;

    /// Rounds recorded so far; empty unless tracing was enabled.
    fn trace(&self) -> &[RoundRecord];

    fn diagnostics(&self) -> PolicyDiagnostics;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub v: f64,
    pub z: Vec<f64>,
    pub s: Option<Vec<f64>>,
    pub w: Vec<f64>,
    pub loss_value: f64,
    pub ghat: Option<Vec<f64>>,
    pub surrogate_grad: Option<f64>,
}

/// Counters and extrema accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyDiagnostics {
    pub rounds: u64,
    /// Scale-learner gradients that exceeded `L_V` and were clipped.
    pub lipschitz_violations: u64,
    /// Bandit losses above the declared bound, clipped by the direction learner.
    pub loss_violations: u64,
    pub feasibility_violations: u64,
    pub gradient_bound_violations: u64,
    pub cap_violations: u64,
    pub max_scale: f64,
    pub max_estimate_norm: f64,
    pub max_surrogate_abs: f64,
    /// `Σ ⟨z_t, ĝ_t⟩` (convex reduction only).
    pub direction_linear_sum: Option<f64>,
    /// `Σ ĝ_t` (convex reduction only).
    pub estimate_sum: Option<Vec<f64>>,
}

impl PolicyDiagnostics {
    pub fn violation_count(&self) -> u64 {
        self.lipschitz_violations
            + self.loss_violations
            + self.feasibility_violations
            + self.gradient_bound_violations
            + self.cap_violations
    }
}

/// Output of one full-information reduction round.
#[derive(Debug, Clone, PartialEq)]
pub struct FullInfoRound {
    pub w: Vec<f64>,
    /// `⟨z, g⟩`, forwarded to the scale learner.
    pub scale_feedback: f64,
    /// `g`, forwarded unchanged to the direction learner.
    pub direction_feedback: Vec<f64>,
}

/// Plays `w = v z` and splits the gradient feedback between the learners.
pub fn full_info_reduction_round(v: f64, z: &[f64], gradient: &[f64]) -> FullInfoRound {
    FullInfoRound {
        w: z.iter().map(|zi| v * zi).collect(),
        scale_feedback: dot(z, gradient),
        direction_feedback: gradient.to_vec(),
    }
}

/// The two sides of the norm/direction regret decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// `Σ ⟨v_t z_t − u, g_t⟩`
    pub regret: f64,
    /// `Σ (v_t − ‖u‖) ⟨z_t, g_t⟩`
    pub scale_regret: f64,
    /// `Σ ⟨z_t − u/‖u‖, g_t⟩`, zero when `u = 0`.
    pub direction_regret: f64,
    pub norm: f64,
}

impl Decomposition {
    pub fn recombined(&self) -> f64 {
        self.scale_regret + self.norm * self.direction_regret
    }
}

/// Evaluates both sides of `R_T(u) = R^V(‖u‖) + ‖u‖ R^Z(u/‖u‖)` on a sequence
/// of `(v_t, z_t, g_t)`.
pub fn decompose(rounds: &[(f64, Vec<f64>, Vec<f64>)], u: &[f64]) -> Decomposition {
    let norm = crate::numeric::norm(u);
    let mut regret = CompensatedSum::new();
    let mut scale_part = CompensatedSum::new();
    let mut direction_part = CompensatedSum::new();
    for (v, z, g) in rounds {
        let zg = dot(z, g);
        let ug = dot(u, g);
        regret.add(v * zg);
        regret.add(-ug);
        scale_part.add((v - norm) * zg);
        if norm > 0.0 {
            direction_part.add(zg);
            direction_part.add(-ug / norm);
        }
    }
    Decomposition {
        regret: regret.value(),
        scale_regret: scale_part.value(),
        direction_regret: direction_part.value(),
        norm,
    }
}
