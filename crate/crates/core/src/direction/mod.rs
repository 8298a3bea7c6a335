//! Direction learners: a bandit linear optimizer over a convex body and the
//! full-information projected gradient descent used by the convex reduction.

mod barrier;
mod ogd;

pub use barrier::{barrier_estimate, Barrier, BarrierBandit, DikinFrame, PerturbationToken};
pub use ogd::OgdDirection;
