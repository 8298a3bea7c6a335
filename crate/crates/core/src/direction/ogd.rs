use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::numeric::all_finite;

/// Projected online gradient descent on `(1 − α)·Z`, started at the origin.
#[derive(Debug, Clone)]
pub struct OgdDirection {
    body: ConvexBody,
    shrink: f64,
    iterate: Vec<f64>,
    learning_rate: f64,
    round: u64,
}

impl OgdDirection {
    pub fn new(body: ConvexBody, shrink: f64, learning_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&shrink) {
            return Err(Error::arg(format!(
                "shrink must lie in [0, 1], got {shrink}"
            )));
        }
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::arg(format!(
                "OGD learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        let iterate = vec![0.0; body.dim()];
        Ok(Self {
            body,
            shrink,
            iterate,
            learning_rate,
            round: 0,
        })
    }

    pub fn iterate(&self) -> &[f64] {
        &self.iterate
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn shrink(&self) -> f64 {
        self.shrink
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// `z ← Π_{(1−α)Z}(z − η·estimate)`
    pub fn step(&mut self, estimate: &[f64]) -> Result<()> {
        if estimate.len() != self.iterate.len() {
            return Err(Error::DimensionMismatch {
                expected: self.iterate.len(),
                got: estimate.len(),
            });
        }
        if !all_finite(estimate) {
            return Err(Error::Numerical(
                "OGD received a non-finite estimate".into(),
            ));
        }
        let moved: Vec<f64> = self
            .iterate
            .iter()
            .zip(estimate)
            .map(|(z, g)| z - self.learning_rate * g)
            .collect();
        self.iterate = self.body.project(self.shrink, &moved)?;
        self.round += 1;
        Ok(())
    }
}
