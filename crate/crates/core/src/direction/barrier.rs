//! Self-concordant barriers for the supported bodies and the Dikin-ellipsoid
//! bandit linear optimizer built on them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{quad_form, ConvexBody, Shape};
use crate::numeric::{all_finite, norm, CompensatedVec};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 100;
const MAX_HALVINGS: usize = 100;

/// Logarithmic barrier of a [`ConvexBody`].
///
/// Ball: `-ln(r² - ‖x‖²)` (ν = 1). Box: `-Σ ln(h_i - x_i) + ln(h_i + x_i)`
/// (ν = 2d). Ellipsoid: `-ln(1 - xᵀAx)` (ν = 1).
#[derive(Debug, Clone)]
pub struct Barrier {
    body: ConvexBody,
}

impl Barrier {
    pub fn new(body: ConvexBody) -> Self {
        Self { body }
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    /// Self-concordance parameter ν.
    pub fn parameter(&self) -> f64 {
        match self.body.shape() {
            Shape::Ball { .. } | Shape::Ellipsoid { .. } => 1.0,
            Shape::Box { half_widths } => 2.0 * half_widths.len() as f64,
        }
    }

    /// Barrier value, or `None` outside the open body.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        if !self.body.is_interior(x) {
            return None;
        }
        let v = match self.body.shape() {
            Shape::Ball { radius } => {
                -(radius * radius - x.iter().map(|a| a * a).sum::<f64>()).ln()
            }
            Shape::Box { half_widths } => x
                .iter()
                .zip(half_widths)
                .map(|(xi, h)| -((h - xi).ln() + (h + xi).ln()))
                .sum(),
            Shape::Ellipsoid { form, .. } => -(1.0 - quad_form(form, x)).ln(),
        };
        v.is_finite().then_some(v)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.body.shape() {
            Shape::Ball { radius } => {
                let slack = radius * radius - x.iter().map(|a| a * a).sum::<f64>();
                x.iter().map(|xi| 2.0 * xi / slack).collect()
            }
            Shape::Box { half_widths } => x
                .iter()
                .zip(half_widths)
                .map(|(xi, h)| 1.0 / (h - xi) - 1.0 / (h + xi))
                .collect(),
            Shape::Ellipsoid { form, .. } => {
                let ax = form * DVector::from_column_slice(x);
                let slack = 1.0 - x.iter().zip(ax.iter()).map(|(a, b)| a * b).sum::<f64>();
                ax.iter().map(|v| 2.0 * v / slack).collect()
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        match self.body.shape() {
            Shape::Ball { radius } => {
                let slack = radius * radius - x.iter().map(|a| a * a).sum::<f64>();
                DMatrix::from_fn(d, d, |i, j| {
                    let diag = if i == j { 2.0 / slack } else { 0.0 };
                    diag + 4.0 * x[i] * x[j] / (slack * slack)
                })
            }
            Shape::Box { half_widths } => DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    let h = half_widths[i];
                    1.0 / (h - x[i]).powi(2) + 1.0 / (h + x[i]).powi(2)
                } else {
                    0.0
                }
            }),
            Shape::Ellipsoid { form, .. } => {
                let ax = form * DVector::from_column_slice(x);
                let slack = 1.0 - x.iter().zip(ax.iter()).map(|(a, b)| a * b).sum::<f64>();
                DMatrix::from_fn(d, d, |i, j| {
                    2.0 * form[(i, j)] / slack + 4.0 * ax[i] * ax[j] / (slack * slack)
                })
            }
        }
    }
}

/// Eigenpairs of the barrier Hessian at the current centre, sorted by
/// ascending eigenvalue with each eigenvector's largest-magnitude entry
/// made positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DikinFrame {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

impl DikinFrame {
    pub fn at(barrier: &Barrier, x: &[f64]) -> Result<Self> {
        let h = barrier.hessian(x);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "barrier Hessian is not finite; centre left the body".into(),
            ));
        }
        let eig = SymmetricEigen::new(h);
        let d = x.len();
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
            .map(|i| {
                let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                let lead =
                    v.iter()
                        .copied()
                        .fold(0.0_f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
                if lead < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
                (eig.eigenvalues[i], v)
            })
            .collect();
        if pairs
            .iter()
            .any(|(l, v)| !(*l > 0.0) || !l.is_finite() || !all_finite(v))
        {
            return Err(Error::Numerical(
                "barrier Hessian eigendecomposition produced a non-positive or non-finite pair"
                    .into(),
            ));
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| {
                a.1.iter()
                    .zip(&b.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Which Dikin-ellipsoid boundary point was played.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationToken {
    pub index: usize,
    /// ±1
    pub sign: f64,
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
}

/// One-point estimate `d · loss · ε · λᵢ^{1/2} vᵢ` of the linear loss vector.
pub fn barrier_estimate(loss_value: f64, token: &PerturbationToken) -> Vec<f64> {
    let d = token.eigenvector.len() as f64;
    let c = d * loss_value * token.sign * token.eigenvalue.sqrt();
    token.eigenvector.iter().map(|v| c * v).collect()
}

/// Follow-the-regularized-leader with a self-concordant barrier, exploring
/// along the axes of the Dikin ellipsoid.
#[derive(Debug, Clone)]
pub struct BarrierBandit {
    barrier: Barrier,
    center: Vec<f64>,
    frame: DikinFrame,
    learning_rate: f64,
    loss_bound: f64,
    cumulative: CompensatedVec,
    round: u64,
    loss_violations: u64,
    pending: Option<PerturbationToken>,
}

impl BarrierBandit {
    /// Learning rate `(1/(dL)) √(ν ln T / T)`.
    pub fn default_learning_rate(dim: usize, loss_bound: f64, nu: f64, horizon: u64) -> f64 {
        let t = horizon.max(2) as f64;
        (nu * t.ln() / t).sqrt() / (dim as f64 * loss_bound)
    }

    pub fn new(body: ConvexBody, loss_bound: f64, horizon: u64) -> Result<Self> {
        let barrier = Barrier::new(body);
        let rate = Self::default_learning_rate(
            barrier.body().dim(),
            loss_bound,
            barrier.parameter(),
            horizon,
        );
        Self::with_learning_rate(barrier, loss_bound, rate)
    }

    pub fn with_learning_rate(
        barrier: Barrier,
        loss_bound: f64,
        learning_rate: f64,
    ) -> Result<Self> {
        if !(loss_bound > 0.0) || !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(Error::arg(
                "barrier bandit needs a positive loss bound and finite rate",
            ));
        }
        let d = barrier.body().dim();
        let center = vec![0.0; d];
        let frame = DikinFrame::at(&barrier, &center)?;
        Ok(Self {
            barrier,
            center,
            frame,
            learning_rate,
            loss_bound,
            cumulative: CompensatedVec::zeros(d),
            round: 0,
            loss_violations: 0,
            pending: None,
        })
    }

    pub fn barrier(&self) -> &Barrier {
        &self.barrier
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn frame(&self) -> &DikinFrame {
        &self.frame
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn loss_violations(&self) -> u64 {
        self.loss_violations
    }

    /// Samples `z_t = x_t ± λᵢ^{-1/2} vᵢ` with `i` and the sign uniform.
    pub fn predict<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Vec<f64>, PerturbationToken) {
        let d = self.center.len();
        let index = rng.random_range(0..d);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let eigenvalue = self.frame.eigenvalues[index];
        let eigenvector = self.frame.eigenvectors[index].clone();
        let step = sign / eigenvalue.sqrt();
        let play = self
            .center
            .iter()
            .zip(&eigenvector)
            .map(|(x, v)| x + step * v)
            .collect();
        let token = PerturbationToken {
            index,
            sign,
            eigenvalue,
            eigenvector,
        };
        self.pending = Some(token.clone());
        (play, token)
    }

    /// Feeds back the scalar loss `⟨z_t, g_t⟩`; returns the loss estimate used.
    pub fn update(&mut self, loss_value: f64, token: &PerturbationToken) -> Result<Vec<f64>> {
        if !loss_value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite bandit loss {loss_value}"
            )));
        }
        self.pending = None;
        let mut loss = loss_value;
        if loss.abs() > self.loss_bound {
            self.loss_violations += 1;
            loss = loss.clamp(-self.loss_bound, self.loss_bound);
        }
        let estimate = barrier_estimate(loss, token);
        self.round += 1;
        if estimate.iter().all(|g| *g == 0.0) {
            return Ok(estimate);
        }
        self.cumulative.add_scaled(1.0, &estimate);
        self.center = self.solve_leader()?;
        self.frame = DikinFrame::at(&self.barrier, &self.center)?;
        Ok(estimate)
    }

    /// Damped Newton on `η⟨G, x⟩ + R(x)` warm-started at the current centre.
    fn solve_leader(&self) -> Result<Vec<f64>> {
        let linear: Vec<f64> = self
            .cumulative
            .value()
            .iter()
            .map(|g| self.learning_rate * g)
            .collect();
        let mut x = self.center.clone();
        for _ in 0..NEWTON_MAX_ITERS {
            let grad: Vec<f64> = self
                .barrier
                .gradient(&x)
                .iter()
                .zip(&linear)
                .map(|(a, b)| a + b)
                .collect();
            if norm(&grad) <= NEWTON_TOL {
                return Ok(x);
            }
            let h = self.barrier.hessian(&x);
            let chol = h.cholesky().ok_or_else(|| {
                Error::Numerical("barrier Hessian is not positive definite".into())
            })?;
            let delta = chol.solve(&DVector::from_column_slice(&grad));
            let decrement_sq: f64 = delta.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if !decrement_sq.is_finite() {
                return Err(Error::Numerical("non-finite Newton decrement".into()));
            }
            if decrement_sq <= NEWTON_TOL * NEWTON_TOL {
                return Ok(x);
            }
            let decrement = decrement_sq.sqrt();
            let mut step = if decrement > 0.25 {
                1.0 / (1.0 + decrement)
            } else {
                1.0
            };
            let mut halvings = 0;
            let next = loop {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(delta.iter())
                    .map(|(a, b)| a - step * b)
                    .collect();
                if self.barrier.value(&cand).is_some() {
                    break cand;
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(Error::Numerical(
                        "barrier update backtracking failed after 100 halvings".into(),
                    ));
                }
                step *= 0.5;
            };
            x = next;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn finite_difference_hessian(b: &Barrier, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let h = 1e-5;
        DMatrix::from_fn(d, d, |i, j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (b.gradient(&xp)[i] - b.gradient(&xm)[i]) / (2.0 * h)
        })
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let bodies = vec![
            ConvexBody::unit_ball(3).unwrap(),
            ConvexBody::cuboid(vec![0.5, 0.4, 0.6]).unwrap(),
            ConvexBody::axis_ellipsoid(&[0.9, 0.5, 0.7]).unwrap(),
        ];
        let x = [0.1, -0.2, 0.15];
        for body in bodies {
            let b = Barrier::new(body);
            let f0 = b.value(&x).unwrap();
            let h = 1e-6;
            for i in 0..3 {
                let mut xp = x.to_vec();
                xp[i] += h;
                let fd = (b.value(&xp).unwrap() - f0) / h;
                assert!((fd - b.gradient(&x)[i]).abs() < 1e-4);
            }
            let fdh = finite_difference_hessian(&b, &x);
            assert!((fdh - b.hessian(&x)).amax() < 1e-4);
        }
    }

    #[test]
    fn ball_hessian_at_origin_is_twice_identity() {
        let b = Barrier::new(ConvexBody::unit_ball(2).unwrap());
        let h = b.hessian(&[0.0, 0.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
        let mut bandit = BarrierBandit::new(ConvexBody::unit_ball(2).unwrap(), 1.0, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (z, tok) = bandit.predict(&mut rng);
            assert_abs_diff_eq!(norm(&z), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
            assert_eq!(tok.eigenvalue, 2.0);
        }
    }

    #[test]
    fn estimate_example() {
        let tok = PerturbationToken {
            index: 0,
            sign: 1.0,
            eigenvalue: 2.0,
            eigenvector: vec![1.0, 0.0],
        };
        let g = barrier_estimate(0.5, &tok);
        assert_abs_diff_eq!(g[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn zero_loss_keeps_centre() {
        let mut bandit = BarrierBandit::new(ConvexBody::unit_ball(2).unwrap(), 1.0, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, tok) = bandit.predict(&mut rng);
        let g = bandit.update(0.0, &tok).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
        assert_eq!(bandit.center(), &[0.0, 0.0]);
    }

    #[test]
    fn leader_solves_first_order_condition() {
        let body = ConvexBody::cuboid(vec![0.5, 0.5]).unwrap();
        let mut bandit = BarrierBandit::new(body, 1.0, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = [0.6, -0.8];
        for _ in 0..500 {
            let (z, tok) = bandit.predict(&mut rng);
            assert!(bandit.barrier().body().contains(&z, 1e-9));
            let loss = z[0] * g[0] + z[1] * g[1];
            bandit.update(loss, &tok).unwrap();
        }
        let x = bandit.center().to_vec();
        let grad = bandit.barrier().gradient(&x);
        let lin = bandit.cumulative.value();
        for i in 0..2 {
            assert!((grad[i] + bandit.learning_rate() * lin[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn same_seed_same_perturbations() {
        let run = || {
            let mut bandit =
                BarrierBandit::new(ConvexBody::unit_ball(3).unwrap(), 1.0, 1000).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..50)
                .map(|_| {
                    let (z, tok) = bandit.predict(&mut rng);
                    bandit.update(0.3 * z[0], &tok).unwrap();
                    (tok.index, tok.sign)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
