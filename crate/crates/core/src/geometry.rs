//! Convex decision sets, Euclidean projections and sphere sampling.
//!
//! Every supported body is sandwiched between two origin-centred balls,
//! `inner_radius * B ⊆ W ⊆ B`, where `B` is the Euclidean unit ball. The
//! inner radius is exact for all three kinds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, norm};

const ELLIPSOID_TOL: f64 = 1e-10;
const ELLIPSOID_MAX_ITERS: usize = 100;
/// Slack allowed when checking that a configured body fits inside the unit ball.
const CONTAINMENT_SLACK: f64 = 1e-12;

/// A point on the Euclidean unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDirection(Vec<f64>);

impl UnitDirection {
    /// Normalizes `v`; fails on the zero vector.
    pub fn from_vec(mut v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::arg("cannot normalize a zero or non-finite vector"));
        }
        v.iter_mut().for_each(|x| *x /= n);
        Ok(Self(v))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Uniform draw from the unit sphere in `d` dimensions (normalized Gaussian).
pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<UnitDirection> {
    if d == 0 {
        return Err(Error::InvalidDimension(d));
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 && n.is_finite() {
            return Ok(UnitDirection(v.into_iter().map(|x| x / n).collect()));
        }
    }
}

/// Serialized description of a body: `{kind, dim, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub kind: BodyKind,
    pub dim: usize,
    #[serde(default)]
    pub params: BodyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Ball,
    Box,
    Ellipsoid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Either one value per axis or a single value broadcast to all axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<Vec<f64>>,
    /// Axis-aligned ellipsoid semi-axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<Vec<f64>>,
    /// Quadratic form `A` of `{x : xᵀAx ≤ 1}`, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl BodySpec {
    pub fn ball(dim: usize) -> Self {
        Self {
            kind: BodyKind::Ball,
            dim,
            params: BodyParams::default(),
        }
    }

    pub fn build(&self) -> Result<ConvexBody> {
        let d = self.dim;
        match self.kind {
            BodyKind::Ball => ConvexBody::ball(d, self.params.radius.unwrap_or(1.0)),
            BodyKind::Box => {
                let hw = self
                    .params
                    .half_widths
                    .as_ref()
                    .ok_or_else(|| Error::config("box body requires params.half_widths"))?;
                let hw = match hw.len() {
                    1 => vec![hw[0]; d],
                    n if n == d => hw.clone(),
                    n => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: n,
                        })
                    }
                };
                ConvexBody::cuboid(hw)
            }
            BodyKind::Ellipsoid => match (&self.params.semi_axes, &self.params.matrix) {
                (Some(axes), None) => {
                    if axes.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: axes.len(),
                        });
                    }
                    ConvexBody::axis_ellipsoid(axes)
                }
                (None, Some(rows)) => {
                    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                        return Err(Error::config("ellipsoid matrix must be dim x dim"));
                    }
                    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                    ConvexBody::ellipsoid(m)
                }
                _ => Err(Error::config(
                    "ellipsoid body requires exactly one of params.semi_axes or params.matrix",
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball {
        radius: f64,
    },
    Box {
        half_widths: Vec<f64>,
    },
    /// `{x : xᵀAx ≤ 1}` with the eigendecomposition of `A` cached.
    Ellipsoid {
        form: DMatrix<f64>,
        eigenvalues: DVector<f64>,
        eigenvectors: DMatrix<f64>,
    },
}

/// A compact convex set containing the origin in its interior, inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexBody {
    shape: Shape,
    dim: usize,
    inner_radius: f64,
}

impl ConvexBody {
    pub fn unit_ball(dim: usize) -> Result<Self> {
        Self::ball(dim, 1.0)
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(radius > 0.0 && radius <= 1.0 + CONTAINMENT_SLACK) {
            return Err(Error::arg(format!(
                "ball radius must lie in (0, 1], got {radius}"
            )));
        }
        Ok(Self {
            shape: Shape::Ball { radius },
            dim,
            inner_radius: radius,
        })
    }

    pub fn cuboid(half_widths: Vec<f64>) -> Result<Self> {
        let dim = half_widths.len();
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if half_widths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::arg("box half-widths must be positive"));
        }
        // The farthest point of the box is its corner.
        if norm(&half_widths) > 1.0 + CONTAINMENT_SLACK {
            return Err(Error::arg(
                "box does not fit inside the unit ball (corner norm exceeds 1)",
            ));
        }
        let inner_radius = half_widths.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            shape: Shape::Box { half_widths },
            dim,
            inner_radius,
        })
    }

    pub fn axis_ellipsoid(semi_axes: &[f64]) -> Result<Self> {
        if semi_axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::arg("ellipsoid semi-axes must be positive"));
        }
        let d = semi_axes.len();
        let form = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0 / (semi_axes[i] * semi_axes[i])
            } else {
                0.0
            }
        });
        Self::ellipsoid(form)
    }

    pub fn ellipsoid(form: DMatrix<f64>) -> Result<Self> {
        let dim = form.nrows();
        if dim == 0 || form.ncols() != dim {
            return Err(Error::InvalidDimension(dim));
        }
        if form.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("ellipsoid form has non-finite entries"));
        }
        let sym = (&form + form.transpose()) * 0.5;
        if (&sym - &form).amax() > 1e-12 * form.amax().max(1.0) {
            return Err(Error::arg("ellipsoid form must be symmetric"));
        }
        let eig = SymmetricEigen::new(sym.clone());
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        if !(lmin > 0.0) {
            return Err(Error::arg("ellipsoid form must be positive definite"));
        }
        // Outer radius is 1/sqrt(lmin); it must not exceed 1.
        if lmin < 1.0 - CONTAINMENT_SLACK {
            return Err(Error::arg(
                "ellipsoid does not fit inside the unit ball (smallest eigenvalue below 1)",
            ));
        }
        Ok(Self {
            shape: Shape::Ellipsoid {
                form: sym,
                eigenvalues: eig.eigenvalues,
                eigenvectors: eig.eigenvectors,
            },
            dim,
            inner_radius: 1.0 / lmax.sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Radius of the largest origin-centred ball inside the body (`1/c`).
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// The sandwich constant `c`.
    pub fn c(&self) -> f64 {
        1.0 / self.inner_radius
    }

    fn check_dim(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection of `point` onto `shrink * body`.
    pub fn project(&self, shrink: f64, point: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(point)?;
        if !(0.0..=1.0).contains(&shrink) {
            return Err(Error::arg(format!(
                "shrink must lie in [0, 1], got {shrink}"
            )));
        }
        if shrink == 0.0 {
            return Ok(vec![0.0; self.dim]);
        }
        match &self.shape {
            Shape::Ball { radius } => {
                let r = shrink * radius;
                let n = norm(point);
                if n <= r {
                    Ok(point.to_vec())
                } else {
                    Ok(point.iter().map(|x| x * r / n).collect())
                }
            }
            Shape::Box { half_widths } => Ok(point
                .iter()
                .zip(half_widths)
                .map(|(x, h)| x.clamp(-shrink * h, shrink * h))
                .collect()),
            Shape::Ellipsoid {
                form,
                eigenvalues,
                eigenvectors,
            } => project_ellipsoid(form, eigenvalues, eigenvectors, shrink, point),
        }
    }

    /// Largest `r` such that `r * direction / ‖direction‖` lies in the body.
    pub fn radial_scale(&self, direction: &[f64]) -> Result<f64> {
        self.check_dim(direction)?;
        let n = norm(direction);
        if !(n > 0.0) {
            return Err(Error::arg("radial_scale needs a nonzero direction"));
        }
        let u: Vec<f64> = direction.iter().map(|x| x / n).collect();
        Ok(match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::Box { half_widths } => u
                .iter()
                .zip(half_widths)
                .filter(|(ui, _)| **ui != 0.0)
                .map(|(ui, h)| h / ui.abs())
                .fold(f64::INFINITY, f64::min),
            Shape::Ellipsoid { form, .. } => 1.0 / quad_form(form, &u).sqrt(),
        })
    }

    /// True iff `point` is within Euclidean distance `tolerance` of the body.
    pub fn contains(&self, point: &[f64], tolerance: f64) -> bool {
        self.contains_scaled(1.0, point, tolerance)
    }

    /// True iff `point` is within `tolerance` of `shrink * body`.
    pub fn contains_scaled(&self, shrink: f64, point: &[f64], tolerance: f64) -> bool {
        if point.len() != self.dim || !point.iter().all(|x| x.is_finite()) {
            return false;
        }
        match &self.shape {
            Shape::Ball { radius } => norm(point) <= shrink * radius + tolerance,
            Shape::Box { half_widths } => {
                let excess: Vec<f64> = point
                    .iter()
                    .zip(half_widths)
                    .map(|(x, h)| (x.abs() - shrink * h).max(0.0))
                    .collect();
                norm(&excess) <= tolerance
            }
            Shape::Ellipsoid { form, .. } => {
                if quad_form(form, point) <= shrink * shrink {
                    return true;
                }
                match self.project(shrink.clamp(0.0, 1.0), point) {
                    Ok(p) => {
                        let diff: Vec<f64> = point.iter().zip(&p).map(|(a, b)| a - b).collect();
                        norm(&diff) <= tolerance
                    }
                    Err(_) => false,
                }
            }
        }
    }

    /// True iff `point` lies strictly inside the body.
    pub fn is_interior(&self, point: &[f64]) -> bool {
        if point.len() != self.dim || !point.iter().all(|x| x.is_finite()) {
            return false;
        }
        match &self.shape {
            Shape::Ball { radius } => dot(point, point) < radius * radius,
            Shape::Box { half_widths } => point.iter().zip(half_widths).all(|(x, h)| x.abs() < *h),
            Shape::Ellipsoid { form, .. } => quad_form(form, point) < 1.0,
        }
    }
}

pub(crate) fn quad_form(form: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += form[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// Projection onto `{x : xᵀAx ≤ s²}` by a Newton solve on the Lagrange multiplier.
///
/// In the eigenbasis of `A` the KKT point is `x_i = p_i / (1 + μ λ_i)`. Newton
/// runs on the secular form `1/‖A^{1/2}x(μ)‖ − 1/s`, which is concave and
/// increasing in `μ`, so iterates started at 0 approach the root from below.
fn project_ellipsoid(
    form: &DMatrix<f64>,
    eigenvalues: &DVector<f64>,
    eigenvectors: &DMatrix<f64>,
    shrink: f64,
    point: &[f64],
) -> Result<Vec<f64>> {
    if quad_form(form, point) <= shrink * shrink {
        return Ok(point.to_vec());
    }
    let d = point.len();
    let p = eigenvectors.transpose() * DVector::from_column_slice(point);
    let q = |mu: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut deriv = 0.0;
        for i in 0..d {
            let l = eigenvalues[i];
            let denom = 1.0 + mu * l;
            val += l * p[i] * p[i] / (denom * denom);
            deriv += -2.0 * l * l * p[i] * p[i] / (denom * denom * denom);
        }
        (val, deriv)
    };
    let target = shrink;
    let mut mu = 0.0_f64;
    let mut converged = false;
    for _ in 0..ELLIPSOID_MAX_ITERS {
        let (qv, qd) = q(mu);
        let root = qv.sqrt();
        if (root - target).abs() <= ELLIPSOID_TOL * target {
            converged = true;
            break;
        }
        // psi(mu) = 1/sqrt(q) - 1/s, psi' = -q'/(2 q^{3/2})
        let psi = 1.0 / root - 1.0 / target;
        let dpsi = -qd / (2.0 * qv * root);
        if !(dpsi > 0.0) || !dpsi.is_finite() {
            return Err(Error::Numerical(
                "ellipsoid projection: degenerate Newton derivative".into(),
            ));
        }
        mu = (mu - psi / dpsi).max(0.0);
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "ellipsoid projection did not converge in {ELLIPSOID_MAX_ITERS} iterations"
        )));
    }
    let x_eig = DVector::from_iterator(d, (0..d).map(|i| p[i] / (1.0 + mu * eigenvalues[i])));
    let mut x: Vec<f64> = (eigenvectors * x_eig).iter().copied().collect();
    // Pull the point onto the boundary if round-off left it slightly outside.
    let qx = quad_form(form, &x);
    if qx > shrink * shrink {
        let s = shrink / qx.sqrt();
        x.iter_mut().for_each(|xi| *xi *= s);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxed(h: &[f64]) -> ConvexBody {
        ConvexBody::cuboid(h.to_vec()).unwrap()
    }

    fn ellipse() -> ConvexBody {
        ConvexBody::axis_ellipsoid(&[0.9, 0.4]).unwrap()
    }

    fn rotated_ellipse() -> ConvexBody {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        ConvexBody::ellipsoid(m).unwrap()
    }

    #[test]
    fn sphere_zero_dim_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_sphere(0, &mut rng),
            Err(Error::InvalidDimension(0))
        ));
    }

    #[test]
    fn sphere_one_dim_is_a_fair_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut plus = 0usize;
        for _ in 0..n {
            let s = sample_sphere(1, &mut rng).unwrap();
            let x = s.coords()[0];
            assert!(x == 1.0 || x == -1.0);
            if x > 0.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.01, "freq {freq}");
    }

    #[test]
    fn sphere_first_moment_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let d = 4;
        let mut mean = vec![0.0; d];
        for _ in 0..n {
            let s = sample_sphere(d, &mut rng).unwrap();
            for (m, x) in mean.iter_mut().zip(s.coords()) {
                *m += x / n as f64;
            }
        }
        let tol = 4.0 / (n as f64).sqrt();
        for m in mean {
            assert!(m.abs() <= tol, "{m}");
        }
    }

    #[test]
    fn projection_examples() {
        let ball = ConvexBody::unit_ball(2).unwrap();
        let p = ball.project(1.0, &[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.8, epsilon = 1e-15);
        assert_eq!(ball.project(0.5, &[0.1, 0.1]).unwrap(), vec![0.1, 0.1]);
        let b = boxed(&[0.5, 0.5]);
        assert_eq!(b.project(1.0, &[0.7, -0.2]).unwrap(), vec![0.5, -0.2]);
        assert_eq!(ball.project(0.0, &[0.7, -0.2]).unwrap(), vec![0.0, 0.0]);
        assert!(ball.project(1.5, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn radial_scale_examples() {
        let ball = ConvexBody::unit_ball(3).unwrap();
        assert_eq!(ball.radial_scale(&[0.3, -2.0, 1.0]).unwrap(), 1.0);
        let b = boxed(&[0.5, 0.5]);
        assert_abs_diff_eq!(b.radial_scale(&[1.0, 0.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            b.radial_scale(&[1.0, 1.0]).unwrap(),
            0.5 * 2f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(matches!(
            b.radial_scale(&[0.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
        let e = ellipse();
        assert_abs_diff_eq!(e.radial_scale(&[0.0, 1.0]).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn membership_examples() {
        let ball = ConvexBody::unit_ball(2).unwrap();
        assert!(ball.contains(&[0.0, 0.0], 0.0));
        assert!(!ball.contains(&[1.0 + 1e-6, 0.0], 1e-9));
        assert!(ball.contains(&[1.0 + 1e-6, 0.0], 1e-3));
    }

    #[test]
    fn construction_enforces_unit_ball_containment() {
        assert!(ConvexBody::cuboid(vec![0.8, 0.8]).is_err());
        assert!(ConvexBody::ball(2, 1.2).is_err());
        assert!(ConvexBody::axis_ellipsoid(&[1.1, 0.5]).is_err());
        assert!(
            ConvexBody::ellipsoid(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err()
        );
        let b = boxed(&[0.6, 0.3]);
        assert_abs_diff_eq!(b.inner_radius(), 0.3);
        assert_abs_diff_eq!(ellipse().inner_radius(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn body_spec_round_trip() {
        let spec: BodySpec =
            toml::from_str("kind = \"box\"\ndim = 3\nparams = { half_widths = [0.5] }").unwrap();
        let body = spec.build().unwrap();
        assert_eq!(body.dim(), 3);
        assert_abs_diff_eq!(body.inner_radius(), 0.5);
    }

    fn bodies() -> Vec<ConvexBody> {
        vec![
            ConvexBody::unit_ball(2).unwrap(),
            ConvexBody::ball(2, 0.7).unwrap(),
            boxed(&[0.5, 0.6]),
            ellipse(),
            rotated_ellipse(),
        ]
    }

    #[test]
    fn inner_ball_is_contained() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for body in bodies() {
            for _ in 0..10_000 {
                let u = sample_sphere(2, &mut rng).unwrap();
                let p: Vec<f64> = u.coords().iter().map(|x| x * body.inner_radius()).collect();
                assert!(body.contains(&p, 1e-9));
            }
        }
    }

    #[test]
    fn projection_is_optimal_against_random_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for body in bodies() {
            for shrink in [1.0, 0.6] {
                let p = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let proj = body.project(shrink, &p).unwrap();
                let best = norm(&crate::numeric::sub(&p, &proj));
                let mut checked = 0;
                while checked < 10_000 {
                    let q = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                    if !body.contains_scaled(shrink, &q, 0.0) {
                        continue;
                    }
                    checked += 1;
                    assert!(best <= norm(&crate::numeric::sub(&p, &q)) + 1e-8);
                }
            }
        }
    }

    #[test]
    fn ellipsoid_projection_matches_brute_force() {
        let body = rotated_ellipse();
        let p = [1.3, -0.7];
        let proj = body.project(1.0, &p).unwrap();
        // Scan the boundary parameterized by angle.
        let mut best = f64::INFINITY;
        for k in 0..200_000 {
            let th = k as f64 / 200_000.0 * std::f64::consts::TAU;
            let dir = [th.cos(), th.sin()];
            let r = body.radial_scale(&dir).unwrap();
            let q = [r * dir[0], r * dir[1]];
            best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
        }
        let got = ((p[0] - proj[0]).powi(2) + (p[1] - proj[1]).powi(2)).sqrt();
        assert!((got - best).abs() < 1e-6, "{got} vs {best}");
    }

    proptest! {
        #[test]
        fn projection_lands_in_scaled_body_and_is_idempotent(
            which in 0usize..5,
            shrink in 0.0f64..=1.0,
            x in -5.0f64..5.0,
            y in -5.0f64..5.0,
        ) {
            let body = &bodies()[which];
            let p = body.project(shrink, &[x, y]).unwrap();
            prop_assert!(body.contains_scaled(shrink, &p, 1e-9));
            let pp = body.project(shrink, &p).unwrap();
            prop_assert!((pp[0] - p[0]).abs() <= 1e-9 && (pp[1] - p[1]).abs() <= 1e-9);
        }

        #[test]
        fn sphere_draws_have_unit_norm(d in 1usize..12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_sphere(d, &mut rng).unwrap();
            prop_assert!((norm(s.coords()) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn star_shaped_about_origin(which in 0usize..5, a in 0.0f64..=1.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let body = &bodies()[which];
            if body.contains(&[x, y], 0.0) {
                prop_assert!(body.contains(&[a * x, a * y], 1e-12));
            }
        }
    }
}
