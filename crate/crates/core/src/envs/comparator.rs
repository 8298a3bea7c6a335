use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Family, LossOracle};
use crate::error::{Error, Result};
use crate::geometry::{sample_sphere, ConvexBody, Shape};
use crate::numeric::{norm, CompensatedSum, CompensatedVec};
use crate::rng::StreamRng;

const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionMode {
    /// The minimizer of the realized cumulative loss within each norm ball.
    #[default]
    BestOffline,
    /// `u = norm · direction/‖direction‖`.
    FixedDirection { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorSpec {
    pub norms: Vec<f64>,
    #[serde(default)]
    pub direction: DirectionMode,
}

/// A resolved comparator with its realized cumulative loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparator {
    pub target_norm: f64,
    pub u: Vec<f64>,
    pub total_loss: f64,
    /// Restarts of the offline search disagreed beyond tolerance.
    pub flagged: bool,
}

/// Projected subgradient settings for the offline comparator search.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSearch {
    pub restarts: usize,
    pub iterations: usize,
    /// Step scale `c` in `c/√k`; defaults to the domain radius.
    pub step: Option<f64>,
    pub relative_tolerance: f64,
}

impl Default for ComparatorSearch {
    fn default() -> Self {
        Self {
            restarts: 10,
            iterations: 10_000,
            step: None,
            relative_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub u: Vec<f64>,
    pub total_loss: f64,
    pub flagged: bool,
    /// Largest relative gap between a restart's best value and the overall best.
    pub spread: f64,
}

/// `Σ_t ℓ_t` with repeated rounds merged and linear rounds summed.
enum Objective {
    Linear(Vec<f64>),
    Grouped(Vec<(LossOracle, f64)>),
}

impl Objective {
    fn new(env: &Environment) -> Self {
        if env.family() == Family::Linear {
            let mut g = CompensatedVec::zeros(env.dim());
            for r in env.rounds() {
                g.add_scaled(1.0, &r.param);
            }
            return Objective::Linear(g.value());
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut groups: Vec<(LossOracle, f64)> = Vec::new();
        for r in env.rounds() {
            let mut key: Vec<u64> = r.param.iter().map(|p| p.to_bits()).collect();
            key.push(r.label.to_bits());
            key.push(r.radius.to_bits());
            match index.get(&key) {
                Some(&i) => groups[i].1 += 1.0,
                None => {
                    index.insert(key, groups.len());
                    groups.push((r.clone(), 1.0));
                }
            }
        }
        Objective::Grouped(groups)
    }

    fn value(&self, u: &[f64]) -> f64 {
        match self {
            Objective::Linear(g) => crate::numeric::dot(g, u),
            Objective::Grouped(groups) => groups
                .iter()
                .map(|(o, c)| c * o.eval(u))
                .collect::<CompensatedSum>()
                .value(),
        }
    }

    fn subgradient(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Objective::Linear(g) => g.clone(),
            Objective::Grouped(groups) => {
                let mut acc = CompensatedVec::zeros(u.len());
                for (o, c) in groups {
                    acc.add_scaled(*c, &o.gradient(u));
                }
                acc.value()
            }
        }
    }
}

/// `{‖u‖ ≤ radius} ∩ body`, either part optional but not both.
struct Domain<'a> {
    body: Option<&'a ConvexBody>,
    radius: Option<f64>,
}

impl Domain<'_> {
    /// Radius of a ball containing the domain.
    fn outer_radius(&self) -> f64 {
        let b = self.body.map_or(f64::INFINITY, |_| 1.0);
        self.radius.unwrap_or(f64::INFINITY).min(b)
    }

    /// The domain is a Euclidean ball of this radius.
    fn as_ball(&self) -> Option<f64> {
        match self.body.map(ConvexBody::shape) {
            None => self.radius,
            Some(Shape::Ball { radius }) => Some(self.radius.map_or(*radius, |r| r.min(*radius))),
            Some(_) => None,
        }
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let clip = |p: Vec<f64>, r: f64| {
            let n = norm(&p);
            if n > r {
                p.iter().map(|v| v * r / n).collect()
            } else {
                p
            }
        };
        if let Some(r) = self.as_ball() {
            return Ok(clip(x.to_vec(), r));
        }
        let body = self.body.expect("non-ball domains have a body");
        let Some(r) = self.radius else {
            return body.project(1.0, x);
        };
        // Dykstra's alternating projections onto the ball and the body.
        let mut y = x.to_vec();
        let mut p = vec![0.0; x.len()];
        let mut q = vec![0.0; x.len()];
        for _ in 0..1000 {
            let a: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi + pi).collect();
            let z = clip(a.clone(), r);
            p = a.iter().zip(&z).map(|(ai, zi)| ai - zi).collect();
            let b: Vec<f64> = z.iter().zip(&q).map(|(zi, qi)| zi + qi).collect();
            let next = body.project(1.0, &b)?;
            q = b.iter().zip(&next).map(|(bi, ni)| bi - ni).collect();
            let moved = norm(&crate::numeric::sub(&next, &y));
            y = next;
            if moved <= 1e-14 {
                break;
            }
        }
        Ok(clip(y, r))
    }
}

/// Minimizes `Σ_t ℓ_t(u)` over `{‖u‖ ≤ norm_target} ∩ body` by projected
/// subgradient descent with random restarts. Linear losses over a ball are
/// solved in closed form.
pub fn best_comparator(
    env: &Environment,
    body: Option<&ConvexBody>,
    norm_target: Option<f64>,
    search: &ComparatorSearch,
    rng: &mut StreamRng,
) -> Result<SearchResult> {
    let d = env.dim();
    if let Some(b) = body {
        if b.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.dim(),
            });
        }
    }
    if let Some(r) = norm_target {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::arg(format!(
                "norm target must be nonnegative, got {r}"
            )));
        }
        if r == 0.0 {
            return Ok(SearchResult {
                u: vec![0.0; d],
                total_loss: 0.0,
                flagged: false,
                spread: 0.0,
            });
        }
    }
    if body.is_none() && norm_target.is_none() {
        return Err(Error::arg(
            "comparator search needs a body or a norm target",
        ));
    }
    let domain = Domain {
        body,
        radius: norm_target,
    };
    let objective = Objective::new(env);

    if let (Objective::Linear(g), Some(r)) = (&objective, domain.as_ball()) {
        let n = norm(g);
        let u = if n > 0.0 {
            g.iter().map(|x| -r * x / n).collect()
        } else {
            vec![0.0; d]
        };
        let total_loss = env.total_loss(&u);
        return Ok(SearchResult {
            u,
            total_loss,
            flagged: false,
            spread: 0.0,
        });
    }

    let radius = domain.outer_radius();
    let c = search.step.unwrap_or(radius);
    let mut results: Vec<(f64, Vec<f64>)> = Vec::with_capacity(search.restarts.max(1));
    for restart in 0..search.restarts.max(1) {
        let start = if restart == 0 {
            vec![0.0; d]
        } else {
            let dir = sample_sphere(d, rng)?.into_vec();
            let rad = radius * rng.random::<f64>().powf(1.0 / d as f64);
            domain.project(&dir.iter().map(|x| x * rad).collect::<Vec<_>>())?
        };
        let mut x = start;
        let mut best = (objective.value(&x), x.clone());
        let mut still = 0;
        for k in 1..=search.iterations {
            let g = objective.subgradient(&x);
            let gn = norm(&g);
            if gn == 0.0 {
                break;
            }
            let step = c / (k as f64).sqrt() / gn;
            let moved: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let next = domain.project(&moved)?;
            let shift = norm(&crate::numeric::sub(&next, &x));
            x = next;
            let f = objective.value(&x);
            if f < best.0 {
                best = (f, x.clone());
            }
            if shift <= 1e-15 * (1.0 + norm(&x)) {
                still += 1;
                if still >= 20 {
                    break;
                }
            } else {
                still = 0;
            }
        }
        results.push(best);
    }
    let (best_value, best_u) = results
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .cloned()
        .expect("at least one restart");
    let scale = best_value.abs().max(1.0);
    let spread = results
        .iter()
        .map(|(f, _)| (f - best_value) / scale)
        .fold(0.0, f64::max);
    let total_loss = env.total_loss(&best_u);
    Ok(SearchResult {
        u: best_u,
        total_loss,
        flagged: spread > search.relative_tolerance,
        spread,
    })
}

/// Materializes the configured comparators against a realized environment.
pub fn resolve_comparators(
    env: &Environment,
    body: Option<&ConvexBody>,
    spec: &ComparatorSpec,
    search: &ComparatorSearch,
    rng: &mut StreamRng,
) -> Result<Vec<Comparator>> {
    spec.norms
        .iter()
        .map(|&r| {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::config(format!(
                    "comparator norm must be nonnegative, got {r}"
                )));
            }
            match &spec.direction {
                DirectionMode::BestOffline => {
                    let res = best_comparator(env, body, Some(r), search, rng)?;
                    Ok(Comparator {
                        target_norm: r,
                        u: res.u,
                        total_loss: res.total_loss,
                        flagged: res.flagged,
                    })
                }
                DirectionMode::FixedDirection { direction } => {
                    if direction.len() != env.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: env.dim(),
                            got: direction.len(),
                        });
                    }
                    let n = norm(direction);
                    if !(n > 0.0) {
                        return Err(Error::config("fixed comparator direction must be nonzero"));
                    }
                    let u: Vec<f64> = direction.iter().map(|x| r * x / n).collect();
                    if let Some(b) = body {
                        if !b.contains(&u, MEMBERSHIP_TOL) {
                            return Err(Error::config(format!(
                                "comparator of norm {r} lies outside the decision set"
                            )));
                        }
                    }
                    Ok(Comparator {
                        target_norm: r,
                        total_loss: env.total_loss(&u),
                        u,
                        flagged: false,
                    })
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvSpec, ScheduleSpec};
    use rand::SeedableRng;

    fn rng() -> StreamRng {
        StreamRng::seed_from_u64(0)
    }

    #[test]
    fn fixed_linear_on_ball() {
        let mut s = EnvSpec::new(Family::Linear, ScheduleSpec::Fixed, 2, 1.0);
        s.params.vector = Some(vec![1.0, 0.0]);
        let env = Environment::generate(&s, 50, 0).unwrap();
        let ball = ConvexBody::unit_ball(2).unwrap();
        let r = best_comparator(
            &env,
            Some(&ball),
            None,
            &ComparatorSearch::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(r.u, vec![-1.0, 0.0]);
        assert_eq!(r.total_loss, -50.0);
        let r = best_comparator(
            &env,
            None,
            Some(0.0),
            &ComparatorSearch::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!((r.u.clone(), r.total_loss), (vec![0.0, 0.0], 0.0));
    }

    #[test]
    fn quadratic_minimizer_agrees_with_grid() {
        let mut s = EnvSpec::new(Family::Quadratic, ScheduleSpec::Fixed, 2, 4.0);
        s.params.vector = Some(vec![0.3, -0.5]);
        let env = Environment::generate(&s, 20, 0).unwrap();
        let r = best_comparator(
            &env,
            None,
            Some(3.0),
            &ComparatorSearch::default(),
            &mut rng(),
        )
        .unwrap();
        assert!((r.u[0] - 0.3).abs() < 1e-3 && (r.u[1] + 0.5).abs() < 1e-3);
        assert!((r.total_loss + 20.0 * 0.34).abs() < 1e-4);
        let mut grid_best = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let u = [-1.0 + i as f64 / 100.0, -1.0 + j as f64 / 100.0];
                grid_best = grid_best.min(env.total_loss(&u));
            }
        }
        assert!(r.total_loss <= grid_best + 1e-9);
    }

    #[test]
    fn box_domain_uses_alternating_projection() {
        let mut s = EnvSpec::new(Family::Linear, ScheduleSpec::Fixed, 2, 1.0);
        s.params.vector = Some(vec![-0.6, -0.8]);
        let env = Environment::generate(&s, 10, 0).unwrap();
        let cube = ConvexBody::cuboid(vec![0.5, 0.5]).unwrap();
        let r = best_comparator(
            &env,
            Some(&cube),
            Some(0.25),
            &ComparatorSearch::default(),
            &mut rng(),
        )
        .unwrap();
        assert!((r.u[0] - 0.15).abs() < 1e-3 && (r.u[1] - 0.2).abs() < 1e-3);
        let r = best_comparator(
            &env,
            Some(&cube),
            None,
            &ComparatorSearch::default(),
            &mut rng(),
        )
        .unwrap();
        assert!((r.u[0] - 0.5).abs() < 1e-6 && (r.u[1] - 0.5).abs() < 1e-6);
        assert!(!r.flagged);
    }

    #[test]
    fn fixed_direction_comparators() {
        let mut s = EnvSpec::new(Family::Hinge, ScheduleSpec::Fixed, 2, 1.0);
        s.params.vector = Some(vec![0.0, 1.0]);
        let env = Environment::generate(&s, 10, 0).unwrap();
        let spec = ComparatorSpec {
            norms: vec![0.0, 0.5, 2.0],
            direction: DirectionMode::FixedDirection {
                direction: vec![0.0, 3.0],
            },
        };
        let cs = resolve_comparators(&env, None, &spec, &ComparatorSearch::default(), &mut rng())
            .unwrap();
        assert_eq!(cs[1].u, vec![0.0, 0.5]);
        assert_eq!(cs[1].total_loss, -5.0);
        assert_eq!(cs[2].total_loss, -10.0);
        let ball = ConvexBody::unit_ball(2).unwrap();
        assert!(resolve_comparators(
            &env,
            Some(&ball),
            &spec,
            &ComparatorSearch::default(),
            &mut rng()
        )
        .is_err());
    }
}
