use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Family, LossOracle, MeteredOracle};
use crate::error::{Error, Result};
use crate::geometry::sample_sphere;
use crate::numeric::{dot, norm, CompensatedSum, CompensatedVec};
use crate::rng::{SeedStreams, Stream};

const SCHEDULE_MAGIC: &[u8; 8] = b"CABOSCH1";

/// How a schedule moves the round parameters over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Fixed,
    /// The base vector turns through a full circle in the first coordinate
    /// plane every `period` rounds.
    Rotating {
        period: u64,
    },
    /// Independent perturbations of the base vector every round.
    Stochastic,
    /// Stochastic parameters whose sign is flipped against the running mean
    /// of a simulated gradient-descent learner. The simulation is part of
    /// schedule generation, so the schedule stays oblivious.
    AdaptiveSign,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Uniform on the sphere of radius `noise`.
    #[default]
    Sphere,
    /// Uniform on the sphere of radius `noise` within the hyperplane
    /// orthogonal to the base vector.
    Orthogonal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    /// `g`, `x` or `m` before perturbation. Defaults to `L e₁` (to `e₁`
    /// for the quadratic family), or to zero for stochastic schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    /// Probability of the label `+1`. Defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_prob: Option<f64>,
    /// Perturbation magnitude. Defaults to `L` around a zero base and to 0 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    /// Huber radius of the quadratic family; defaults to `L/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub huber_radius: Option<f64>,
}

/// Environment description: `{family, schedule, d, T, L, beta?, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub family: Family,
    pub schedule: ScheduleSpec,
    pub d: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Salt mixed with the run seed; two environments with different salts
    /// draw independent schedules from the same run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: FamilyParams,
}

impl EnvSpec {
    pub fn new(family: Family, schedule: ScheduleSpec, d: usize, lipschitz: f64) -> Self {
        Self {
            name: None,
            family,
            schedule,
            d,
            horizon: None,
            lipschitz,
            beta: None,
            seed: None,
            params: FamilyParams::default(),
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let kind = match &self.schedule {
                ScheduleSpec::Fixed => "fixed".to_string(),
                ScheduleSpec::Rotating { period } => format!("rotating{period}"),
                ScheduleSpec::Stochastic => "stochastic".to_string(),
                ScheduleSpec::AdaptiveSign => "adaptive_sign".to_string(),
            };
            format!("{}-{}-d{}", self.family.name(), kind, self.d)
        })
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(self.lipschitz > 0.0) || !self.lipschitz.is_finite() {
            return Err(Error::config(format!(
                "L must be positive, got {}",
                self.lipschitz
            )));
        }
        let p = &self.params;
        if let Some(v) = &p.vector {
            if v.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: v.len(),
                });
            }
            if !crate::numeric::all_finite(v) {
                return Err(Error::config("environment vector must be finite"));
            }
        }
        if let Some(q) = p.label_prob {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::config(format!(
                    "label_prob must lie in [0, 1], got {q}"
                )));
            }
        }
        if let Some(n) = p.noise {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::config(format!("noise must be nonnegative, got {n}")));
            }
        }
        if let ScheduleSpec::Rotating { period } = self.schedule {
            if period == 0 {
                return Err(Error::config("rotation period must be positive"));
            }
            if self.d < 2 {
                return Err(Error::config("rotating schedules need d >= 2"));
            }
        }
        if p.noise_kind == NoiseKind::Orthogonal && self.d < 2 {
            return Err(Error::config("orthogonal noise needs d >= 2"));
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) {
                return Err(Error::config(format!("beta must be nonnegative, got {b}")));
            }
        }
        Ok(())
    }

    fn stochastic(&self) -> bool {
        matches!(
            self.schedule,
            ScheduleSpec::Stochastic | ScheduleSpec::AdaptiveSign
        )
    }

    fn base_vector(&self) -> Vec<f64> {
        if let Some(v) = &self.params.vector {
            return v.clone();
        }
        let mut v = vec![0.0; self.d];
        if !self.stochastic() {
            v[0] = match self.family {
                Family::Quadratic => 1.0,
                _ => self.lipschitz,
            };
        }
        v
    }

    fn noise(&self, base: &[f64]) -> f64 {
        if !self.stochastic() {
            return 0.0;
        }
        self.params.noise.unwrap_or(if norm(base) == 0.0 {
            self.lipschitz
        } else {
            0.0
        })
    }
}

/// A fully realized, immutable loss sequence.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    horizon: u64,
    smoothness: Option<f64>,
    rounds: Vec<LossOracle>,
    hash: String,
}

fn rotate(base: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut v = base.to_vec();
    v[0] = c * base[0] - s * base[1];
    v[1] = s * base[0] + c * base[1];
    v
}

impl Environment {
    /// Realizes the schedule for `horizon` rounds from the run seed.
    pub fn generate(spec: &EnvSpec, horizon: u64, seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = spec.d;
        let streams = SeedStreams::salted(seed, spec.seed.unwrap_or(0));
        let mut rng = streams.stream(Stream::Environment);
        let mut probe_rng = streams.stream(Stream::ScheduleProbe);
        let base = spec.base_vector();
        let base_norm = norm(&base);
        let noise = spec.noise(&base);
        if spec.params.noise_kind == NoiseKind::Orthogonal && noise > 0.0 && base_norm == 0.0 {
            return Err(Error::config(
                "orthogonal noise needs a nonzero base vector",
            ));
        }
        let label_prob = spec.params.label_prob.unwrap_or(1.0);
        let radius = match spec.family {
            Family::Quadratic => {
                let r = spec.params.huber_radius.unwrap_or(spec.lipschitz / 2.0);
                if !(r > 0.0) {
                    return Err(Error::config(format!(
                        "huber_radius must be positive, got {r}"
                    )));
                }
                r
            }
            _ => 0.0,
        };

        // Simulated learner for adaptive_sign: projected gradient descent on
        // the unit ball, step 1/(L√T).
        let probe_step = 1.0 / (spec.lipschitz * (horizon.max(1) as f64).sqrt());
        let mut probe = vec![0.0; d];
        let mut probe_mean = CompensatedVec::zeros(d);

        let mut rounds = Vec::with_capacity(horizon as usize);
        for t in 0..horizon {
            let mut v = match spec.schedule {
                ScheduleSpec::Rotating { period } => rotate(
                    &base,
                    2.0 * std::f64::consts::PI * (t % period) as f64 / period as f64,
                ),
                _ => base.clone(),
            };
            if noise > 0.0 {
                let zeta = match spec.params.noise_kind {
                    NoiseKind::Sphere => sample_sphere(d, &mut rng)?.into_vec(),
                    NoiseKind::Orthogonal => loop {
                        let raw = sample_sphere(d, &mut rng)?.into_vec();
                        let along = dot(&raw, &base) / (base_norm * base_norm);
                        let perp: Vec<f64> =
                            raw.iter().zip(&base).map(|(r, b)| r - along * b).collect();
                        let n = norm(&perp);
                        if n > 1e-8 {
                            break perp.into_iter().map(|x| x / n).collect();
                        }
                    },
                };
                v.iter_mut().zip(&zeta).for_each(|(a, z)| *a += noise * z);
            }
            let label = match spec.family {
                Family::Hinge | Family::LogisticShifted if label_prob < 1.0 => {
                    if rng.random::<f64>() < label_prob {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => 1.0,
            };
            if spec.schedule == ScheduleSpec::AdaptiveSign {
                let mean = probe_mean.value();
                let count = t.max(1) as f64;
                let score = dot(&v, &mean) / count;
                let sign = if score > 0.0 {
                    1.0
                } else if score < 0.0 {
                    -1.0
                } else if probe_rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                };
                v.iter_mut().for_each(|x| *x *= sign);
            }
            let oracle = match spec.family {
                Family::Linear => LossOracle::linear(v),
                Family::AbsLinear => LossOracle::abs_linear(v),
                Family::Hinge => LossOracle::hinge(v, label),
                Family::LogisticShifted => LossOracle::logistic(v, label),
                Family::Quadratic => LossOracle::quadratic(v, radius),
            };
            if spec.schedule == ScheduleSpec::AdaptiveSign {
                let g = oracle.gradient(&probe);
                probe_mean.add_scaled(1.0, &probe);
                let moved: Vec<f64> = probe
                    .iter()
                    .zip(&g)
                    .map(|(x, gi)| x - probe_step * gi)
                    .collect();
                let n = norm(&moved);
                probe = if n > 1.0 {
                    moved.iter().map(|x| x / n).collect()
                } else {
                    moved
                };
            }
            let l = oracle.lipschitz();
            if l > spec.lipschitz * (1.0 + 1e-9) {
                return Err(Error::config(format!(
                    "round {} has Lipschitz constant {l} above the declared L = {}",
                    t + 1,
                    spec.lipschitz
                )));
            }
            rounds.push(oracle);
        }

        let actual_smoothness = rounds
            .iter()
            .map(LossOracle::smoothness)
            .try_fold(0.0_f64, |acc, s| s.map(|b| acc.max(b)));
        let smoothness = match (spec.beta, actual_smoothness) {
            (Some(b), Some(actual)) if b + 1e-12 < actual => {
                return Err(Error::config(format!(
                    "declared beta = {b} is below the family's smoothness {actual}"
                )))
            }
            (Some(_), None) if horizon > 0 => {
                return Err(Error::config(format!(
                    "family {} is not smooth but beta was declared",
                    spec.family.name()
                )))
            }
            (Some(b), _) => Some(b),
            (None, s) => s,
        };
        Self::from_parts(spec.clone(), horizon, smoothness, rounds)
    }

    /// Wraps an explicit loss sequence.
    pub fn from_rounds(spec: EnvSpec, rounds: Vec<LossOracle>) -> Result<Self> {
        spec.validate()?;
        for (t, r) in rounds.iter().enumerate() {
            if r.dim() != spec.d || r.family != spec.family {
                return Err(Error::config(format!(
                    "round {} does not match the environment family or dimension",
                    t + 1
                )));
            }
        }
        let smoothness = spec.beta.or_else(|| {
            rounds
                .iter()
                .map(LossOracle::smoothness)
                .try_fold(0.0_f64, |acc, s| s.map(|b| acc.max(b)))
        });
        let horizon = rounds.len() as u64;
        Self::from_parts(spec, horizon, smoothness, rounds)
    }

    fn from_parts(
        spec: EnvSpec,
        horizon: u64,
        smoothness: Option<f64>,
        rounds: Vec<LossOracle>,
    ) -> Result<Self> {
        let mut env = Self {
            spec,
            horizon,
            smoothness,
            rounds,
            hash: String::new(),
        };
        let mut bytes = Vec::new();
        env.write_binary(&mut bytes)?;
        env.hash = hex::encode(Sha256::digest(&bytes));
        Ok(env)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn lipschitz(&self) -> f64 {
        self.spec.lipschitz
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub fn rounds(&self) -> &[LossOracle] {
        &self.rounds
    }

    /// Unmetered access for comparator evaluation and audits.
    pub fn oracle(&self, t: usize) -> &LossOracle {
        &self.rounds[t]
    }

    /// Round `t` (0-based) behind a single-query meter.
    pub fn metered(&self, t: usize) -> MeteredOracle<'_> {
        MeteredOracle::new(&self.rounds[t], t as u64 + 1)
    }

    /// `Σ_t ℓ_t(u)` with compensated summation.
    pub fn total_loss(&self, u: &[f64]) -> f64 {
        self.rounds
            .iter()
            .map(|o| o.eval(u))
            .collect::<CompensatedSum>()
            .value()
    }

    /// SHA-256 of the portable binary export.
    pub fn schedule_hash(&self) -> &str {
        &self.hash
    }

    /// Little-endian binary export: magic, family tag, `d`, `T`, then per
    /// round the label, the Huber radius and the `d` parameters.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SCHEDULE_MAGIC)?;
        out.write_all(&[self.spec.family.tag()])?;
        out.write_all(&(self.spec.d as u32).to_le_bytes())?;
        out.write_all(&self.horizon.to_le_bytes())?;
        for r in &self.rounds {
            out.write_all(&r.label.to_le_bytes())?;
            out.write_all(&r.radius.to_le_bytes())?;
            for p in &r.param {
                out.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// CSV export with columns `t, label, radius, p1..pd`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "label".into(), "radius".into()];
        header.extend((1..=self.spec.d).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for (t, r) in self.rounds.iter().enumerate() {
            let mut row = vec![
                (t + 1).to_string(),
                r.label.to_string(),
                r.radius.to_string(),
            ];
            row.extend(r.param.iter().map(|p| p.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family, schedule: ScheduleSpec) -> EnvSpec {
        EnvSpec::new(family, schedule, 3, 2.0)
    }

    #[test]
    fn schedules_are_seed_determined() {
        for schedule in [
            ScheduleSpec::Fixed,
            ScheduleSpec::Rotating { period: 7 },
            ScheduleSpec::Stochastic,
            ScheduleSpec::AdaptiveSign,
        ] {
            let s = spec(Family::Linear, schedule);
            let a = Environment::generate(&s, 200, 5).unwrap();
            let b = Environment::generate(&s, 200, 5).unwrap();
            assert_eq!(a.rounds(), b.rounds());
            assert_eq!(a.schedule_hash(), b.schedule_hash());
            for r in a.rounds() {
                assert!(r.lipschitz() <= 2.0 + 1e-12);
            }
        }
        let s = spec(Family::Linear, ScheduleSpec::Stochastic);
        let a = Environment::generate(&s, 50, 1).unwrap();
        let b = Environment::generate(&s, 50, 2).unwrap();
        assert_ne!(a.schedule_hash(), b.schedule_hash());
    }

    #[test]
    fn rotation_has_the_requested_period() {
        let e = Environment::generate(
            &spec(Family::Linear, ScheduleSpec::Rotating { period: 4 }),
            9,
            0,
        )
        .unwrap();
        let r = e.rounds();
        assert!((r[1].param[1] - 2.0).abs() < 1e-12);
        assert_eq!(r[0].param, r[4].param);
        assert_eq!(r[4].param, r[8].param);
    }

    #[test]
    fn orthogonal_noise_keeps_the_base_component() {
        let mut s = spec(Family::Hinge, ScheduleSpec::Stochastic);
        s.params.vector = Some(vec![1.0, 0.0, 0.0]);
        s.params.noise = Some(1.0);
        s.params.noise_kind = NoiseKind::Orthogonal;
        s.lipschitz = 2f64.sqrt();
        let e = Environment::generate(&s, 100, 3).unwrap();
        for r in e.rounds() {
            assert!((r.param[0] - 1.0).abs() < 1e-12);
            assert!((norm(&r.param) - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn declared_constants_are_checked() {
        let mut s = spec(Family::Linear, ScheduleSpec::Fixed);
        s.params.vector = Some(vec![3.0, 0.0, 0.0]);
        assert!(Environment::generate(&s, 5, 0).is_err());
        let mut q = spec(Family::Quadratic, ScheduleSpec::Fixed);
        q.beta = Some(1.0);
        assert!(Environment::generate(&q, 5, 0).is_err());
        q.beta = None;
        let e = Environment::generate(&q, 5, 0).unwrap();
        assert_eq!(e.smoothness(), Some(2.0));
        let mut h = spec(Family::Hinge, ScheduleSpec::Fixed);
        h.beta = Some(1.0);
        assert!(Environment::generate(&h, 5, 0).is_err());
    }

    #[test]
    fn adaptive_sign_opposes_the_probe() {
        let mut s = spec(Family::Linear, ScheduleSpec::AdaptiveSign);
        s.params.vector = Some(vec![1.0, 0.0, 0.0]);
        s.params.noise = Some(0.5);
        let e = Environment::generate(&s, 400, 9).unwrap();
        let flips = e
            .rounds()
            .windows(2)
            .filter(|w| w[0].param[0].signum() != w[1].param[0].signum())
            .count();
        assert!(flips > 10);
    }

    #[test]
    fn exports_round_trip_size() {
        let e = Environment::generate(&spec(Family::Quadratic, ScheduleSpec::Stochastic), 10, 0)
            .unwrap();
        let mut bin = Vec::new();
        e.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 8 + 1 + 4 + 8 + 10 * (2 + 3) * 8);
        let mut csv_out = Vec::new();
        e.write_csv(&mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("t,label,radius,p1,p2,p3"));
    }

    #[test]
    fn empty_horizon() {
        let e =
            Environment::generate(&spec(Family::Hinge, ScheduleSpec::Stochastic), 0, 0).unwrap();
        assert_eq!(e.horizon(), 0);
        assert_eq!(e.total_loss(&[1.0, 1.0, 1.0]), 0.0);
    }
}
