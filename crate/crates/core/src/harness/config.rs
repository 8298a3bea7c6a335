use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{ComparatorSpec, EnvSpec};
use crate::error::{Error, Result};
use crate::geometry::BodySpec;
use crate::reductions::ConvexMode;

/// A seed list, written either as an array or as a half-open range `"a..b"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range(String),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(vec![0])
    }
}

impl Seeds {
    pub fn parse_range(s: &str) -> Result<Vec<u64>> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::config(format!("seed range must look like a..b, got {s:?}")))?;
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad seed {a:?}")))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad seed {b:?}")))?;
        if b <= a {
            return Err(Error::config(format!("empty seed range {s:?}")));
        }
        Ok((a..b).collect())
    }

    pub fn resolve(&self) -> Result<Vec<u64>> {
        match self {
            Seeds::List(v) if v.is_empty() => Err(Error::config("no seeds configured")),
            Seeds::List(v) => Ok(v.clone()),
            Seeds::Range(s) => Self::parse_range(s),
        }
    }
}

/// Algorithm choice. Dimension, horizon, `L` and `β` come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    LinearBandit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        barrier_rate: Option<f64>,
    },
    ConvexBandit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        mode: ConvexMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_cap: Option<f64>,
    },
    /// One-point gradient descent tuned for the worst-case comparator norm.
    Flaxman {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
    },
    /// Projected gradient descent with exact gradients.
    FullInfoOgd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<BodySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
    },
}

impl PolicySpec {
    pub fn algorithm(&self) -> &'static str {
        match self {
            PolicySpec::LinearBandit { .. } => "linear_bandit",
            PolicySpec::ConvexBandit { .. } => "convex_bandit",
            PolicySpec::Flaxman { .. } => "flaxman",
            PolicySpec::FullInfoOgd { .. } => "full_info_ogd",
        }
    }

    pub fn label(&self) -> String {
        let (name, suffix) = match self {
            PolicySpec::LinearBandit { name, body, .. } => (
                name,
                if body.is_some() {
                    "constrained"
                } else {
                    "unconstrained"
                }
                .to_string(),
            ),
            PolicySpec::ConvexBandit { name, mode, .. } => (
                name,
                serde_json::to_value(mode)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
            ),
            PolicySpec::Flaxman { name, .. } => (name, String::new()),
            PolicySpec::FullInfoOgd { name, .. } => (name, String::new()),
        };
        name.clone().unwrap_or_else(|| {
            if suffix.is_empty() {
                self.algorithm().to_string()
            } else {
                format!("{}-{}", self.algorithm(), suffix)
            }
        })
    }

    pub fn body(&self) -> Option<&BodySpec> {
        match self {
            PolicySpec::LinearBandit { body, .. }
            | PolicySpec::ConvexBandit { body, .. }
            | PolicySpec::Flaxman { body, .. }
            | PolicySpec::FullInfoOgd { body, .. } => body.as_ref(),
        }
    }
}

fn default_comparators() -> ComparatorSpec {
    ComparatorSpec {
        norms: vec![0.0, 1.0],
        direction: Default::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub policies: Vec<PolicySpec>,
    pub environments: Vec<EnvSpec>,
    /// Horizons to sweep; environments' own `T` is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<u64>>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_comparators")]
    pub comparators: ComparatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub trace: bool,
}

/// The parts of a config that determine results.
#[derive(Serialize)]
struct HashView<'a> {
    policies: &'a [PolicySpec],
    environments: &'a [EnvSpec],
    horizons: &'a Option<Vec<u64>>,
    seeds: Vec<u64>,
    comparators: &'a ComparatorSpec,
}

impl ExperimentConfig {
    /// Reads TOML or JSON, chosen by extension (`.json` is JSON; anything else TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::config("no policies configured"));
        }
        if self.environments.is_empty() {
            return Err(Error::config("no environments configured"));
        }
        self.seeds.resolve()?;
        for env in &self.environments {
            if self.horizons.is_none() && env.horizon.is_none() {
                return Err(Error::config(format!(
                    "environment {} has no T and no horizons are configured",
                    env.label()
                )));
            }
        }
        if let Some(h) = &self.horizons {
            if h.is_empty() {
                return Err(Error::config("horizons list is empty"));
            }
        }
        let mut labels: Vec<String> = self.policies.iter().map(PolicySpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("policy names must be unique"));
        }
        let mut labels: Vec<String> = self.environments.iter().map(EnvSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("environment names must be unique"));
        }
        if self
            .comparators
            .norms
            .iter()
            .any(|r| !(*r >= 0.0) || !r.is_finite())
        {
            return Err(Error::config("comparator norms must be nonnegative"));
        }
        Ok(())
    }

    pub fn horizons_for(&self, env: &EnvSpec) -> Vec<u64> {
        match &self.horizons {
            Some(h) => h.clone(),
            None => env.horizon.into_iter().collect(),
        }
    }

    /// SHA-256 over the result-determining fields in canonical JSON.
    pub fn hash(&self) -> Result<String> {
        let view = HashView {
            policies: &self.policies,
            environments: &self.environments,
            horizons: &self.horizons,
            seeds: self.seeds.resolve()?,
            comparators: &self.comparators,
        };
        let bytes = serde_json::to_vec(&view)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
