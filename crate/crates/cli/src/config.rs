//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sketch_lstd::envs::{self, GroundTruthSettings};
use sketch_lstd::features::{FeatureSpec, StateBounds};
use sketch_lstd::harness::Criterion;
use sketch_lstd::sketch::SketchFamily;
use sketch_lstd::{AgentConfig, Algorithm};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Every random stream of every command derives from this.
    #[serde(default)]
    pub base_seed: u64,
    pub environment: EnvironmentConfig,
    pub features: FeaturesConfig,
    #[serde(default)]
    pub ground_truth: GroundTruthConfig,
    #[serde(default)]
    pub experiment: RunSettings,
    #[serde(default)]
    pub agents: Vec<AgentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub name: String,
    /// Probability of a uniformly random action; the benchmark default when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomness: Option<f64>,
}

/// Feature spec plus the state box it tiles. Bounds are mandatory so a
/// config never silently depends on environment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table", into = "toml::Table")]
pub struct FeaturesConfig {
    pub spec: FeatureSpec,
    pub bounds: StateBounds,
}

impl TryFrom<toml::Table> for FeaturesConfig {
    type Error = ConfigError;

    fn try_from(mut table: toml::Table) -> Result<Self> {
        let bounds = table
            .remove("bounds")
            .ok_or_else(|| ConfigError::MissingKey("features.bounds".into()))?;
        if let toml::Value::Table(t) = &bounds {
            for key in ["low", "high"] {
                if !t.contains_key(key) {
                    return Err(ConfigError::MissingKey(format!("features.bounds.{key}")));
                }
            }
        }
        let bounds: StateBounds =
            bounds
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::Invalid {
                    key: "features.bounds".into(),
                    message: e.message().to_string(),
                })?;
        let spec: FeatureSpec =
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::Invalid {
                    key: "features".into(),
                    message: e.message().to_string(),
                })?;
        Ok(Self { spec, bounds })
    }
}

impl From<FeaturesConfig> for toml::Table {
    fn from(f: FeaturesConfig) -> toml::Table {
        let mut table = match toml::Value::try_from(&f.spec) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("feature specs serialize to tables"),
        };
        let bounds = toml::Value::try_from(&f.bounds).expect("bounds serialize");
        table.insert("bounds".into(), bounds);
        table
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruthConfig {
    pub num_states: usize,
    pub rollouts_per_state: usize,
    pub horizon_cap: usize,
    pub trajectory_factor: usize,
    /// Cache file; `<out>/ground_truth.csv` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        let s = GroundTruthSettings::default();
        Self {
            num_states: s.num_states,
            rollouts_per_state: s.rollouts_per_state,
            horizon_cap: s.horizon_cap,
            trajectory_factor: s.trajectory_factor,
            cache: None,
        }
    }
}

impl GroundTruthConfig {
    pub fn settings(&self) -> GroundTruthSettings {
        GroundTruthSettings {
            num_states: self.num_states,
            rollouts_per_state: self.rollouts_per_state,
            horizon_cap: self.horizon_cap,
            trajectory_factor: self.trajectory_factor,
        }
    }

    pub fn cache_path(&self, out: &Path) -> PathBuf {
        self.cache
            .clone()
            .unwrap_or_else(|| out.join("ground_truth.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub steps: usize,
    pub eval_every: usize,
    /// Seeds per assignment; run `i` uses `base_seed ^ i`.
    pub runs: usize,
    pub selection: Criterion,
    pub record_timing: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            steps: 10_000,
            eval_every: 100,
            runs: 10,
            selection: Criterion::Full,
            record_timing: false,
        }
    }
}

/// A fixed value or a list to take the product over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(vs) => vs.clone(),
        }
    }
}

/// One `[[agents]]` table: an algorithm and its parameter values or lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<OneOrMany<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<OneOrMany<SketchFamily>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precondition: Option<bool>,
}

fn uses(alg: Algorithm, key: &str) -> bool {
    use Algorithm::*;
    match key {
        "alpha" => alg == Td,
        "lambda" => true,
        "xi" => matches!(alg, Lstd | LstdP | LstdL | AtdL),
        "eta" => matches!(alg, AtdL | AtdSvd),
        "k" => alg != Td && alg != Lstd,
        "sketch" => matches!(alg, LstdP | LstdL | AtdL),
        "precondition" => alg == AtdL,
        _ => false,
    }
}

/// Parameters an algorithm cannot run without (ATD-L's `xi` has a default).
fn required(alg: Algorithm, key: &str) -> bool {
    uses(alg, key) && key != "precondition" && !(alg == Algorithm::AtdL && key == "xi")
}

impl AgentEntry {
    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let flags = [
            ("alpha", self.alpha.is_some()),
            ("lambda", self.lambda.is_some()),
            ("eta", self.eta.is_some()),
            ("xi", self.xi.is_some()),
            ("k", self.k.is_some()),
            ("sketch", self.sketch.is_some()),
            ("precondition", self.precondition.is_some()),
        ];
        for (key, set) in flags {
            if set {
                keys.push(key);
            }
        }
        keys
    }

    /// Rejects keys the algorithm does not use; with `complete`, also keys it
    /// needs but lacks. `swept` keys are exempt from the latter.
    fn check(&self, index: usize, complete: bool, swept: &[&str]) -> Result<()> {
        let alg = self.algorithm;
        for key in self.present() {
            if !uses(alg, key) {
                return Err(ConfigError::Invalid {
                    key: format!("agents[{index}].{key}"),
                    message: format!("not a parameter of {alg}"),
                });
            }
        }
        if complete {
            let present = self.present();
            for key in ["alpha", "lambda", "eta", "xi", "k", "sketch"] {
                if required(alg, key) && !present.contains(&key) && !swept.contains(&key) {
                    return Err(ConfigError::MissingKey(format!("agents[{index}].{key}")));
                }
            }
        }
        Ok(())
    }

    /// Cartesian product of the listed values, in the order k, sketch, ξ,
    /// α/η, λ (λ varies fastest). Absent optional lists contribute a
    /// placeholder that `expand_sweep` later overwrites.
    fn product(&self, index: usize) -> Result<Vec<AgentConfig>> {
        let list_f =
            |v: &Option<OneOrMany<f64>>| v.as_ref().map_or(vec![f64::NAN], OneOrMany::values);
        let ks = self.k.as_ref().map_or(vec![0], OneOrMany::values);
        let sketches = self
            .sketch
            .as_ref()
            .map_or(vec![SketchFamily::Gaussian], OneOrMany::values);
        let xis = match (self.algorithm, &self.xi) {
            (Algorithm::AtdL, None) => vec![1.0],
            (_, xi) => list_f(xi),
        };
        let steps = if self.algorithm == Algorithm::Td {
            list_f(&self.alpha)
        } else {
            list_f(&self.eta)
        };
        let lambdas = list_f(&self.lambda);
        for (key, len) in [
            ("k", ks.len()),
            ("sketch", sketches.len()),
            ("xi", xis.len()),
            ("alpha/eta", steps.len()),
            ("lambda", lambdas.len()),
        ] {
            if len == 0 {
                return Err(ConfigError::Invalid {
                    key: format!("agents[{index}].{key}"),
                    message: "empty list".into(),
                });
            }
        }
        let precondition = self.precondition.unwrap_or(true);
        let mut out = Vec::new();
        for &k in &ks {
            for &sketch in &sketches {
                for &xi in &xis {
                    for &step in &steps {
                        for &lambda in &lambdas {
                            out.push(match self.algorithm {
                                Algorithm::Td => AgentConfig::Td {
                                    alpha: step,
                                    lambda,
                                },
                                Algorithm::Lstd => AgentConfig::Lstd { xi, lambda },
                                Algorithm::LstdP => AgentConfig::LstdP {
                                    xi,
                                    lambda,
                                    k,
                                    sketch,
                                },
                                Algorithm::LstdL => AgentConfig::LstdL {
                                    xi,
                                    lambda,
                                    k,
                                    sketch,
                                },
                                Algorithm::AtdL => AgentConfig::AtdL {
                                    eta: step,
                                    lambda,
                                    xi,
                                    k,
                                    sketch,
                                    precondition,
                                },
                                Algorithm::AtdSvd => AgentConfig::AtdSvd {
                                    eta: step,
                                    lambda,
                                    k,
                                },
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            // Surface our own missing-key errors unchanged.
            let msg = e.message().to_string();
            if let Some(key) = msg
                .strip_prefix("missing key `")
                .and_then(|m| m.strip_suffix('`'))
            {
                ConfigError::MissingKey(key.to_string())
            } else {
                ConfigError::Parse(e.to_string())
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bench =
            envs::benchmark(&self.environment.name, self.environment.randomness).map_err(|e| {
                ConfigError::Invalid {
                    key: "environment".into(),
                    message: e.to_string(),
                }
            })?;
        self.features
            .bounds
            .validate()
            .map_err(|e| ConfigError::Invalid {
                key: "features.bounds".into(),
                message: e.to_string(),
            })?;
        if self.features.bounds.dims() != bench.mdp.bounds().dims() {
            return Err(ConfigError::Invalid {
                key: "features.bounds".into(),
                message: format!(
                    "{} dimensions, {} has {}",
                    self.features.bounds.dims(),
                    self.environment.name,
                    bench.mdp.bounds().dims()
                ),
            });
        }
        sketch_lstd::features::build_feature_map(
            &self.features.spec,
            &self.features.bounds,
            self.base_seed,
        )
        .map_err(|e| ConfigError::Invalid {
            key: "features".into(),
            message: e.to_string(),
        })?;
        let e = &self.experiment;
        for (key, v) in [
            ("experiment.steps", e.steps),
            ("experiment.eval_every", e.eval_every),
            ("experiment.runs", e.runs),
            ("ground_truth.num_states", self.ground_truth.num_states),
            (
                "ground_truth.rollouts_per_state",
                self.ground_truth.rollouts_per_state,
            ),
            ("ground_truth.horizon_cap", self.ground_truth.horizon_cap),
            (
                "ground_truth.trajectory_factor",
                self.ground_truth.trajectory_factor,
            ),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid {
                    key: key.into(),
                    message: "must be positive".into(),
                });
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.check(i, false, &[])?;
        }
        Ok(())
    }

    /// Agent configurations for `run`: the product of each entry's lists.
    pub fn expand_run(&self) -> Result<Vec<AgentConfig>> {
        self.require_agents()?;
        let mut out = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            a.check(i, true, &[])?;
            for c in a.product(i)? {
                c.validate().map_err(|e| ConfigError::Invalid {
                    key: format!("agents[{i}]"),
                    message: e.to_string(),
                })?;
                out.push(c);
            }
        }
        Ok(out)
    }

    /// Agent configurations for `sweep`: each entry's primary step/ridge
    /// parameter and λ come from `grid`, the rest from the entry.
    pub fn expand_sweep(&self, grid: &sketch_lstd::harness::SweepGrid) -> Result<Vec<AgentConfig>> {
        self.require_agents()?;
        let mut out = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            let primary = sketch_lstd::harness::SweepGrid::primary_param(a.algorithm);
            a.check(i, true, &[primary, "lambda"])?;
            let mut seen: Vec<AgentConfig> = Vec::new();
            for base in a.product(i)? {
                for c in grid.expand(&base) {
                    if seen.contains(&c) {
                        continue;
                    }
                    c.validate().map_err(|e| ConfigError::Invalid {
                        key: format!("agents[{i}]"),
                        message: e.to_string(),
                    })?;
                    seen.push(c);
                }
            }
            out.extend(seen);
        }
        Ok(out)
    }

    fn require_agents(&self) -> Result<()> {
        if self.agents.is_empty() {
            Err(ConfigError::MissingKey("agents".into()))
        } else {
            Ok(())
        }
    }
}
