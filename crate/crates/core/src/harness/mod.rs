//! Experiment execution: learning curves against Monte Carlo ground truth,
//! parameter sweeps, best-parameter selection and result persistence.

mod io;
mod select;

pub use io::{
    read_results, write_best_params, write_learning_curves, write_results, write_sensitivity,
    RESULTS_HEADER,
};
pub use select::{
    learning_curves, select_best_params, sensitivity_table, BestParams, Criterion, LearningCurve,
    SensitivityRow, SweepGrid,
};

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::agents::{build_agent, Agent, AgentConfig, AgentError, Algorithm};
use crate::envs::{generate_transitions, EnvError, GroundTruth, Mdp, Policy};
use crate::features::{FeatureError, FeatureMap, FeatureVector};
use crate::sketch::SketchFamily;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("every parameter assignment diverged")]
    AllDiverged,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("results file {path}: {message}")]
    Results { path: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Featurized test states and their true values.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub features: Vec<FeatureVector>,
    pub truths: Vec<f64>,
}

impl TestSet {
    pub fn new(features: Vec<FeatureVector>, truths: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(HarnessError::EmptyTestSet);
        }
        if features.len() != truths.len() {
            return Err(HarnessError::InvalidArgument(format!(
                "{} feature vectors for {} truth values",
                features.len(),
                truths.len()
            )));
        }
        Ok(Self { features, truths })
    }

    pub fn from_ground_truth(map: &FeatureMap, gt: &GroundTruth) -> Result<Self> {
        let features = gt
            .states
            .iter()
            .map(|s| map.featurize(s))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(features, gt.values.clone())
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }
}

/// Unweighted root-mean-square error of `predictions` against `truths`.
pub fn rmse_of(predictions: &[f64], truths: &[f64]) -> f64 {
    let n = truths.len().max(1) as f64;
    let sq: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    (sq / n).sqrt()
}

pub fn rmse(agent: &dyn Agent, test: &TestSet) -> Result<f64> {
    if test.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let w = agent.weights()?;
    let mut preds = Vec::with_capacity(test.len());
    for x in &test.features {
        preds.push(agent.prediction_features(x)?.dot(&w));
    }
    Ok(rmse_of(&preds, &test.truths))
}

/// Parameter values of one assignment, flattened to the results columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub alpha: Option<f64>,
    pub lambda: f64,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub k: Option<usize>,
    pub sketch: Option<SketchFamily>,
}

impl Params {
    pub fn of(config: &AgentConfig) -> Self {
        Self {
            alpha: config.alpha(),
            lambda: config.lambda(),
            eta: config.eta(),
            xi: config.xi(),
            k: config.k(),
            sketch: config.sketch(),
        }
    }

    /// Value of a named parameter (`alpha`, `lambda`, `eta`, `xi`, `k`).
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "alpha" => self.alpha,
            "lambda" => Some(self.lambda),
            "eta" => self.eta,
            "xi" => self.xi,
            "k" => self.k.map(|k| k as f64),
            _ => None,
        }
    }

    /// Exact textual key, used to group runs of one assignment.
    pub fn key(&self) -> String {
        fn o<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        format!(
            "alpha={};lambda={};eta={};xi={};k={};sketch={}",
            o(&self.alpha),
            self.lambda,
            o(&self.eta),
            o(&self.xi),
            o(&self.k),
            o(&self.sketch)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub rmse: f64,
    /// Mean wall-clock microseconds per step since the previous point.
    pub step_time_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub params: Params,
    pub env: String,
    pub features: String,
    pub curve: Vec<EvalPoint>,
    pub status: RunStatus,
    /// Step at which the run was aborted.
    pub diverged_at: Option<usize>,
}

impl RunRecord {
    pub fn final_rmse(&self) -> Option<f64> {
        match self.status {
            RunStatus::Completed => self.curve.last().map(|p| p.rmse),
            RunStatus::Diverged => None,
        }
    }

    /// Grouping key for runs that differ only by seed.
    pub fn assignment_key(&self) -> String {
        format!("{}|{}", self.algorithm, self.params.key())
    }
}

/// One unit of work: an agent configuration evaluated under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub run_id: usize,
    pub seed: u64,
    pub config: AgentConfig,
}

/// Shared, read-only context for a batch of runs.
pub struct Experiment<'a> {
    pub mdp: &'a dyn Mdp,
    pub policy: &'a dyn Policy,
    pub features: &'a FeatureMap,
    pub test: &'a TestSet,
    pub env_name: String,
    pub features_label: String,
    pub total_steps: usize,
    pub eval_every: usize,
    /// Fill `step_time_us`; off by default because timings are not
    /// reproducible.
    pub record_timing: bool,
}

impl Experiment<'_> {
    /// Evaluation steps: every `eval_every` steps, plus the final step.
    pub fn eval_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (1..=self.total_steps / self.eval_every.max(1))
            .map(|i| i * self.eval_every)
            .collect();
        if steps.last() != Some(&self.total_steps) && self.total_steps > 0 {
            steps.push(self.total_steps);
        }
        steps
    }

    /// Executes one assignment. Agent failures end the run as diverged
    /// instead of failing the batch.
    pub fn run(&self, a: &Assignment) -> Result<RunRecord> {
        if self.total_steps == 0 || self.eval_every == 0 {
            return Err(HarnessError::InvalidArgument(
                "steps and eval_every must be positive".into(),
            ));
        }
        let mut record = RunRecord {
            run_id: a.run_id,
            seed: a.seed,
            algorithm: a.config.algorithm(),
            params: Params::of(&a.config),
            env: self.env_name.clone(),
            features: self.features_label.clone(),
            curve: Vec::new(),
            status: RunStatus::Completed,
            diverged_at: None,
        };
        let mut agent = build_agent(&a.config, self.features.dim(), a.seed)?;
        let test_phi: Vec<FeatureVector> = self
            .test
            .features
            .iter()
            .map(|x| agent.prediction_features(x))
            .collect::<std::result::Result<_, _>>()?;
        let stream = generate_transitions(
            self.mdp,
            self.policy,
            self.features,
            self.total_steps,
            a.seed,
        )?;
        let evals = self.eval_steps();
        let mut next_eval = 0;
        let mut since_eval = 0usize;
        let mut elapsed = std::time::Duration::ZERO;

        for (i, tr) in stream.enumerate() {
            let step = i + 1;
            let t0 = self.record_timing.then(Instant::now);
            let observed = agent.observe(&tr);
            if let Some(t0) = t0 {
                elapsed += t0.elapsed();
            }
            since_eval += 1;
            if let Err(e) = observed {
                log::debug!(
                    "run {} ({}) stopped at step {step}: {e}",
                    a.run_id,
                    record.algorithm
                );
                record.status = RunStatus::Diverged;
                record.diverged_at = Some(step);
                return Ok(record);
            }
            if evals.get(next_eval) == Some(&step) {
                next_eval += 1;
                match evaluate(agent.as_ref(), &test_phi, &self.test.truths) {
                    Some(r) => record.curve.push(EvalPoint {
                        step,
                        rmse: r,
                        step_time_us: self
                            .record_timing
                            .then(|| elapsed.as_secs_f64() * 1e6 / since_eval as f64),
                    }),
                    None => {
                        record.status = RunStatus::Diverged;
                        record.diverged_at = Some(step);
                        return Ok(record);
                    }
                }
                since_eval = 0;
                elapsed = std::time::Duration::ZERO;
            }
        }
        Ok(record)
    }

    /// `seeds.len()` runs of one configuration, run ids `0..`.
    pub fn run_seeds(&self, config: &AgentConfig, seeds: &[u64]) -> Result<Vec<RunRecord>> {
        let assignments: Vec<Assignment> = seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| Assignment {
                run_id: i,
                seed,
                config: config.clone(),
            })
            .collect();
        self.run_batch(&assignments, None)
    }

    /// Runs every assignment, in parallel when `jobs != Some(1)`; results are
    /// ordered by run id.
    pub fn run_batch(
        &self,
        assignments: &[Assignment],
        jobs: Option<usize>,
    ) -> Result<Vec<RunRecord>> {
        let work = || -> Result<Vec<RunRecord>> {
            let mut out = assignments
                .par_iter()
                .map(|a| self.run(a))
                .collect::<Result<Vec<_>>>()?;
            out.sort_by_key(|r| r.run_id);
            Ok(out)
        };
        match jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::InvalidArgument(e.to_string()))?
                .install(work),
            None => work(),
        }
    }
}

/// RMSE from precomputed prediction features; `None` if the weights are not
/// finite.
fn evaluate(agent: &dyn Agent, phi: &[FeatureVector], truths: &[f64]) -> Option<f64> {
    let w = agent.weights().ok()?;
    if !crate::linalg::all_finite(&w) || crate::linalg::norm2(&w) > crate::agents::DIVERGENCE_GUARD
    {
        return None;
    }
    let preds: Vec<f64> = phi.iter().map(|x| x.dot(&w)).collect();
    let r = rmse_of(&preds, truths);
    r.is_finite().then_some(r)
}

/// Run seeds `base ⊕ i`.
pub fn run_seeds(base_seed: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| base_seed ^ i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse_of(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(rmse_of(&[0.0, 0.0], &[-10.0, -10.0]), 10.0);
        assert!((rmse_of(&[0.0, 0.0], &[3.0, 4.0]) - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn params_key_distinguishes_values() {
        let a = Params::of(&AgentConfig::Td {
            alpha: 0.1,
            lambda: 0.5,
        });
        let b = Params::of(&AgentConfig::Td {
            alpha: 0.2,
            lambda: 0.5,
        });
        assert_ne!(a.key(), b.key());
        assert_eq!(a.get("alpha"), Some(0.1));
        assert_eq!(a.get("eta"), None);
    }
}
