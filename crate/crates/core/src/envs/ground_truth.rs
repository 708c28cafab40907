use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnvError, Mdp, Policy, Result, Walker};
use crate::rng::{self, Stream};

/// Ground-truth protocol: test states drawn from one on-policy trajectory,
/// each valued by the mean of independent Monte Carlo returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSettings {
    pub num_states: usize,
    pub rollouts_per_state: usize,
    pub horizon_cap: usize,
    /// Trajectory length per requested test state.
    #[serde(default = "default_spacing")]
    pub trajectory_factor: usize,
}

fn default_spacing() -> usize {
    20
}

impl Default for GroundTruthSettings {
    fn default() -> Self {
        Self {
            num_states: 500,
            rollouts_per_state: 200,
            horizon_cap: 100_000,
            trajectory_factor: default_spacing(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub states: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Rollouts cut off at the horizon cap.
    pub truncated_rollouts: usize,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n` states visited by the policy, sampled uniformly without replacement
/// from a trajectory of `factor · n` steps and returned in visit order.
pub fn sample_trajectory_states(
    mdp: &dyn Mdp,
    policy: &dyn Policy,
    n: usize,
    factor: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 || factor == 0 {
        return Err(EnvError::InvalidArgument(
            "state count and trajectory factor must be positive".into(),
        ));
    }
    let len = n * factor;
    let trajectory: Vec<Vec<f64>> = Walker::new(mdp, policy, seed)
        .take(len)
        .map(|t| t.state)
        .collect();
    let mut pick_rng = rng::stream(seed, Stream::GroundTruth);
    let mut picks = index::sample(&mut pick_rng, len, n).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| trajectory[i].clone()).collect())
}

/// Returns `(discounted return, truncated)` for one rollout.
fn rollout(
    mdp: &dyn Mdp,
    policy: &dyn Policy,
    start: &[f64],
    horizon_cap: usize,
    env_rng: &mut rng::SimRng,
    policy_rng: &mut rng::SimRng,
) -> (f64, bool) {
    let mut state = start.to_vec();
    let mut ret = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon_cap {
        let a = policy.sample_action(&state, policy_rng);
        let step = mdp.step(&state, a, env_rng);
        ret += discount * step.reward;
        if step.terminal {
            return (ret, false);
        }
        discount *= mdp.gamma();
        state = step.next_state;
    }
    (ret, true)
}

/// Mean return of `rollouts` episodes from `state`, and how many of them
/// were cut off at `horizon_cap`.
pub fn monte_carlo_value(
    mdp: &dyn Mdp,
    policy: &dyn Policy,
    state: &[f64],
    rollouts: usize,
    horizon_cap: usize,
    seed: u64,
) -> (f64, usize) {
    let mut env_rng = rng::stream(seed, Stream::GroundTruth);
    let mut policy_rng = rng::stream(seed, Stream::Policy);
    let mut total = 0.0;
    let mut truncated = 0;
    for _ in 0..rollouts {
        let (g, cut) = rollout(
            mdp,
            policy,
            state,
            horizon_cap,
            &mut env_rng,
            &mut policy_rng,
        );
        total += g;
        truncated += cut as usize;
    }
    (total / rollouts.max(1) as f64, truncated)
}

/// Monte Carlo values of on-policy test states; deterministic in `seed`
/// regardless of the rayon thread count.
pub fn estimate_ground_truth(
    mdp: &dyn Mdp,
    policy: &dyn Policy,
    settings: &GroundTruthSettings,
    seed: u64,
) -> Result<GroundTruth> {
    if settings.rollouts_per_state == 0 || settings.horizon_cap == 0 {
        return Err(EnvError::InvalidArgument(
            "rollouts and horizon cap must be positive".into(),
        ));
    }
    let traj_seed = rng::derive_seed(seed, u64::MAX);
    let states = sample_trajectory_states(
        mdp,
        policy,
        settings.num_states,
        settings.trajectory_factor,
        traj_seed,
    )?;
    let per_state: Vec<(f64, usize)> = states
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            monte_carlo_value(
                mdp,
                policy,
                s,
                settings.rollouts_per_state,
                settings.horizon_cap,
                rng::derive_seed(seed, i as u64),
            )
        })
        .collect();
    let truncated_rollouts = per_state.iter().map(|p| p.1).sum();
    if truncated_rollouts > 0 {
        log::warn!(
            "{truncated_rollouts} of {} ground-truth rollouts hit the horizon cap of {}",
            settings.num_states * settings.rollouts_per_state,
            settings.horizon_cap
        );
    }
    Ok(GroundTruth {
        states,
        values: per_state.into_iter().map(|p| p.0).collect(),
        truncated_rollouts,
    })
}

fn cache_err(path: &Path, message: impl ToString) -> EnvError {
    EnvError::Cache {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// CSV with header `state_0,…,state_{m−1},value`; floats use the shortest
/// representation that round-trips.
pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let dims = gt.states.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| cache_err(path, e))?;
    let mut header: Vec<String> = (0..dims).map(|i| format!("state_{i}")).collect();
    header.push("value".into());
    w.write_record(&header).map_err(|e| cache_err(path, e))?;
    for (s, v) in gt.states.iter().zip(&gt.values) {
        let row: Vec<String> = s
            .iter()
            .chain(std::iter::once(v))
            .map(|x| x.to_string())
            .collect();
        w.write_record(&row).map_err(|e| cache_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut r = csv::Reader::from_path(path).map_err(|e| cache_err(path, e))?;
    let header = r.headers().map_err(|e| cache_err(path, e))?.clone();
    let cols = header.len();
    if cols < 2 || header.get(cols - 1) != Some("value") {
        return Err(cache_err(path, "header must be state_0,...,value"));
    }
    let mut states = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| cache_err(path, e))?;
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let mut nums = nums.map_err(|e| cache_err(path, e))?;
        let v = nums.pop().expect("at least two columns");
        states.push(nums);
        values.push(v);
    }
    Ok(GroundTruth {
        states,
        values,
        truncated_rollouts: 0,
    })
}
