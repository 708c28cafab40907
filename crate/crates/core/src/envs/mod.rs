//! Benchmark MDPs, their evaluation policies, transition streams and Monte
//! Carlo ground truth.

mod ground_truth;
mod mountain_car;
mod puddle_world;

pub use ground_truth::{
    estimate_ground_truth, monte_carlo_value, read_ground_truth, sample_trajectory_states,
    write_ground_truth, GroundTruth, GroundTruthSettings,
};
pub use mountain_car::{energy_pumping_policy, mountain_car, EnergyPumping, MountainCar};
pub use puddle_world::{greedy_distance_policy, puddle_world, GreedyDistance, PuddleWorld};

use rand::Rng;
use thiserror::Error;

use crate::features::{FeatureError, FeatureMap, FeatureVector, StateBounds};
use crate::rng::{self, SimRng, Stream};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("feature map expects {expected}-dimensional states, environment produces {found}")]
    StateDimension { expected: usize, found: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("ground-truth file {path}: {message}")]
    Cache { path: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic MDP with a finite action set.
pub trait Mdp: Send + Sync {
    fn name(&self) -> &'static str;
    fn bounds(&self) -> &StateBounds;
    fn num_actions(&self) -> usize;
    /// Discount applied on non-terminal transitions.
    fn gamma(&self) -> f64;
    fn reset(&self, rng: &mut SimRng) -> Vec<f64>;
    fn step(&self, state: &[f64], action: usize, rng: &mut SimRng) -> Step;
}

pub trait Policy: Send + Sync {
    fn sample_action(&self, state: &[f64], rng: &mut SimRng) -> usize;
}

/// Picks a uniformly random action with probability `randomness`, the
/// policy's deterministic choice otherwise.
pub(crate) fn epsilon_choice(
    randomness: f64,
    num_actions: usize,
    rng: &mut SimRng,
    greedy: impl FnOnce() -> usize,
) -> usize {
    if randomness > 0.0 && rng.random::<f64>() < randomness {
        rng.random_range(0..num_actions)
    } else {
        greedy()
    }
}

pub(crate) fn check_randomness(randomness: f64) -> Result<()> {
    if (0.0..=1.0).contains(&randomness) {
        Ok(())
    } else {
        Err(EnvError::InvalidArgument(format!(
            "randomness {randomness} not in [0, 1]"
        )))
    }
}

/// `(x_t, x_{t+1}, R_{t+1}, γ_{t+1})` plus an episode-start flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: FeatureVector,
    pub x_next: FeatureVector,
    pub reward: f64,
    pub gamma_next: f64,
    pub episode_start: bool,
}

/// Raw state-level transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTransition {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub episode_start: bool,
}

/// Endless on-policy walk; episodes are concatenated, each terminal step is
/// followed by a reset.
pub struct Walker<'a> {
    mdp: &'a dyn Mdp,
    policy: &'a dyn Policy,
    env_rng: SimRng,
    policy_rng: SimRng,
    state: Vec<f64>,
    episode_start: bool,
}

impl<'a> Walker<'a> {
    pub fn new(mdp: &'a dyn Mdp, policy: &'a dyn Policy, seed: u64) -> Self {
        let mut env_rng = rng::stream(seed, Stream::Environment);
        let policy_rng = rng::stream(seed, Stream::Policy);
        let state = mdp.reset(&mut env_rng);
        Self {
            mdp,
            policy,
            env_rng,
            policy_rng,
            state,
            episode_start: true,
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }
}

impl Iterator for Walker<'_> {
    type Item = StateTransition;

    fn next(&mut self) -> Option<StateTransition> {
        let action = self.policy.sample_action(&self.state, &mut self.policy_rng);
        let step = self.mdp.step(&self.state, action, &mut self.env_rng);
        let out = StateTransition {
            state: std::mem::take(&mut self.state),
            next_state: step.next_state.clone(),
            reward: step.reward,
            terminal: step.terminal,
            episode_start: self.episode_start,
        };
        if step.terminal {
            self.state = self.mdp.reset(&mut self.env_rng);
            self.episode_start = true;
        } else {
            self.state = step.next_state;
            self.episode_start = false;
        }
        Some(out)
    }
}

/// Featurized transition stream of length `n`.
pub struct TransitionStream<'a> {
    walker: Walker<'a>,
    features: &'a FeatureMap,
    gamma: f64,
    remaining: usize,
    /// Features of the current state, reused as the next transition's `x`.
    cached: Option<FeatureVector>,
}

impl Iterator for TransitionStream<'_> {
    type Item = Transition;

    fn next(&mut self) -> Option<Transition> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let st = self.walker.next()?;
        // Walker states are in bounds and finite by construction, and the
        // dimensions were checked when the stream was built.
        let x = match self.cached.take() {
            Some(x) => x,
            None => self
                .features
                .featurize(&st.state)
                .expect("state featurizes"),
        };
        let (x_next, gamma_next) = if st.terminal {
            (FeatureVector::zeros(self.features.dim()), 0.0)
        } else {
            let xn = self
                .features
                .featurize(&st.next_state)
                .expect("state featurizes");
            self.cached = Some(xn.clone());
            (xn, self.gamma)
        };
        Some(Transition {
            x,
            x_next,
            reward: st.reward,
            gamma_next,
            episode_start: st.episode_start,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Deterministic stream of `n` on-policy transitions for `seed`.
pub fn generate_transitions<'a>(
    mdp: &'a dyn Mdp,
    policy: &'a dyn Policy,
    features: &'a FeatureMap,
    n: usize,
    seed: u64,
) -> Result<TransitionStream<'a>> {
    if n == 0 {
        return Err(EnvError::InvalidArgument(
            "need at least one transition".into(),
        ));
    }
    if features.state_dims() != mdp.bounds().dims() {
        return Err(EnvError::StateDimension {
            expected: features.state_dims(),
            found: mdp.bounds().dims(),
        });
    }
    Ok(TransitionStream {
        walker: Walker::new(mdp, policy, seed),
        features,
        gamma: mdp.gamma(),
        remaining: n,
        cached: None,
    })
}

/// Environment + its evaluation policy, selected by name.
pub struct Benchmark {
    pub mdp: Box<dyn Mdp>,
    pub policy: Box<dyn Policy>,
}

pub const ENVIRONMENTS: [&str; 2] = ["mountain-car", "puddle-world"];

/// Default policy randomness for a benchmark.
pub fn default_randomness(name: &str) -> Option<f64> {
    match name {
        "mountain-car" => Some(0.2),
        "puddle-world" => Some(0.1),
        _ => None,
    }
}

pub fn benchmark(name: &str, randomness: Option<f64>) -> Result<Benchmark> {
    let r = randomness
        .or_else(|| default_randomness(name))
        .ok_or_else(|| EnvError::UnknownEnvironment(name.to_string()))?;
    Ok(match name {
        "mountain-car" => Benchmark {
            mdp: Box::new(mountain_car()),
            policy: Box::new(energy_pumping_policy(r)?),
        },
        "puddle-world" => Benchmark {
            mdp: Box::new(puddle_world()),
            policy: Box::new(greedy_distance_policy(r)?),
        },
        other => return Err(EnvError::UnknownEnvironment(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_feature_map, FeatureSpec};

    #[test]
    fn single_transition_starts_an_episode() {
        let b = benchmark("mountain-car", None).unwrap();
        let spec = FeatureSpec::TileCoding {
            tilings: 4,
            tiles_per_dim: 4,
            memory_size: 64,
        };
        let map = build_feature_map(&spec, b.mdp.bounds(), 0).unwrap();
        let trs: Vec<_> = generate_transitions(&*b.mdp, &*b.policy, &map, 1, 5)
            .unwrap()
            .collect();
        assert_eq!(trs.len(), 1);
        assert!(trs[0].episode_start);
    }

    #[test]
    fn unknown_environment_is_an_error() {
        assert!(matches!(
            benchmark("acrobot", None),
            Err(EnvError::UnknownEnvironment(_))
        ));
    }
}
