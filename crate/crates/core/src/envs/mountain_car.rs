use rand::Rng;

use super::{check_randomness, epsilon_choice, Mdp, Policy, Result, Step};
use crate::features::StateBounds;
use crate::rng::SimRng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.5;
pub const MAX_SPEED: f64 = 0.07;

/// Classic mountain car: state `(position, velocity)`, actions
/// `0, 1, 2 ↦ throttle −1, 0, +1`, reward −1 per step, undiscounted.
#[derive(Debug, Clone)]
pub struct MountainCar {
    bounds: StateBounds,
}

pub fn mountain_car() -> MountainCar {
    MountainCar {
        bounds: StateBounds {
            low: vec![MIN_POSITION, -MAX_SPEED],
            high: vec![MAX_POSITION, MAX_SPEED],
        },
    }
}

impl MountainCar {
    /// Deterministic dynamics; `throttle ∈ {−1, 0, 1}`.
    pub fn dynamics(position: f64, velocity: f64, throttle: f64) -> (f64, f64, bool) {
        let mut v = velocity + 0.001 * throttle - 0.0025 * (3.0 * position).cos();
        v = v.clamp(-MAX_SPEED, MAX_SPEED);
        let mut p = position + v;
        if p < MIN_POSITION {
            p = MIN_POSITION;
            v = 0.0;
        }
        let terminal = p >= MAX_POSITION;
        (p.min(MAX_POSITION), v, terminal)
    }
}

impl Mdp for MountainCar {
    fn name(&self) -> &'static str {
        "mountain-car"
    }

    fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn reset(&self, rng: &mut SimRng) -> Vec<f64> {
        vec![rng.random_range(-0.6..-0.4), 0.0]
    }

    fn step(&self, state: &[f64], action: usize, _rng: &mut SimRng) -> Step {
        assert!(action < 3, "mountain car action {action} out of range");
        let (p, v, terminal) = Self::dynamics(state[0], state[1], action as f64 - 1.0);
        Step {
            next_state: vec![p, v],
            reward: -1.0,
            terminal,
        }
    }
}

/// Throttle in the direction of travel (forward when at rest).
#[derive(Debug, Clone)]
pub struct EnergyPumping {
    pub randomness: f64,
}

pub fn energy_pumping_policy(randomness: f64) -> Result<EnergyPumping> {
    check_randomness(randomness)?;
    Ok(EnergyPumping { randomness })
}

impl EnergyPumping {
    pub fn greedy_action(state: &[f64]) -> usize {
        if state[1] >= 0.0 {
            2
        } else {
            0
        }
    }
}

impl Policy for EnergyPumping {
    fn sample_action(&self, state: &[f64], rng: &mut SimRng) -> usize {
        epsilon_choice(self.randomness, 3, rng, || Self::greedy_action(state))
    }
}
