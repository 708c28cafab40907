use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_randomness, epsilon_choice, Mdp, Policy, Result, Step};
use crate::features::StateBounds;
use crate::rng::SimRng;

pub const STEP_SIZE: f64 = 0.05;
pub const NOISE_STD: f64 = 0.01;
pub const GOAL: f64 = 0.95;
pub const PUDDLE_RADIUS: f64 = 0.1;
pub const PUDDLE_PENALTY: f64 = 400.0;

/// Puddle axes as segment endpoints.
pub const PUDDLES: [[(f64, f64); 2]; 2] =
    [[(0.10, 0.75), (0.45, 0.75)], [(0.45, 0.40), (0.45, 0.80)]];

/// Actions in tie-breaking order: up, down, right, left.
pub const ACTIONS: [(f64, f64); 4] = [
    (0.0, STEP_SIZE),
    (0.0, -STEP_SIZE),
    (STEP_SIZE, 0.0),
    (-STEP_SIZE, 0.0),
];

/// Continuous grid world on `[0, 1]²`: reach the top-right corner while
/// avoiding two capsule-shaped puddles.
#[derive(Debug, Clone)]
pub struct PuddleWorld {
    bounds: StateBounds,
}

pub fn puddle_world() -> PuddleWorld {
    PuddleWorld {
        bounds: StateBounds {
            low: vec![0.0, 0.0],
            high: vec![1.0, 1.0],
        },
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Deepest penetration into any puddle (0 outside all of them).
pub fn puddle_depth(x: f64, y: f64) -> f64 {
    PUDDLES
        .iter()
        .map(|[a, b]| (PUDDLE_RADIUS - segment_distance((x, y), *a, *b)).max(0.0))
        .fold(0.0, f64::max)
}

pub fn reward_at(x: f64, y: f64) -> f64 {
    -1.0 - PUDDLE_PENALTY * puddle_depth(x, y)
}

pub fn in_goal(x: f64, y: f64) -> bool {
    x >= GOAL && y >= GOAL
}

impl Mdp for PuddleWorld {
    fn name(&self) -> &'static str {
        "puddle-world"
    }

    fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn reset(&self, rng: &mut SimRng) -> Vec<f64> {
        loop {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            if !in_goal(x, y) {
                return vec![x, y];
            }
        }
    }

    fn step(&self, state: &[f64], action: usize, rng: &mut SimRng) -> Step {
        let (dx, dy) = ACTIONS[action];
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let x = (state[0] + dx + NOISE_STD * nx).clamp(0.0, 1.0);
        let y = (state[1] + dy + NOISE_STD * ny).clamp(0.0, 1.0);
        Step {
            next_state: vec![x, y],
            reward: reward_at(x, y),
            terminal: in_goal(x, y),
        }
    }
}

/// Moves to whichever neighbour is closest to `(1, 1)`.
#[derive(Debug, Clone)]
pub struct GreedyDistance {
    pub randomness: f64,
}

pub fn greedy_distance_policy(randomness: f64) -> Result<GreedyDistance> {
    check_randomness(randomness)?;
    Ok(GreedyDistance { randomness })
}

impl GreedyDistance {
    pub fn greedy_action(state: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (a, (dx, dy)) in ACTIONS.iter().enumerate() {
            let x = (state[0] + dx).clamp(0.0, 1.0);
            let y = (state[1] + dy).clamp(0.0, 1.0);
            let dist = ((1.0 - x).powi(2) + (1.0 - y).powi(2)).sqrt();
            if dist < best.0 {
                best = (dist, a);
            }
        }
        best.1
    }
}

impl Policy for GreedyDistance {
    fn sample_action(&self, state: &[f64], rng: &mut SimRng) -> usize {
        epsilon_choice(self.randomness, 4, rng, || Self::greedy_action(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewards_inside_and_outside_puddles() {
        assert_eq!(reward_at(0.9, 0.9), -1.0);
        assert!((reward_at(0.30, 0.75) - (-41.0)).abs() < 1e-12);
        assert!(reward_at(0.45, 0.6) <= -40.0);
    }

    #[test]
    fn goal_region() {
        assert!(in_goal(0.96, 0.96));
        assert!(!in_goal(0.96, 0.5));
    }

    #[test]
    fn greedy_moves_along_the_longer_gap() {
        assert_eq!(GreedyDistance::greedy_action(&[0.5, 0.9]), 2);
        assert_eq!(GreedyDistance::greedy_action(&[0.9, 0.5]), 0);
        // Tie goes to the first action in order.
        assert_eq!(GreedyDistance::greedy_action(&[0.5, 0.5]), 0);
    }
}
