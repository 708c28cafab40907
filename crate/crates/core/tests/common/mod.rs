#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketch_lstd::envs::Transition;
use sketch_lstd::features::FeatureVector;
use sketch_lstd::linalg::DenseMatrix;

/// Episodic stream of random dense features in `[0, 1)` with discount 0.9
/// and a 5% chance of termination per step.
pub fn random_transitions(d: usize, n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
    let mut start = true;
    for _ in 0..n {
        let terminal = rng.random_bool(0.05);
        let reward = rng.random_range(-1.0..1.0);
        let next: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        out.push(Transition {
            x: FeatureVector::Dense(x.clone()),
            x_next: if terminal {
                FeatureVector::zeros(d)
            } else {
                FeatureVector::Dense(next.clone())
            },
            reward,
            gamma_next: if terminal { 0.0 } else { 0.9 },
            episode_start: start,
        });
        start = terminal;
        x = if terminal {
            (0..d).map(|_| rng.random()).collect()
        } else {
            next
        };
    }
    out
}

/// Same as [`random_transitions`] with sparse one-hot-ish features
/// (`active` random indices set to 1).
pub fn sparse_transitions(d: usize, active: usize, n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let entries = (0..active).map(|_| (rng.random_range(0..d), 1.0)).collect();
        FeatureVector::sparse(d, entries)
    };
    let mut x = draw(&mut rng);
    let mut out = Vec::with_capacity(n);
    let mut start = true;
    for _ in 0..n {
        let terminal = rng.random_bool(0.05);
        let next = draw(&mut rng);
        out.push(Transition {
            x: x.clone(),
            x_next: if terminal {
                FeatureVector::zeros(d)
            } else {
                next.clone()
            },
            reward: rng.random_range(-1.0..1.0),
            gamma_next: if terminal { 0.0 } else { 0.9 },
            episode_start: start,
        });
        start = terminal;
        x = if terminal { draw(&mut rng) } else { next };
    }
    out
}

/// Batch `(Σ e dᵀ, Σ R e)` with the trace convention of the agents.
pub fn batch_system(trs: &[Transition], lambda: f64) -> (DenseMatrix, Vec<f64>) {
    let d = trs[0].x.dim();
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = vec![0.0; d];
    let mut e = vec![0.0; d];
    let mut prev_gamma = 0.0;
    for tr in trs {
        let c = if tr.episode_start {
            0.0
        } else {
            prev_gamma * lambda
        };
        let x = tr.x.to_dense();
        for (ei, xi) in e.iter_mut().zip(&x) {
            *ei = c * *ei + xi;
        }
        let xn = tr.x_next.to_dense();
        let diff: Vec<f64> = x
            .iter()
            .zip(&xn)
            .map(|(a, b)| a - tr.gamma_next * b)
            .collect();
        a.add_outer(1.0, &e, &diff);
        for (bi, ei) in b.iter_mut().zip(&e) {
            *bi += tr.reward * ei;
        }
        prev_gamma = tr.gamma_next;
    }
    (a, b)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `‖a − b‖∞ / max(‖b‖∞, tiny)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    max_abs_diff(a, b) / scale
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Deterministic ring of `n` states, tabular features, per-state rewards,
/// continuing with discount `gamma`.
pub fn ring_transitions(n: usize, steps: usize, gamma: f64) -> (Vec<Transition>, Vec<f64>) {
    let rewards: Vec<f64> = (0..n).map(|s| ((s * 7 + 3) % 5) as f64 - 2.0).collect();
    let onehot = |s: usize| FeatureVector::sparse(n, vec![(s, 1.0)]);
    let trs = (0..steps)
        .map(|t| {
            let s = t % n;
            Transition {
                x: onehot(s),
                x_next: onehot((s + 1) % n),
                reward: rewards[s],
                gamma_next: gamma,
                episode_start: t == 0,
            }
        })
        .collect();
    // v = r + γ P v  ⇒  v_s = Σ_j γ^j r_{s+j} / (1 − γⁿ)
    let values = (0..n)
        .map(|s| {
            (0..n)
                .map(|j| gamma.powi(j as i32) * rewards[(s + j) % n])
                .sum::<f64>()
                / (1.0 - gamma.powi(n as i32))
        })
        .collect();
    (trs, values)
}
