//! Invariant battery behind `verify`. Each `measure_*` function returns raw
//! numbers so callers can apply their own tolerances; `run_check` applies
//! the defaults below.

use std::time::Instant;

use rand::Rng;
use sketch_lstd::agents::{Lstd, LstdL, LstdP};
use sketch_lstd::envs::Transition;
use sketch_lstd::features::FeatureVector;
use sketch_lstd::linalg::{self, DenseMatrix, LinalgError};
use sketch_lstd::rng::{self, SimRng, Stream};
use sketch_lstd::sketch::{
    estimate_jl_distortion, row_rank_statistics, sample_sketch, SketchFamily, SketchSpec,
};
use sketch_lstd::{Agent, Algorithm};

pub const CHECKS: [&str; 11] = [
    "sherman-morrison",
    "svd",
    "min-norm",
    "svd-update",
    "incremental-batch",
    "thm1",
    "prop1",
    "prop2",
    "sketch-identity",
    "jl",
    "unbiased",
];

/// Deliberate defects for exercising the failure path of `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flips the sign of `v` in the incremental Sherman-Morrison updates.
    ShermanMorrisonSign,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sherman-morrison-sign" => Ok(Self::ShermanMorrisonSign),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

const SEED: u64 = 20_240_917;

fn rng_for(seed: u64) -> SimRng {
    rng::stream(seed, Stream::Diagnostics)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vec(n: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    max_abs_diff(a, b) / scale
}

/// Relative error of 50 chained Sherman-Morrison updates of a 20×20
/// inverse against direct inversion.
pub fn measure_sherman_morrison(fault: Option<Fault>) -> Result<f64, LinalgError> {
    let mut rng = rng_for(SEED);
    let d = 20;
    let mut a =
        DenseMatrix::scaled_identity(d, 4.0).add(&random_matrix(d, d, &mut rng).scale(0.3))?;
    let mut inv = linalg::invert(&a)?;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let u: Vec<f64> = random_vec(d, &mut rng).iter().map(|x| 0.3 * x).collect();
        let v: Vec<f64> = random_vec(d, &mut rng).iter().map(|x| 0.3 * x).collect();
        a.add_outer(1.0, &u, &v);
        let v_used: Vec<f64> = match fault {
            Some(Fault::ShermanMorrisonSign) => v.iter().map(|x| -x).collect(),
            None => v,
        };
        linalg::sherman_morrison_in_place(&mut inv, &u, &v_used, 1e-10)?;
        let direct = linalg::invert(&a)?;
        worst = worst.max(rel_err(inv.data(), direct.data()));
    }
    Ok(worst)
}

/// `(reconstruction error, orthonormality error)` of the SVD of random
/// tall, wide and rank-deficient matrices, relative to `‖M‖_F`.
pub fn measure_svd() -> Result<(f64, f64), LinalgError> {
    let mut rng = rng_for(SEED + 1);
    let mut recon = 0.0f64;
    let mut ortho = 0.0f64;
    let rank_def = random_matrix(25, 5, &mut rng).matmul(&random_matrix(5, 18, &mut rng))?;
    for m in [
        random_matrix(30, 20, &mut rng),
        random_matrix(12, 40, &mut rng),
        rank_def,
    ] {
        let s = linalg::svd(&m)?;
        let diff = s.reconstruct().sub(&m)?.frobenius_norm() / m.frobenius_norm();
        recon = recon.max(diff);
        ortho = ortho.max(s.orthonormality_error());
    }
    Ok((recon, ortho))
}

/// Max relative gap between `min_norm_solve` and the pseudo-inverse
/// solution on random underdetermined systems.
pub fn measure_min_norm() -> Result<f64, LinalgError> {
    let mut rng = rng_for(SEED + 2);
    let mut worst = 0.0f64;
    for (k, d) in [(5, 30), (10, 64), (16, 17)] {
        let a = random_matrix(k, d, &mut rng);
        let b = random_vec(k, &mut rng);
        let w = linalg::min_norm_solve(&a, &b, 0.0)?;
        let reference = linalg::pseudo_inverse_solve(&a, &b, linalg::DEFAULT_RANK_TOL)?;
        worst = worst.max(rel_err(&w, &reference));
    }
    Ok(worst)
}

/// Max relative gap between singular values maintained by rank-one updates
/// and those of the batch SVD of the accumulated matrix.
pub fn measure_svd_update() -> Result<f64, LinalgError> {
    let mut rng = rng_for(SEED + 3);
    let d = 15;
    let mut acc = DenseMatrix::zeros(d, d);
    let mut inc = linalg::TruncatedSvd::empty(d, d, d);
    let mut worst = 0.0f64;
    for step in 0..40 {
        let u = random_vec(d, &mut rng);
        let v = random_vec(d, &mut rng);
        acc.add_outer(1.0, &u, &v);
        inc = linalg::rank1_svd_update(&inc, &u, &v, 1e-12)?;
        if step % 5 == 4 {
            let batch = linalg::svd(&acc)?;
            let n = batch.rank().min(inc.rank());
            worst = worst.max(rel_err(
                &inc.singular_values[..n],
                &batch.singular_values[..n],
            ));
            let recon = inc.reconstruct().sub(&acc)?.frobenius_norm() / acc.frobenius_norm();
            worst = worst.max(recon);
        }
    }
    Ok(worst)
}

/// Episodic random transitions with dense features in `[0, 1)`.
pub fn random_transitions(d: usize, n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let draw = |rng: &mut SimRng| (0..d).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
    let mut x = draw(&mut rng);
    let mut start = true;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let terminal = rng.random_bool(0.05);
        let next = draw(&mut rng);
        out.push(Transition {
            x: FeatureVector::Dense(x.clone()),
            x_next: if terminal {
                FeatureVector::zeros(d)
            } else {
                FeatureVector::Dense(next.clone())
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

/// Batch `(Σ e (x − γx')ᵀ, Σ R e)` under the agents' trace convention.
pub fn batch_system(trs: &[Transition], lambda: f64) -> (DenseMatrix, Vec<f64>) {
    let d = trs[0].x.dim();
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = vec![0.0; d];
    let mut e = vec![0.0; d];
    let mut prev_gamma = 0.0;
    for tr in trs {
        let decay = if tr.episode_start {
            0.0
        } else {
            prev_gamma * lambda
        };
        let x = tr.x.to_dense();
        for (ei, xi) in e.iter_mut().zip(&x) {
            *ei = decay * *ei + xi;
        }
        let xn = tr.x_next.to_dense();
        let diff: Vec<f64> = x
            .iter()
            .zip(&xn)
            .map(|(a, b)| a - tr.gamma_next * b)
            .collect();
        a.add_outer(1.0, &e, &diff);
        linalg::axpy(tr.reward, &e, &mut b);
        prev_gamma = tr.gamma_next;
    }
    (a, b)
}

/// Relative error of incremental LSTD, LSTD-P and LSTD-L weights against
/// direct batch solves after `n` random transitions.
pub fn measure_incremental_batch(
    d: usize,
    k: usize,
    n: usize,
) -> Result<Vec<(Algorithm, f64)>, Box<dyn std::error::Error>> {
    let (xi, lambda) = (1.0, 0.8);
    let trs = random_transitions(d, n, SEED + 4);
    let (a, b) = batch_system(&trs, lambda);
    let ridge = DenseMatrix::scaled_identity(d, 1.0 / xi);
    let mut out = Vec::new();

    let mut lstd = Lstd::new(d, xi, lambda);
    let sketch_p = sample_sketch(SketchSpec::new(SketchFamily::Gaussian, k, d, SEED + 5))?;
    let s_p = sketch_p.materialize();
    let mut lstd_p = LstdP::new(sketch_p, xi, lambda);
    let sketch_l = sample_sketch(SketchSpec::new(SketchFamily::Gaussian, k, d, SEED + 6))?;
    let s_l = sketch_l.materialize();
    let mut lstd_l = LstdL::new(sketch_l, xi, lambda);
    for tr in &trs {
        lstd.observe(tr)?;
        lstd_p.observe(tr)?;
        lstd_l.observe(tr)?;
    }

    let w = linalg::invert(&a.add(&ridge)?)?.matvec(&b)?;
    out.push((Algorithm::Lstd, rel_err(&lstd.weights()?, &w)));

    let sas = s_p.matmul(&a)?.matmul(&s_p.transpose())?;
    let sys = sas.add(&DenseMatrix::scaled_identity(k, 1.0 / xi))?;
    let w = linalg::invert(&sys)?.matvec(&s_p.matvec(&b)?)?;
    out.push((Algorithm::LstdP, rel_err(&lstd_p.weights()?, &w)));

    let w = linalg::min_norm_solve(&s_l.matmul(&a)?, &s_l.matvec(&b)?, 1.0 / xi)?;
    out.push((Algorithm::LstdL, rel_err(&lstd_l.weights()?, &w)));
    Ok(out)
}

/// Random PSD `A` of rank `rank` and a right-hand side in its range.
fn psd_system(
    d: usize,
    rank: usize,
    rng: &mut SimRng,
) -> Result<(DenseMatrix, Vec<f64>), LinalgError> {
    // Twice as many columns as the rank keeps the nonzero spectrum well
    // conditioned; a rank-deficient factor with d ≥ 2·rank is too.
    let cols = if rank == d { 2 * d } else { rank };
    let f = random_matrix(d, cols, rng);
    let a = f.matmul(&f.transpose())?;
    let z = random_vec(d, rng);
    let b = a.matvec(&z)?;
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointCase {
    pub d: usize,
    pub k: usize,
    pub rank: usize,
    /// `‖w − A†b‖₂`, infinite if the iteration did not converge.
    pub error: f64,
}

/// Iterates the expected ATD update on `systems` random PSD systems with
/// `d ≤ 20`, `k ∈ {4, 8, d}`, `α = 0.25`, `η = 1/(4λ_max)`.
pub fn measure_fixed_point(
    systems: usize,
    max_iters: usize,
) -> Result<Vec<FixedPointCase>, LinalgError> {
    let mut rng = rng_for(SEED + 7);
    let mut out = Vec::with_capacity(systems);
    for i in 0..systems {
        let d = rng.random_range(8..=20);
        let k = [4, 8, d][i % 3];
        let rank = if i % 2 == 0 { d } else { d / 2 };
        let (a, b) = psd_system(d, rank, &mut rng)?;
        let spectrum = linalg::svd(&a)?;
        let lambda_max = spectrum.sigma_max();
        let lambda_min = spectrum.singular_values[..rank]
            .last()
            .copied()
            .unwrap_or(lambda_max);
        let s = sample_sketch(SketchSpec::new(
            SketchFamily::Gaussian,
            k,
            d,
            SEED + i as u64,
        ))
        .map_err(|e| LinalgError::InvalidArgument(e.to_string()))?
        .materialize();
        let target = linalg::pseudo_inverse_solve(&a, &b, 1e-10)?;
        let error = match linalg::expected_update_fixed_point(
            &a,
            &b,
            &s,
            0.25,
            1.0 / (4.0 * lambda_max),
            max_iters,
            1e-8 * lambda_min,
        ) {
            // ‖w − A†b‖ ≤ ‖b − Aw‖ / λ_min⁺ ≤ 1e-8 once converged.
            Ok(w) => linalg::norm2(
                &w.iter()
                    .zip(&target)
                    .map(|(x, y)| x - y)
                    .collect::<Vec<_>>(),
            ),
            Err(LinalgError::NoConvergence { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        out.push(FixedPointCase { d, k, rank, error });
    }
    Ok(out)
}

/// `max |min_norm_solve(U_kᵀA, U_kᵀb, 0) − V_k Σ_k⁻¹ U_kᵀ b|` for a random
/// `d × d` system.
pub fn measure_top_singular_sketch(d: usize, k: usize) -> Result<f64, LinalgError> {
    let mut rng = rng_for(SEED + 8 + k as u64);
    let a = random_matrix(d, d, &mut rng);
    let b = random_vec(d, &mut rng);
    let full = linalg::svd(&a)?;
    let top = full.clone().truncate(k);
    let s = top.left.transpose();
    let w = linalg::min_norm_solve(&s.matmul(&a)?, &s.matvec(&b)?, 0.0)?;
    // V_k Σ_k⁻¹ U_kᵀ b
    let utb = s.matvec(&b)?;
    let scaled: Vec<f64> = utb
        .iter()
        .zip(&top.singular_values)
        .map(|(x, s)| x / s)
        .collect();
    let reference = top.right.matvec(&scaled)?;
    Ok(max_abs_diff(&w, &reference))
}

/// Fraction of Gaussian sketches `S` (`k × d`) for which `SA` has full row
/// rank, `A` being `d × d` of rank `rank`.
pub fn measure_row_rank(
    d: usize,
    rank: usize,
    k: usize,
    trials: usize,
) -> Result<f64, Box<dyn std::error::Error>> {
    let mut rng = rng_for(SEED + 9);
    let a = random_matrix(d, rank, &mut rng).matmul(&random_matrix(rank, d, &mut rng))?;
    Ok(row_rank_statistics(
        SketchSpec::new(SketchFamily::Gaussian, k, d, SEED + 10),
        &a,
        trials,
        1e-8,
    )?)
}

/// Entrywise max deviation of the Monte Carlo mean of `SᵀS` from `I`.
pub fn measure_second_moment(
    family: SketchFamily,
    k: usize,
    d: usize,
    samples: usize,
) -> Result<f64, Box<dyn std::error::Error>> {
    let mut acc = vec![0.0; d * d];
    for i in 0..samples {
        let m = sample_sketch(SketchSpec::new(
            family,
            k,
            d,
            rng::derive_seed(SEED + 11, i as u64),
        ))?
        .materialize();
        for r in 0..k {
            let row = m.row(r);
            for (p, &rp) in row.iter().enumerate() {
                if rp == 0.0 {
                    continue;
                }
                linalg::axpy(rp, row, &mut acc[p * d..(p + 1) * d]);
            }
        }
    }
    let n = samples as f64;
    let mut worst = 0.0f64;
    for p in 0..d {
        for q in 0..d {
            let target = if p == q { 1.0 } else { 0.0 };
            worst = worst.max((acc[p * d + q] / n - target).abs());
        }
    }
    Ok(worst)
}

/// Fraction of `sketches × vectors` pairs with `|‖Sx‖² − 1| ≤ ε`.
pub fn measure_jl(
    k: usize,
    d: usize,
    sketches: usize,
    vectors: usize,
    eps: f64,
) -> Result<f64, Box<dyn std::error::Error>> {
    Ok(estimate_jl_distortion(
        SketchSpec::new(SketchFamily::Gaussian, k, d, SEED + 12),
        sketches,
        vectors,
        eps,
    )?)
}

/// Left sketching keeps the true solution feasible: returns
/// `(max ‖SAw* − Sb‖∞ over families, ‖w_{k=d} − w*‖∞ / ‖w*‖∞)` where
/// `w* = A⁻¹b` and `w_{k=d}` is the min-norm solution with a square
/// Gaussian sketch.
pub fn measure_unbiased() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let mut rng = rng_for(SEED + 13);
    let d = 32;
    let a = DenseMatrix::scaled_identity(d, 3.0).add(&random_matrix(d, d, &mut rng))?;
    let b = random_vec(d, &mut rng);
    let w_star = linalg::invert(&a)?.matvec(&b)?;
    let mut residual = 0.0f64;
    for family in SketchFamily::ALL {
        let s = sample_sketch(SketchSpec::new(family, 8, d, SEED + 14))?.materialize();
        let lhs = s.matmul(&a)?.matvec(&w_star)?;
        residual = residual.max(max_abs_diff(&lhs, &s.matvec(&b)?));
    }
    let s = sample_sketch(SketchSpec::new(SketchFamily::Gaussian, d, d, SEED + 15))?.materialize();
    let w = linalg::min_norm_solve(&s.matmul(&a)?, &s.matvec(&b)?, 0.0)?;
    Ok((residual, rel_err(&w, &w_star)))
}

/// Runs one named check with the default tolerances.
pub fn run_check(name: &str, fault: Option<Fault>) -> Option<CheckOutcome> {
    let name = CHECKS.into_iter().find(|c| *c == name)?;
    let start = Instant::now();
    let result: Result<(bool, String), Box<dyn std::error::Error>> = (|| {
        Ok(match name {
            "sherman-morrison" => {
                let e = measure_sherman_morrison(fault)?;
                (e <= 1e-8, format!("max relative error {e:.2e} (tol 1e-8)"))
            }
            "svd" => {
                let (r, o) = measure_svd()?;
                (
                    r <= 1e-10 && o <= 1e-10,
                    format!("reconstruction {r:.2e}, orthonormality {o:.2e} (tol 1e-10)"),
                )
            }
            "min-norm" => {
                let e = measure_min_norm()?;
                (
                    e <= 1e-8,
                    format!("relative gap to pseudo-inverse {e:.2e} (tol 1e-8)"),
                )
            }
            "svd-update" => {
                let e = measure_svd_update()?;
                (
                    e <= 1e-8,
                    format!("relative gap to batch SVD {e:.2e} (tol 1e-8)"),
                )
            }
            "incremental-batch" => {
                let errs = measure_incremental_batch(64, 16, 500)?;
                let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
                let parts: Vec<String> = errs.iter().map(|(a, e)| format!("{a} {e:.2e}")).collect();
                (worst <= 1e-6, format!("{} (tol 1e-6)", parts.join(", ")))
            }
            "thm1" => {
                let cases = measure_fixed_point(50, 100_000)?;
                let worst = cases.iter().map(|c| c.error).fold(0.0, f64::max);
                (
                    worst <= 1e-6,
                    format!(
                        "max ‖w − A†b‖ {worst:.2e} over {} systems (tol 1e-6)",
                        cases.len()
                    ),
                )
            }
            "prop1" => {
                let e =
                    measure_top_singular_sketch(50, 5)?.max(measure_top_singular_sketch(50, 20)?);
                (e <= 1e-10, format!("max deviation {e:.2e} (tol 1e-10)"))
            }
            "prop2" => {
                let f = measure_row_rank(50, 30, 10, 1000)?;
                (
                    f >= 0.99,
                    format!("full row rank in {:.1}% of trials (need 99%)", 100.0 * f),
                )
            }
            "sketch-identity" => {
                let mut parts = Vec::new();
                let mut ok = true;
                for family in SketchFamily::ALL {
                    let e = measure_second_moment(family, 25, 50, 10_000)?;
                    ok &= e <= 0.05;
                    parts.push(format!("{family} {e:.3}"));
                }
                (
                    ok,
                    format!("max |E[SᵀS] − I|: {} (tol 0.05)", parts.join(", ")),
                )
            }
            "jl" => {
                let f = measure_jl(50, 1024, 100, 100, 0.5)?;
                (
                    f >= 0.9,
                    format!("{:.1}% of pairs within ε = 0.5 (need 90%)", 100.0 * f),
                )
            }
            "unbiased" => {
                let (res, gap) = measure_unbiased()?;
                (
                    res <= 1e-10 && gap <= 1e-8,
                    format!("‖SAw* − Sb‖ {res:.2e} (tol 1e-10), k = d gap {gap:.2e} (tol 1e-8)"),
                )
            }
            _ => unreachable!(),
        })
    })();
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Some(CheckOutcome {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}
