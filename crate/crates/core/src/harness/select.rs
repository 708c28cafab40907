use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Params, Result, RunRecord, RunStatus};
use crate::agents::{AgentConfig, Algorithm};

/// Which part of the learning curve the selection score sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    #[default]
    Full,
    SecondHalf,
}

/// Mean and standard error of RMSE per evaluation step over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub algorithm: Algorithm,
    pub params: Params,
    pub steps: Vec<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub runs: usize,
    pub diverged: usize,
}

impl LearningCurve {
    pub fn final_mean(&self) -> Option<f64> {
        self.mean.last().copied()
    }

    pub fn final_stderr(&self) -> Option<f64> {
        self.stderr.last().copied()
    }
}

/// Sample mean and standard error (`std / √n`, zero for one sample).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups records by assignment, preserving first-appearance order.
fn group(records: &[RunRecord]) -> Vec<Vec<&RunRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = r.assignment_key();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| groups.remove(&k).unwrap())
        .collect()
}

/// One curve per assignment over its completed runs; assignments where every
/// run diverged are omitted.
pub fn learning_curves(records: &[RunRecord]) -> Vec<LearningCurve> {
    group(records)
        .into_iter()
        .filter_map(|runs| {
            let done: Vec<&&RunRecord> = runs
                .iter()
                .filter(|r| r.status == RunStatus::Completed)
                .collect();
            let first = done.first()?;
            let steps: Vec<usize> = first.curve.iter().map(|p| p.step).collect();
            let mut mean = Vec::with_capacity(steps.len());
            let mut stderr = Vec::with_capacity(steps.len());
            for i in 0..steps.len() {
                let xs: Vec<f64> = done
                    .iter()
                    .filter_map(|r| r.curve.get(i).map(|p| p.rmse))
                    .collect();
                let (m, s) = mean_stderr(&xs);
                mean.push(m);
                stderr.push(s);
            }
            Some(LearningCurve {
                algorithm: first.algorithm,
                params: first.params.clone(),
                steps,
                mean,
                stderr,
                runs: done.len(),
                diverged: runs.len() - done.len(),
            })
        })
        .collect()
}

fn run_score(r: &RunRecord, criterion: Criterion) -> f64 {
    if r.status == RunStatus::Diverged {
        return f64::INFINITY;
    }
    let start = match criterion {
        Criterion::Full => 0,
        Criterion::SecondHalf => r.curve.len() / 2,
    };
    r.curve[start..].iter().map(|p| p.rmse).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestParams {
    pub algorithm: Algorithm,
    pub params: Params,
    /// Seed-averaged sum of RMSE over the selected part of the curve.
    pub score: f64,
    pub runs: usize,
}

/// Per algorithm, the assignment with the smallest seed-averaged RMSE sum.
/// Any diverged seed disqualifies an assignment; ties keep the earliest.
pub fn select_best_params(records: &[RunRecord], criterion: Criterion) -> Result<Vec<BestParams>> {
    let mut best: BTreeMap<Algorithm, BestParams> = BTreeMap::new();
    let mut seen: Vec<Algorithm> = Vec::new();
    for runs in group(records) {
        let alg = runs[0].algorithm;
        if !seen.contains(&alg) {
            seen.push(alg);
        }
        let score = runs.iter().map(|r| run_score(r, criterion)).sum::<f64>() / runs.len() as f64;
        if !score.is_finite() {
            continue;
        }
        let candidate = BestParams {
            algorithm: alg,
            params: runs[0].params.clone(),
            score,
            runs: runs.len(),
        };
        match best.get(&alg) {
            Some(b) if b.score <= score => {}
            _ => {
                best.insert(alg, candidate);
            }
        }
    }
    if best.is_empty() {
        return Err(HarnessError::AllDiverged);
    }
    Ok(seen.into_iter().filter_map(|a| best.remove(&a)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub algorithm: Algorithm,
    pub param_name: String,
    pub param_value: f64,
    pub best_lambda: f64,
    /// Mean over seeds of the curve-averaged RMSE (∞ if every λ diverged).
    pub mean_rmse: f64,
    pub stderr: f64,
}

/// For each algorithm and each value of `param`, the best λ's mean
/// curve-averaged RMSE. Other parameters are assumed fixed within an
/// algorithm.
pub fn sensitivity_table(records: &[RunRecord], param: &str) -> Vec<SensitivityRow> {
    // (algorithm, value bits) → rows in first-appearance order.
    let mut cells: Vec<((Algorithm, u64), SensitivityRow)> = Vec::new();
    for runs in group(records) {
        let first = runs[0];
        let Some(value) = first.params.get(param) else {
            continue;
        };
        let averages: Vec<f64> = runs
            .iter()
            .map(|r| match r.status {
                RunStatus::Completed if !r.curve.is_empty() => {
                    r.curve.iter().map(|p| p.rmse).sum::<f64>() / r.curve.len() as f64
                }
                _ => f64::INFINITY,
            })
            .collect();
        let (mean, stderr) = if averages.iter().all(|a| a.is_finite()) {
            mean_stderr(&averages)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let row = SensitivityRow {
            algorithm: first.algorithm,
            param_name: param.to_string(),
            param_value: value,
            best_lambda: first.params.lambda,
            mean_rmse: mean,
            stderr,
        };
        let key = (first.algorithm, value.to_bits());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, existing)) => {
                if row.mean_rmse < existing.mean_rmse {
                    *existing = row;
                }
            }
            None => cells.push((key, row)),
        }
    }
    cells.into_iter().map(|(_, r)| r).collect()
}

/// Parameter grids; step sizes are divided by the feature `‖x‖₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

pub const LAMBDA_GRID: [f64; 15] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.93, 0.95, 0.97, 0.99, 1.0,
];

impl SweepGrid {
    pub fn new(feature_l1: f64) -> Self {
        let alpha: Vec<f64> = (-7..=5).map(|j| 0.1 * 2f64.powi(j) / feature_l1).collect();
        let eta = alpha.iter().map(|a| 0.1 * a).collect();
        let xi = (0..13)
            .map(|i| 10f64.powf(-5.0 + 0.75 * i as f64))
            .collect();
        Self {
            alpha,
            lambda: LAMBDA_GRID.to_vec(),
            eta,
            xi,
        }
    }

    /// The swept parameter other than λ for an algorithm.
    pub fn primary_param(algorithm: Algorithm) -> &'static str {
        match algorithm {
            Algorithm::Td => "alpha",
            Algorithm::Lstd | Algorithm::LstdP | Algorithm::LstdL => "xi",
            Algorithm::AtdL | Algorithm::AtdSvd => "eta",
        }
    }

    /// Full (primary × λ) grid around `base`; `base`'s other fields are kept.
    pub fn expand(&self, base: &AgentConfig) -> Vec<AgentConfig> {
        let primary: &[f64] = match Self::primary_param(base.algorithm()) {
            "alpha" => &self.alpha,
            "xi" => &self.xi,
            _ => &self.eta,
        };
        let mut out = Vec::with_capacity(primary.len() * self.lambda.len());
        for &p in primary {
            for &l in &self.lambda {
                let mut c = base.with_lambda(l);
                match &mut c {
                    AgentConfig::Td { alpha, .. } => *alpha = p,
                    AgentConfig::Lstd { xi, .. }
                    | AgentConfig::LstdP { xi, .. }
                    | AgentConfig::LstdL { xi, .. } => *xi = p,
                    AgentConfig::AtdL { eta, .. } | AgentConfig::AtdSvd { eta, .. } => *eta = p,
                }
                out.push(c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_the_documented_sizes() {
        let g = SweepGrid::new(1.0);
        assert_eq!(
            (g.alpha.len(), g.lambda.len(), g.eta.len(), g.xi.len()),
            (13, 15, 13, 13)
        );
        assert!((g.alpha[0] - 0.1 / 128.0).abs() < 1e-18);
        assert!((g.xi[12] - 1e4).abs() < 1e-9);
        assert!((g.xi[0] - 1e-5).abs() < 1e-20);
        let td = g.expand(&AgentConfig::Td {
            alpha: 0.0,
            lambda: 0.0,
        });
        assert_eq!(td.len(), 195);
    }

    #[test]
    fn mean_stderr_by_hand() {
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[5.0]), (5.0, 0.0));
    }
}
