//! Random sketching matrices: Gaussian, count, combined (count then
//! Gaussian) and subsampled randomized Hadamard.
//!
//! A [`SketchMatrix`] keeps the family's implicit representation so that
//! [`SketchMatrix::apply`] can exploit sparse inputs; [`SketchMatrix::materialize`]
//! produces the dense `k × d` matrix used as a test oracle.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::linalg::{self, DenseMatrix};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("unsupported sketch dimensions k = {k}, d = {d} (need 1 <= k <= d)")]
    UnsupportedDim { k: usize, d: usize },
    #[error("dimension mismatch: sketch expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown sketch family `{0}`")]
    UnknownFamily(String),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchFamily {
    Gaussian,
    Count,
    Combined,
    Hadamard,
}

impl SketchFamily {
    pub const ALL: [SketchFamily; 4] =
        [Self::Gaussian, Self::Count, Self::Combined, Self::Hadamard];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Count => "count",
            Self::Combined => "combined",
            Self::Hadamard => "hadamard",
        }
    }
}

impl fmt::Display for SketchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchFamily {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| SketchError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchSpec {
    pub family: SketchFamily,
    /// Target dimension.
    pub k: usize,
    /// Source dimension.
    pub d: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(family: SketchFamily, k: usize, d: usize, seed: u64) -> Self {
        Self { family, k, d, seed }
    }

    pub fn validate(&self) -> Result<(), SketchError> {
        if self.k == 0 || self.k > self.d {
            return Err(SketchError::UnsupportedDim {
                k: self.k,
                d: self.d,
            });
        }
        Ok(())
    }

    /// Intermediate count-sketch dimension of the combined family.
    pub fn combined_inner_dim(&self) -> usize {
        self.d.min(4 * self.k)
    }
}

/// One nonzero `±1` per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMap {
    pub rows: Vec<usize>,
    pub signs: Vec<f64>,
    pub k: usize,
}

impl CountMap {
    fn sample(k: usize, d: usize, rng: &mut rng::SimRng) -> Self {
        let mut rows = Vec::with_capacity(d);
        let mut signs = Vec::with_capacity(d);
        for _ in 0..d {
            rows.push(rng.random_range(0..k));
            signs.push(if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        }
        Self { rows, signs, k }
    }

    fn apply(&self, x: &FeatureVector, out: &mut [f64]) {
        x.for_each_nonzero(|j, v| out[self.rows[j]] += self.signs[j] * v);
    }

    fn materialize(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.k, self.rows.len());
        for (j, (&r, &s)) in self.rows.iter().zip(&self.signs).enumerate() {
            m.set(r, j, s);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchRepr {
    /// Dense `k × d`, entries i.i.d. `N(0, 1/k)`.
    Gaussian(DenseMatrix),
    Count(CountMap),
    /// `gaussian (k × k') · count (k' × d)`.
    Combined {
        count: CountMap,
        gaussian: DenseMatrix,
    },
    /// `(1/√k) · rows(H_{d'}) · diag(signs)`, inputs zero-padded to `d'`.
    Hadamard {
        signs: Vec<f64>,
        rows: Vec<usize>,
        padded: usize,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    pub spec: SketchSpec,
    pub repr: SketchRepr,
}

fn gaussian_block(rows: usize, cols: usize, std: f64, rng: &mut rng::SimRng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        std * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Samples a sketch; a pure function of `spec`, seed included.
pub fn sample_sketch(spec: SketchSpec) -> Result<SketchMatrix, SketchError> {
    spec.validate()?;
    let SketchSpec { family, k, d, seed } = spec;
    let mut rng = rng::stream(seed, Stream::Sketch);
    let std = (1.0 / k as f64).sqrt();
    let repr = match family {
        SketchFamily::Gaussian => SketchRepr::Gaussian(gaussian_block(k, d, std, &mut rng)),
        SketchFamily::Count => SketchRepr::Count(CountMap::sample(k, d, &mut rng)),
        SketchFamily::Combined => {
            let inner = spec.combined_inner_dim();
            let count = CountMap::sample(inner, d, &mut rng);
            let gaussian = gaussian_block(k, inner, std, &mut rng);
            SketchRepr::Combined { count, gaussian }
        }
        SketchFamily::Hadamard => {
            let padded = d.next_power_of_two();
            let signs = (0..padded)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let rows = index::sample(&mut rng, padded, k).into_vec();
            SketchRepr::Hadamard {
                signs,
                rows,
                padded,
                scale: std,
            }
        }
    };
    Ok(SketchMatrix { spec, repr })
}

/// In-place unnormalized fast Walsh-Hadamard transform (Sylvester ordering).
fn fwht(x: &mut [f64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let a = x[i];
                let b = x[i + h];
                x[i] = a + b;
                x[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

impl SketchMatrix {
    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn family(&self) -> SketchFamily {
        self.spec.family
    }

    /// `S x`.
    pub fn apply(&self, x: &FeatureVector) -> Result<Vec<f64>, SketchError> {
        if x.dim() != self.d() {
            return Err(SketchError::DimensionMismatch {
                expected: self.d(),
                found: x.dim(),
            });
        }
        let k = self.k();
        let mut out = vec![0.0; k];
        match &self.repr {
            SketchRepr::Gaussian(m) => match x {
                FeatureVector::Dense(v) => {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = linalg::dot(m.row(i), v);
                    }
                }
                FeatureVector::Sparse(_) => {
                    for (i, o) in out.iter_mut().enumerate() {
                        let row = m.row(i);
                        let mut s = 0.0;
                        x.for_each_nonzero(|j, v| s += row[j] * v);
                        *o = s;
                    }
                }
            },
            SketchRepr::Count(c) => c.apply(x, &mut out),
            SketchRepr::Combined { count, gaussian } => {
                let mut mid = vec![0.0; count.k];
                count.apply(x, &mut mid);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = linalg::dot(gaussian.row(i), &mid);
                }
            }
            SketchRepr::Hadamard {
                signs,
                rows,
                padded,
                scale,
            } => {
                let mut buf = vec![0.0; *padded];
                x.for_each_nonzero(|j, v| buf[j] = v * signs[j]);
                fwht(&mut buf);
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = scale * buf[r];
                }
            }
        }
        Ok(out)
    }

    pub fn apply_dense(&self, x: &[f64]) -> Result<Vec<f64>, SketchError> {
        self.apply(&FeatureVector::Dense(x.to_vec()))
    }

    /// Dense `k × d` matrix with the same action as [`apply`](Self::apply).
    pub fn materialize(&self) -> DenseMatrix {
        match &self.repr {
            SketchRepr::Gaussian(m) => m.clone(),
            SketchRepr::Count(c) => c.materialize(),
            SketchRepr::Combined { count, gaussian } => gaussian
                .matmul(&count.materialize())
                .expect("combined sketch parts conform"),
            SketchRepr::Hadamard {
                signs, rows, scale, ..
            } => {
                // Sylvester Hadamard entry: (-1)^popcount(i & j).
                DenseMatrix::from_fn(rows.len(), self.d(), |i, j| {
                    let parity = (rows[i] & j).count_ones() % 2;
                    let h = if parity == 0 { 1.0 } else { -1.0 };
                    scale * h * signs[j]
                })
            }
        }
    }

    /// Writes the materialized matrix as headerless CSV, one row per line.
    pub fn dump_csv(&self, path: &Path) -> Result<(), SketchError> {
        let m = self.materialize();
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| SketchError::Io(e.to_string()))?,
        );
        for i in 0..m.rows() {
            let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", line.join(",")).map_err(|e| SketchError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

fn unit_vector(d: usize, rng: &mut rng::SimRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = linalg::norm2(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Fraction of (sketch, unit vector) pairs with `|‖Sx‖² − 1| ≤ ε`.
///
/// Sketch `i` uses seed `derive_seed(spec.seed, i)`; the test vectors come
/// from a separate stream, so results are nested in `ε`.
pub fn estimate_jl_distortion(
    spec: SketchSpec,
    num_sketches: usize,
    num_vectors: usize,
    epsilon: f64,
) -> Result<f64, SketchError> {
    spec.validate()?;
    let mut vec_rng = rng::stream(spec.seed, Stream::Diagnostics);
    let mut inside = 0usize;
    for s in 0..num_sketches {
        let sketch = sample_sketch(SketchSpec {
            seed: rng::derive_seed(spec.seed, s as u64),
            ..spec
        })?;
        for _ in 0..num_vectors {
            let x = unit_vector(spec.d, &mut vec_rng);
            let sx = sketch.apply_dense(&x)?;
            let sq = linalg::dot(&sx, &sx);
            if (sq - 1.0).abs() <= epsilon {
                inside += 1;
            }
        }
    }
    Ok(inside as f64 / (num_sketches * num_vectors).max(1) as f64)
}

/// Fraction of sampled sketches for which `σ_min(S A) > sigma_tol`.
pub fn row_rank_statistics(
    spec: SketchSpec,
    a: &DenseMatrix,
    num_trials: usize,
    sigma_tol: f64,
) -> Result<f64, SketchError> {
    spec.validate()?;
    if a.rows() != spec.d {
        return Err(SketchError::DimensionMismatch {
            expected: spec.d,
            found: a.rows(),
        });
    }
    let mut full = 0usize;
    for t in 0..num_trials {
        let s = sample_sketch(SketchSpec {
            seed: rng::derive_seed(spec.seed, t as u64),
            ..spec
        })?;
        let sa = s.materialize().matmul(a)?;
        let sv = linalg::svd(&sa)?;
        let smin = sv.singular_values.last().copied().unwrap_or(0.0);
        if sv.rank() == spec.k && smin > sigma_tol {
            full += 1;
        }
    }
    Ok(full as f64 / num_trials.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: SketchFamily, k: usize, d: usize) -> SketchSpec {
        SketchSpec::new(family, k, d, 42)
    }

    #[test]
    fn rejects_k_above_d() {
        assert_eq!(
            sample_sketch(spec(SketchFamily::Gaussian, 5, 3)),
            Err(SketchError::UnsupportedDim { k: 5, d: 3 })
        );
        assert!(sample_sketch(spec(SketchFamily::Count, 0, 3)).is_err());
    }

    #[test]
    fn count_columns_have_one_signed_entry() {
        let m = sample_sketch(spec(SketchFamily::Count, 3, 5))
            .unwrap()
            .materialize();
        for j in 0..5 {
            let col = m.column(j);
            let nz: Vec<f64> = col.into_iter().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!(nz[0] == 1.0 || nz[0] == -1.0);
        }
    }

    #[test]
    fn count_single_column_action() {
        let s = SketchMatrix {
            spec: spec(SketchFamily::Count, 2, 3),
            repr: SketchRepr::Count(CountMap {
                rows: vec![0, 1, 0],
                signs: vec![1.0, -1.0, 1.0],
                k: 2,
            }),
        };
        let out = s.apply(&FeatureVector::sparse(3, vec![(1, 1.0)])).unwrap();
        assert_eq!(out, vec![0.0, -1.0]);
    }

    #[test]
    fn count_materialize_example() {
        let s = SketchMatrix {
            spec: spec(SketchFamily::Count, 2, 2),
            repr: SketchRepr::Count(CountMap {
                rows: vec![0, 1],
                signs: vec![1.0, -1.0],
                k: 2,
            }),
        };
        assert_eq!(
            s.materialize(),
            DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
        );
    }

    #[test]
    fn hadamard_padding_shape() {
        let s = sample_sketch(spec(SketchFamily::Hadamard, 2, 3)).unwrap();
        match &s.repr {
            SketchRepr::Hadamard { padded, .. } => assert_eq!(*padded, 4),
            _ => unreachable!(),
        }
        assert_eq!(s.materialize().shape(), (2, 3));
    }

    #[test]
    fn hadamard_two_by_two_by_hand() {
        let s = SketchMatrix {
            spec: spec(SketchFamily::Hadamard, 2, 2),
            repr: SketchRepr::Hadamard {
                signs: vec![1.0, 1.0],
                rows: vec![0, 1],
                padded: 2,
                scale: (0.5f64).sqrt(),
            },
        };
        let c = (0.5f64).sqrt();
        assert_eq!(
            s.materialize(),
            DenseMatrix::from_rows(&[&[c, c], &[c, -c]])
        );
        assert_eq!(s.apply_dense(&[1.0, 0.0]).unwrap(), vec![c, c]);
    }

    #[test]
    fn gaussian_basis_action_is_column() {
        let s = sample_sketch(spec(SketchFamily::Gaussian, 4, 9)).unwrap();
        let m = s.materialize();
        let out = s.apply(&FeatureVector::sparse(9, vec![(5, 1.0)])).unwrap();
        assert_eq!(out, m.column(5));
        assert_eq!(s.apply_dense(&[0.0; 9]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn apply_checks_dimension() {
        let s = sample_sketch(spec(SketchFamily::Count, 2, 4)).unwrap();
        assert_eq!(
            s.apply_dense(&[1.0; 3]),
            Err(SketchError::DimensionMismatch {
                expected: 4,
                found: 3
            })
        );
    }

    #[test]
    fn family_round_trips_through_str() {
        for f in SketchFamily::ALL {
            assert_eq!(f.as_str().parse::<SketchFamily>().unwrap(), f);
        }
        assert!("tug-of-war".parse::<SketchFamily>().is_err());
    }

    #[test]
    fn row_rank_of_zero_matrix_is_zero() {
        let a = DenseMatrix::zeros(6, 6);
        let f = row_rank_statistics(spec(SketchFamily::Gaussian, 2, 6), &a, 20, 1e-8).unwrap();
        assert_eq!(f, 0.0);
    }
}
