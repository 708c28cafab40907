//! State → feature encoders: RBF grids, tile coding, spline bins and tiled
//! RBFs.
//!
//! A [`FeatureMap`] is immutable after construction and `featurize` is a pure
//! function of `(map, state)`, so one map can be shared across threads.
//! States outside the configured bounds are clipped first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::rng::splitmix64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("invalid state bounds: {0}")]
    InvalidBounds(String),
    #[error("state has dimension {found}, map expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state contains a non-finite value")]
    NonFiniteState,
    #[error("no probe states supplied")]
    NoProbes,
    #[error("width calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Sparse vector: strictly increasing indices, finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Sorts the entries and merges duplicate indices by summation.
    ///
    /// Panics if an index is out of range.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            assert!(i < dim, "sparse index {i} out of range for dimension {dim}");
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Self {
            dim,
            indices,
            values,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVector {
    Dense(Vec<f64>),
    Sparse(SparseVector),
}

impl FeatureVector {
    pub fn sparse(dim: usize, entries: Vec<(usize, f64)>) -> Self {
        Self::Sparse(SparseVector::new(dim, entries))
    }

    /// The all-zero vector, stored sparsely.
    pub fn zeros(dim: usize) -> Self {
        Self::Sparse(SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(v) => v.len(),
            Self::Sparse(s) => s.dim,
        }
    }

    /// Calls `f(index, value)` for every stored entry (dense: every entry that
    /// is nonzero).
    #[inline]
    pub fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        match self {
            Self::Dense(v) => {
                for (i, &x) in v.iter().enumerate() {
                    if x != 0.0 {
                        f(i, x);
                    }
                }
            }
            Self::Sparse(s) => {
                for (&i, &x) in s.indices.iter().zip(&s.values) {
                    f(i, x);
                }
            }
        }
    }

    pub fn nnz(&self) -> usize {
        let mut n = 0;
        self.for_each_nonzero(|_, _| n += 1);
        n
    }

    pub fn is_zero(&self) -> bool {
        self.nnz() == 0
    }

    /// `selfᵀ w`. Panics in debug builds on a length mismatch.
    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.dim());
        match self {
            Self::Dense(v) => linalg::dot(v, w),
            Self::Sparse(s) => s
                .indices
                .iter()
                .zip(&s.values)
                .map(|(&i, &x)| x * w[i])
                .sum(),
        }
    }

    /// `y += a · self`.
    #[inline]
    pub fn axpy_into(&self, a: f64, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            Self::Dense(v) => linalg::axpy(a, v, y),
            Self::Sparse(s) => {
                for (&i, &x) in s.indices.iter().zip(&s.values) {
                    y[i] += a * x;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Self::Dense(v) => v.clone(),
            Self::Sparse(_) => {
                let mut out = vec![0.0; self.dim()];
                self.axpy_into(1.0, &mut out);
                out
            }
        }
    }

    pub fn l1_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_nonzero(|_, v| s += v.abs());
        s
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_nonzero(|_, v| ok &= v.is_finite());
        ok
    }

    /// `self − gamma · other` with the storage of the inputs preserved when
    /// both are sparse.
    pub fn sub_scaled(&self, gamma: f64, other: &FeatureVector) -> FeatureVector {
        debug_assert_eq!(self.dim(), other.dim());
        match (self, other) {
            (Self::Sparse(_), Self::Sparse(_)) => {
                let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
                self.for_each_nonzero(|i, v| entries.push((i, v)));
                if gamma != 0.0 {
                    other.for_each_nonzero(|i, v| entries.push((i, -gamma * v)));
                }
                FeatureVector::sparse(self.dim(), entries)
            }
            _ => {
                let mut out = self.to_dense();
                if gamma != 0.0 {
                    other.axpy_into(-gamma, &mut out);
                }
                FeatureVector::Dense(out)
            }
        }
    }
}

/// Per-dimension `[low, high]` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl StateBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let b = Self { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.is_empty() || self.low.len() != self.high.len() {
            return Err(FeatureError::InvalidBounds(format!(
                "low has {} entries, high has {}",
                self.low.len(),
                self.high.len()
            )));
        }
        for (i, (l, h)) in self.low.iter().zip(&self.high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(FeatureError::InvalidBounds(format!(
                    "dimension {i}: need low < high, got [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }

    pub fn range(&self, i: usize) -> f64 {
        self.high[i] - self.low[i]
    }

    pub fn clip(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&x, (&l, &h))| x.clamp(l, h))
            .collect()
    }
}

/// One width for every dimension, or one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Width {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl Width {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Self::Scalar(w) => *w,
            Self::PerDim(v) => v[i],
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            Self::Scalar(w) => Self::Scalar(w * s),
            Self::PerDim(v) => Self::PerDim(v.iter().map(|w| w * s).collect()),
        }
    }

    fn validate(&self, dims: usize) -> Result<()> {
        let ws: Vec<f64> = match self {
            Self::Scalar(w) => vec![*w],
            Self::PerDim(v) => {
                if v.len() != dims {
                    return Err(FeatureError::InvalidSpec(format!(
                        "{} widths given for {dims} state dimensions",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if ws.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(FeatureError::InvalidSpec("widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureSpec {
    /// Gaussian bumps on a uniform grid. With `normalize_per_dim` the kernel
    /// is `exp(−Σ ((x_i − c_i) / (w_i · r_i))²)` where `r_i` is the range of
    /// dimension `i`; otherwise `exp(−Σ (x_i − c_i)² / (2 w_i²))`.
    RbfGrid {
        centers_per_dim: usize,
        width: Width,
        #[serde(default)]
        normalize_per_dim: bool,
    },
    TileCoding {
        tilings: usize,
        tiles_per_dim: usize,
        memory_size: usize,
    },
    /// Indicator of `‖x − c‖ < width` on a uniform grid.
    SplineGrid { centers_per_dim: usize, width: f64 },
    /// `tilings` shifted RBF grids, generic kernel.
    TiledRbf {
        tilings: usize,
        grid_per_dim: usize,
        width: f64,
    },
}

impl FeatureSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::RbfGrid { .. } => "rbf-grid",
            Self::TileCoding { .. } => "tile-coding",
            Self::SplineGrid { .. } => "spline-grid",
            Self::TiledRbf { .. } => "tiled-rbf",
        }
    }

    fn validate(&self, dims: usize) -> Result<()> {
        let positive = |name: &str, n: usize| {
            if n == 0 {
                Err(FeatureError::InvalidSpec(format!(
                    "{name} must be at least 1"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Self::RbfGrid {
                centers_per_dim,
                width,
                ..
            } => {
                positive("centers_per_dim", *centers_per_dim)?;
                width.validate(dims)
            }
            Self::TileCoding {
                tilings,
                tiles_per_dim,
                memory_size,
            } => {
                positive("tilings", *tilings)?;
                positive("tiles_per_dim", *tiles_per_dim)?;
                if *memory_size < *tilings {
                    return Err(FeatureError::InvalidSpec(format!(
                        "memory_size {memory_size} is smaller than tilings {tilings}"
                    )));
                }
                Ok(())
            }
            Self::SplineGrid {
                centers_per_dim,
                width,
            } => {
                positive("centers_per_dim", *centers_per_dim)?;
                Width::Scalar(*width).validate(dims)
            }
            Self::TiledRbf {
                tilings,
                grid_per_dim,
                width,
            } => {
                positive("tilings", *tilings)?;
                positive("grid_per_dim", *grid_per_dim)?;
                Width::Scalar(*width).validate(dims)
            }
        }
    }

    /// Copy with every width multiplied by `s`; tile coding is returned as is.
    pub fn with_width_scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::RbfGrid { width, .. } => *width = width.scaled(s),
            Self::SplineGrid { width, .. } | Self::TiledRbf { width, .. } => *width *= s,
            Self::TileCoding { .. } => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Encoder {
    Rbf {
        centers: Vec<f64>,
        /// Per-dimension factor `f_i` in `exp(−Σ f_i (x_i − c_i)²)`.
        inv_scale: Vec<f64>,
    },
    Tiles {
        tilings: usize,
        tiles_per_dim: usize,
        hashed: bool,
        block: usize,
        salt: u64,
    },
    Spline {
        centers: Vec<f64>,
        width: f64,
    },
}

/// Deterministic state → ℝᵈ encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureSpec,
    bounds: StateBounds,
    dim: usize,
    encoder: Encoder,
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    base.checked_pow(exp as u32)
        .ok_or_else(|| FeatureError::InvalidSpec(format!("{base}^{exp} overflows")))
}

/// Row-major grid of points; coordinate `j` along dim `i` is
/// `low_i + (j + shift) · range_i / n`.
fn grid_points(bounds: &StateBounds, n: usize, shift: f64, out: &mut Vec<f64>) {
    let dims = bounds.dims();
    let total = n.pow(dims as u32);
    let mut idx = vec![0usize; dims];
    for _ in 0..total {
        for (i, &j) in idx.iter().enumerate() {
            out.push(bounds.low[i] + (j as f64 + shift) * bounds.range(i) / n as f64);
        }
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
}

/// Builds a map; `seed` only salts the tile-coding hash.
pub fn build_feature_map(
    spec: &FeatureSpec,
    bounds: &StateBounds,
    seed: u64,
) -> Result<FeatureMap> {
    bounds.validate()?;
    let dims = bounds.dims();
    spec.validate(dims)?;
    let (dim, encoder) = match spec {
        FeatureSpec::RbfGrid {
            centers_per_dim,
            width,
            normalize_per_dim,
        } => {
            let n = checked_pow(*centers_per_dim, dims)?;
            let mut centers = Vec::with_capacity(n * dims);
            grid_points(bounds, *centers_per_dim, 0.5, &mut centers);
            let inv_scale = (0..dims)
                .map(|i| {
                    let w = width.get(i);
                    if *normalize_per_dim {
                        1.0 / (w * bounds.range(i)).powi(2)
                    } else {
                        1.0 / (2.0 * w * w)
                    }
                })
                .collect();
            (n, Encoder::Rbf { centers, inv_scale })
        }
        FeatureSpec::TileCoding {
            tilings,
            tiles_per_dim,
            memory_size,
        } => {
            let per_tiling = checked_pow(*tiles_per_dim, dims)?;
            let hashed = per_tiling
                .checked_mul(*tilings)
                .map_or(true, |total| total > *memory_size);
            let block = if hashed {
                memory_size / tilings
            } else {
                per_tiling
            };
            (
                *memory_size,
                Encoder::Tiles {
                    tilings: *tilings,
                    tiles_per_dim: *tiles_per_dim,
                    hashed,
                    block,
                    salt: splitmix64(seed),
                },
            )
        }
        FeatureSpec::SplineGrid {
            centers_per_dim,
            width,
        } => {
            let n = checked_pow(*centers_per_dim, dims)?;
            let mut centers = Vec::with_capacity(n * dims);
            grid_points(bounds, *centers_per_dim, 0.5, &mut centers);
            (
                n,
                Encoder::Spline {
                    centers,
                    width: *width,
                },
            )
        }
        FeatureSpec::TiledRbf {
            tilings,
            grid_per_dim,
            width,
        } => {
            let per = checked_pow(*grid_per_dim, dims)?;
            let n = per * tilings;
            let mut centers = Vec::with_capacity(n * dims);
            for t in 0..*tilings {
                grid_points(
                    bounds,
                    *grid_per_dim,
                    (t as f64 + 0.5) / *tilings as f64,
                    &mut centers,
                );
            }
            let inv_scale = vec![1.0 / (2.0 * width * width); dims];
            (n, Encoder::Rbf { centers, inv_scale })
        }
    };
    Ok(FeatureMap {
        spec: spec.clone(),
        bounds: bounds.clone(),
        dim,
        encoder,
    })
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    pub fn state_dims(&self) -> usize {
        self.bounds.dims()
    }

    /// Center `i` of a grid-based map (`None` for tile coding).
    pub fn center(&self, i: usize) -> Option<&[f64]> {
        let dims = self.state_dims();
        match &self.encoder {
            Encoder::Rbf { centers, .. } | Encoder::Spline { centers, .. } => {
                centers.get(i * dims..(i + 1) * dims)
            }
            Encoder::Tiles { .. } => None,
        }
    }

    /// Number of active features per state, if constant.
    pub fn active_per_state(&self) -> Option<usize> {
        match &self.encoder {
            Encoder::Tiles { tilings, .. } => Some(*tilings),
            _ => None,
        }
    }

    pub fn featurize(&self, state: &[f64]) -> Result<FeatureVector> {
        let dims = self.state_dims();
        if state.len() != dims {
            return Err(FeatureError::DimensionMismatch {
                expected: dims,
                found: state.len(),
            });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFiniteState);
        }
        let s = self.bounds.clip(state);
        Ok(match &self.encoder {
            Encoder::Rbf { centers, inv_scale } => FeatureVector::Dense(
                centers
                    .chunks_exact(dims)
                    .map(|c| {
                        let mut q = 0.0;
                        for i in 0..dims {
                            let diff = s[i] - c[i];
                            q += inv_scale[i] * diff * diff;
                        }
                        (-q).exp()
                    })
                    .collect(),
            ),
            Encoder::Spline { centers, width } => {
                let w2 = width * width;
                let entries = centers
                    .chunks_exact(dims)
                    .enumerate()
                    .filter(|(_, c)| {
                        let d2: f64 = c.iter().zip(&s).map(|(ci, si)| (si - ci) * (si - ci)).sum();
                        d2 < w2
                    })
                    .map(|(i, _)| (i, 1.0))
                    .collect();
                FeatureVector::sparse(self.dim, entries)
            }
            Encoder::Tiles {
                tilings,
                tiles_per_dim,
                hashed,
                block,
                salt,
            } => {
                let mut entries = Vec::with_capacity(*tilings);
                let tiles = *tiles_per_dim;
                for t in 0..*tilings {
                    let shift = t as f64 / *tilings as f64;
                    let mut flat = 0usize;
                    let mut h = salt ^ (t as u64);
                    for i in 0..dims {
                        let u = (s[i] - self.bounds.low[i]) / self.bounds.range(i) * tiles as f64
                            + shift;
                        let cell = (u.floor() as usize).min(tiles - 1);
                        flat = flat * tiles + cell;
                        h = splitmix64(h ^ (cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    }
                    let idx = if *hashed {
                        t * block + (h % *block as u64) as usize
                    } else {
                        t * block + flat
                    };
                    entries.push((idx, 1.0));
                }
                FeatureVector::sparse(self.dim, entries)
            }
        })
    }
}

pub fn featurize(map: &FeatureMap, state: &[f64]) -> Result<FeatureVector> {
    map.featurize(state)
}

/// Largest `‖x(s)‖₁` over the probes (tile coding: exactly `tilings`).
pub fn feature_l1_norm(map: &FeatureMap, probes: &[Vec<f64>]) -> Result<f64> {
    if let Some(n) = map.active_per_state() {
        return Ok(n as f64);
    }
    if probes.is_empty() {
        return Err(FeatureError::NoProbes);
    }
    let mut best = 0.0f64;
    for p in probes {
        best = best.max(map.featurize(p)?.l1_norm());
    }
    Ok(best)
}

/// Mean `‖x(s)‖₁` over the probes.
pub fn mean_l1_norm(map: &FeatureMap, probes: &[Vec<f64>]) -> Result<f64> {
    if probes.is_empty() {
        return Err(FeatureError::NoProbes);
    }
    let mut total = 0.0;
    for p in probes {
        total += map.featurize(p)?.l1_norm();
    }
    Ok(total / probes.len() as f64)
}

/// Rescales the widths of `spec` by bisection (on a log scale) until the
/// mean probe `‖x‖₁` is within `rel_tol` of `target`.
pub fn calibrate_width(
    spec: &FeatureSpec,
    bounds: &StateBounds,
    probes: &[Vec<f64>],
    target: f64,
    rel_tol: f64,
) -> Result<FeatureSpec> {
    if matches!(spec, FeatureSpec::TileCoding { .. }) {
        return Err(FeatureError::Calibration("tile coding has no width".into()));
    }
    let norm_at = |s: f64| -> Result<f64> {
        let m = build_feature_map(&spec.with_width_scaled(s), bounds, 0)?;
        mean_l1_norm(&m, probes)
    };
    let (mut lo, mut hi) = (1e-6f64, 1e6f64);
    let (n_lo, n_hi) = (norm_at(lo)?, norm_at(hi)?);
    if !(n_lo <= target && target <= n_hi) {
        return Err(FeatureError::Calibration(format!(
            "target {target} outside reachable range [{n_lo}, {n_hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let n = norm_at(mid)?;
        if (n - target).abs() <= rel_tol * target {
            return Ok(spec.with_width_scaled(mid));
        }
        if n < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-14 {
            break;
        }
    }
    Err(FeatureError::Calibration(format!(
        "no width within {rel_tol} of {target}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> StateBounds {
        StateBounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn mountain_car_bounds() -> StateBounds {
        StateBounds::new(vec![-1.2, -0.07], vec![0.5, 0.07]).unwrap()
    }

    #[test]
    fn dimensions_match_construction() {
        let b = unit_square();
        let rbf = FeatureSpec::RbfGrid {
            centers_per_dim: 32,
            width: Width::Scalar(0.1),
            normalize_per_dim: false,
        };
        assert_eq!(build_feature_map(&rbf, &b, 0).unwrap().dim(), 1024);
        let tc = FeatureSpec::TileCoding {
            tilings: 10,
            tiles_per_dim: 10,
            memory_size: 1024,
        };
        assert_eq!(build_feature_map(&tc, &b, 0).unwrap().dim(), 1024);
        let trbf = FeatureSpec::TiledRbf {
            tilings: 4,
            grid_per_dim: 16,
            width: 0.1,
        };
        assert_eq!(build_feature_map(&trbf, &b, 0).unwrap().dim(), 1024);
    }

    #[test]
    fn rbf_is_one_at_center() {
        let m = build_feature_map(
            &FeatureSpec::RbfGrid {
                centers_per_dim: 5,
                width: Width::Scalar(0.2),
                normalize_per_dim: false,
            },
            &unit_square(),
            0,
        )
        .unwrap();
        let c = m.center(7).unwrap().to_vec();
        let x = m.featurize(&c).unwrap().to_dense();
        assert_eq!(x[7], 1.0);
    }

    #[test]
    fn per_dim_rbf_one_width_offset_gives_inverse_e() {
        let b = mountain_car_bounds();
        let m = build_feature_map(
            &FeatureSpec::RbfGrid {
                centers_per_dim: 32,
                width: Width::Scalar(0.12),
                normalize_per_dim: true,
            },
            &b,
            0,
        )
        .unwrap();
        let c = m.center(0).unwrap().to_vec();
        let s = [c[0] + 0.12 * b.range(0), c[1]];
        let x = m.featurize(&s).unwrap().to_dense();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn spline_boundary_is_excluded() {
        let m = build_feature_map(
            &FeatureSpec::SplineGrid {
                centers_per_dim: 2,
                width: 0.25,
            },
            &unit_square(),
            0,
        )
        .unwrap();
        // Center 0 is (0.25, 0.25); (0.5, 0.25) lies exactly 0.25 away.
        let x = m.featurize(&[0.5, 0.25]).unwrap().to_dense();
        assert_eq!(x[0], 0.0);
        let y = m.featurize(&[0.49, 0.25]).unwrap().to_dense();
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn tile_coding_has_one_active_per_tiling() {
        for memory in [1024, 64] {
            let m = build_feature_map(
                &FeatureSpec::TileCoding {
                    tilings: 10,
                    tiles_per_dim: 10,
                    memory_size: memory,
                },
                &mountain_car_bounds(),
                3,
            )
            .unwrap();
            for s in [[-1.2, -0.07], [0.5, 0.07], [-0.5, 0.0], [0.1, -0.03]] {
                let x = m.featurize(&s).unwrap();
                assert_eq!(x.nnz(), 10);
                assert_eq!(x.l1_norm(), 10.0);
            }
            assert_eq!(feature_l1_norm(&m, &[]).unwrap(), 10.0);
        }
    }

    #[test]
    fn out_of_bounds_states_are_clipped() {
        let m = build_feature_map(
            &FeatureSpec::RbfGrid {
                centers_per_dim: 3,
                width: Width::Scalar(0.3),
                normalize_per_dim: false,
            },
            &unit_square(),
            0,
        )
        .unwrap();
        assert_eq!(
            m.featurize(&[2.0, -1.0]).unwrap(),
            m.featurize(&[1.0, 0.0]).unwrap()
        );
        assert_eq!(
            m.featurize(&[0.0]),
            Err(FeatureError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let b = unit_square();
        let bad = [
            FeatureSpec::RbfGrid {
                centers_per_dim: 0,
                width: Width::Scalar(1.0),
                normalize_per_dim: false,
            },
            FeatureSpec::SplineGrid {
                centers_per_dim: 3,
                width: -1.0,
            },
            FeatureSpec::TileCoding {
                tilings: 8,
                tiles_per_dim: 4,
                memory_size: 4,
            },
        ];
        for spec in bad {
            assert!(matches!(
                build_feature_map(&spec, &b, 0),
                Err(FeatureError::InvalidSpec(_))
            ));
        }
        assert!(StateBounds::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn calibration_hits_target_norm() {
        let b = unit_square();
        let probes: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0])
            .collect();
        let spec = FeatureSpec::RbfGrid {
            centers_per_dim: 16,
            width: Width::Scalar(0.1),
            normalize_per_dim: false,
        };
        let tuned = calibrate_width(&spec, &b, &probes, 20.0, 1e-3).unwrap();
        let m = build_feature_map(&tuned, &b, 0).unwrap();
        assert!((mean_l1_norm(&m, &probes).unwrap() - 20.0).abs() <= 0.02);
    }

    #[test]
    fn sub_scaled_merges_sparse_entries() {
        let x = FeatureVector::sparse(4, vec![(0, 1.0), (2, 1.0)]);
        let y = FeatureVector::sparse(4, vec![(2, 1.0), (3, 1.0)]);
        assert_eq!(x.sub_scaled(1.0, &y).to_dense(), vec![1.0, 0.0, 0.0, -1.0]);
    }
}
