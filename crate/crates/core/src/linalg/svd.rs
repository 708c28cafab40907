//! One-sided Jacobi SVD and Brand-style rank-one updates of a truncated SVD.

use super::{dot, ensure_finite_vec, norm2, DenseMatrix, LinalgError, Result};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Residual directions shorter than this fraction of the update vector do not
/// grow the rank.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `left · diag(singular_values) · rightᵀ`, singular values nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub left: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right: DenseMatrix,
    pub max_rank: usize,
}

impl TruncatedSvd {
    /// The rank-0 factorization of a `rows × cols` zero matrix.
    pub fn empty(rows: usize, cols: usize, max_rank: usize) -> Self {
        Self {
            left: DenseMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            right: DenseMatrix::zeros(cols, 0),
            max_rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Shape of the represented matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.left.rows(), self.right.rows())
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Keeps at most `max_rank` leading triplets and sets the cap.
    pub fn truncate(mut self, max_rank: usize) -> Self {
        let r = self.rank().min(max_rank);
        if r < self.rank() {
            self.left = self.left.columns_range(0, r);
            self.right = self.right.columns_range(0, r);
            self.singular_values.truncate(r);
        }
        self.max_rank = max_rank;
        self
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let (rows, cols) = self.shape();
        let mut out = DenseMatrix::zeros(rows, cols);
        for (c, &s) in self.singular_values.iter().enumerate() {
            out.add_outer(s, &self.left.column(c), &self.right.column(c));
        }
        out
    }

    /// `V Σ† Uᵀ x`, dropping singular values at or below `rel_tol · σ_max`.
    pub fn pinv_apply(&self, x: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        let (rows, cols) = self.shape();
        if x.len() != rows {
            return Err(LinalgError::DimensionMismatch {
                op: "pinv_apply",
                expected: (rows, 1),
                found: (x.len(), 1),
            });
        }
        let r = self.rank();
        let cutoff = rel_tol * self.sigma_max();
        let mut coeffs = vec![0.0; r];
        for i in 0..rows {
            let xi = x[i];
            if xi != 0.0 {
                for (c, lu) in coeffs.iter_mut().zip(self.left.row(i)) {
                    *c += lu * xi;
                }
            }
        }
        for (c, &s) in coeffs.iter_mut().zip(&self.singular_values) {
            *c = if s > cutoff && s > 0.0 { *c / s } else { 0.0 };
        }
        Ok((0..cols).map(|j| dot(self.right.row(j), &coeffs)).collect())
    }

    /// Largest deviation of `leftᵀleft` and `rightᵀright` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        gram_identity_error(&self.left).max(gram_identity_error(&self.right))
    }
}

fn gram_identity_error(m: &DenseMatrix) -> f64 {
    let g = m.transpose().matmul(m).expect("conforming");
    let mut worst: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// Full SVD with `r = min(rows, cols)` singular triplets.
pub fn svd(m: &DenseMatrix) -> Result<TruncatedSvd> {
    m.ensure_finite("svd")?;
    let (rows, cols) = m.shape();
    if rows >= cols {
        let (u, s, v) = jacobi_tall(m);
        Ok(TruncatedSvd {
            left: u,
            singular_values: s,
            right: v,
            max_rank: cols,
        })
    } else {
        let (u, s, v) = jacobi_tall(&m.transpose());
        Ok(TruncatedSvd {
            left: v,
            singular_values: s,
            right: u,
            max_rank: rows,
        })
    }
}

/// Hestenes one-sided Jacobi on a matrix with `rows >= cols`.
fn jacobi_tall(m: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (rows, n) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|col| norm2(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma_max = norms.iter().copied().fold(0.0, f64::max);

    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut needs_completion = Vec::new();
    let mut singular_values = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        singular_values.push(s);
        right.push(v[j].clone());
        if s > 0.0 && s > sigma_max * 1e-13 {
            left.push(a[j].iter().map(|x| x / s).collect());
        } else {
            left.push(vec![0.0; rows]);
            needs_completion.push(slot);
        }
    }
    complete_orthonormal(&mut left, &needs_completion, rows);

    (
        DenseMatrix::from_columns(rows, &left),
        singular_values,
        DenseMatrix::from_columns(n, &right),
    )
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed slots with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: &mut [Vec<f64>], slots: &[usize], dim: usize) {
    for &slot in slots {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for basis in 0..dim {
            let mut cand = vec![0.0; dim];
            cand[basis] = 1.0;
            for _ in 0..2 {
                for (other, col) in cols.iter().enumerate() {
                    if other == slot || col.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let proj = dot(col, &cand);
                    for (c, x) in cand.iter_mut().zip(col) {
                        *c -= proj * x;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(cand);
            }
            if best_norm > 0.5 {
                break;
            }
        }
        if let Some(b) = best {
            cols[slot] = b.iter().map(|x| x / best_norm).collect();
        }
    }
}

/// Removes the span of `basis` (columns of a row-major matrix) from `x` twice,
/// accumulating the coefficients. Returns the coefficients.
fn project_out(basis: &DenseMatrix, x: &mut [f64]) -> Vec<f64> {
    let r = basis.cols();
    let mut total = vec![0.0; r];
    for _ in 0..2 {
        let coeffs = basis.tr_matvec(x).expect("conforming");
        for (i, xi) in x.iter_mut().enumerate() {
            *xi -= dot(basis.row(i), &coeffs);
        }
        for (t, c) in total.iter_mut().zip(&coeffs) {
            *t += c;
        }
    }
    total
}

/// Best rank-`≤ max_rank` approximation of `UΣVᵀ + u vᵀ`.
///
/// The factorization is expanded by the normalized residuals of `u` and `v`
/// against the current bases, the small `(r+1)×(r+1)` core is re-diagonalized,
/// and singular values at or below `drop_tol · σ_max` (or beyond `max_rank`)
/// are discarded.
pub fn rank1_svd_update(
    svd: &TruncatedSvd,
    u: &[f64],
    v: &[f64],
    drop_tol: f64,
) -> Result<TruncatedSvd> {
    let (rows, cols) = svd.shape();
    if u.len() != rows || v.len() != cols {
        return Err(LinalgError::DimensionMismatch {
            op: "rank1_svd_update",
            expected: (rows, cols),
            found: (u.len(), v.len()),
        });
    }
    ensure_finite_vec(u, "rank1_svd_update")?;
    ensure_finite_vec(v, "rank1_svd_update")?;
    let r = svd.rank();

    let mut p = u.to_vec();
    let m = project_out(&svd.left, &mut p);
    let ra = norm2(&p);
    let grow_left = ra > RESIDUAL_TOL * norm2(u) && ra > 0.0;

    let mut q = v.to_vec();
    let n = project_out(&svd.right, &mut q);
    let rb = norm2(&q);
    let grow_right = rb > RESIDUAL_TOL * norm2(v) && rb > 0.0;

    let ku = r + grow_left as usize;
    let kv = r + grow_right as usize;
    if ku == 0 || kv == 0 {
        return Ok(TruncatedSvd::empty(rows, cols, svd.max_rank));
    }

    let mut lhs = m;
    if grow_left {
        lhs.push(ra);
    }
    let mut rhs = n;
    if grow_right {
        rhs.push(rb);
    }
    let mut core = DenseMatrix::zeros(ku, kv);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        core.set(i, i, s);
    }
    core.add_outer(1.0, &lhs, &rhs);
    let inner = self::svd(&core)?;

    let sigma_max = inner.sigma_max();
    let keep = inner
        .singular_values
        .iter()
        .take(svd.max_rank)
        .take_while(|&&s| s > 0.0 && s > drop_tol * sigma_max)
        .count();

    let left = rotate_basis(
        &svd.left,
        grow_left.then(|| scaled(&p, 1.0 / ra)),
        &inner.left,
        keep,
    );
    let right = rotate_basis(
        &svd.right,
        grow_right.then(|| scaled(&q, 1.0 / rb)),
        &inner.right,
        keep,
    );
    Ok(TruncatedSvd {
        left,
        singular_values: inner.singular_values[..keep].to_vec(),
        right,
        max_rank: svd.max_rank,
    })
}

fn scaled(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}

/// `[basis | extra] · rotation[:, :keep]`.
fn rotate_basis(
    basis: &DenseMatrix,
    extra: Option<Vec<f64>>,
    rotation: &DenseMatrix,
    keep: usize,
) -> DenseMatrix {
    let dim = basis.rows();
    let r = basis.cols();
    let mut out = DenseMatrix::zeros(dim, keep);
    for i in 0..dim {
        let brow = basis.row(i);
        let orow = out.row_mut(i);
        for (a, &b) in brow.iter().enumerate() {
            if b != 0.0 {
                for (o, rot) in orow.iter_mut().zip(&rotation.row(a)[..keep]) {
                    *o += b * rot;
                }
            }
        }
        if let Some(e) = &extra {
            let b = e[i];
            if b != 0.0 {
                for (o, rot) in orow.iter_mut().zip(&rotation.row(r)[..keep]) {
                    *o += b * rot;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn diagonal_and_zero() {
        let s = svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert!(close(&s.singular_values, &[3.0, 1.0], 1e-14));
        let z = svd(&DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.singular_values, vec![0.0, 0.0]);
        assert!(z.orthonormality_error() < 1e-12);
    }

    #[test]
    fn antidiagonal_by_hand() {
        // MᵀM = diag(1, 4), so σ = (2, 1).
        let m = DenseMatrix::from_rows(&[&[0.0, 2.0], &[1.0, 0.0]]);
        let s = svd(&m).unwrap();
        assert!(close(&s.singular_values, &[2.0, 1.0], 1e-14));
        let rec = s.reconstruct();
        assert!(rec.sub(&m).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn wide_matrix_reconstructs() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.5]]);
        let s = svd(&m).unwrap();
        assert_eq!(s.left.shape(), (2, 2));
        assert_eq!(s.right.shape(), (3, 2));
        assert!(s.reconstruct().sub(&m).unwrap().frobenius_norm() < 1e-12);
        assert!(s.orthonormality_error() < 1e-12);
    }

    #[test]
    fn rank1_from_empty() {
        let empty = TruncatedSvd::empty(3, 3, 3);
        let up = rank1_svd_update(&empty, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 1e-8).unwrap();
        assert_eq!(up.singular_values, vec![1.0]);
        assert!(close(&up.left.column(0), &[1.0, 0.0, 0.0], 1e-15));
        assert!(close(&up.right.column(0), &[0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn rank1_pure_truncation() {
        let s = svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap().truncate(2);
        let s = TruncatedSvd { max_rank: 1, ..s };
        let up = rank1_svd_update(&s, &[0.0, 0.0], &[0.0, 0.0], 1e-8).unwrap();
        assert_eq!(up.rank(), 1);
        assert!((up.singular_values[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rank1_identity_plus_e1() {
        let s = svd(&DenseMatrix::identity(2)).unwrap();
        let up = rank1_svd_update(&s, &[1.0, 0.0], &[1.0, 0.0], 1e-8).unwrap();
        assert!(close(&up.singular_values, &[2.0, 1.0], 1e-14));
    }

    #[test]
    fn pinv_apply_drops_small_values() {
        let s = svd(&DenseMatrix::diag(&[2.0, 1e-20])).unwrap();
        assert!(close(
            &s.pinv_apply(&[4.0, 5.0], 1e-12).unwrap(),
            &[2.0, 0.0],
            1e-15
        ));
    }
}
