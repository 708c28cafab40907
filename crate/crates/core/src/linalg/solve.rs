use super::{axpy, dot, ensure_finite_vec, norm2, svd, DenseMatrix, LinalgError, Result};

/// Relative cutoff for pseudo-inverse truncation.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Returns `(M + u vᵀ)⁻¹` given `inv = M⁻¹`; `inv` is left untouched.
pub fn sherman_morrison_update(
    inv: &DenseMatrix,
    u: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<DenseMatrix> {
    let mut out = inv.clone();
    sherman_morrison_in_place(&mut out, u, v, tol)?;
    Ok(out)
}

/// In-place Sherman-Morrison: `inv ← inv − (inv·u)(vᵀ·inv) / (1 + vᵀ·inv·u)`.
///
/// Zero entries of `v` are skipped, so sparse difference vectors cost
/// `O(nnz(v)·n)` for the left product. On `DegenerateUpdate` the matrix is
/// not modified.
pub fn sherman_morrison_in_place(
    inv: &mut DenseMatrix,
    u: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<()> {
    let n = inv.rows();
    if inv.cols() != n || u.len() != n || v.len() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "sherman_morrison",
            expected: (n, n),
            found: (u.len(), v.len()),
        });
    }
    if !(tol > 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    ensure_finite_vec(u, "sherman_morrison")?;
    ensure_finite_vec(v, "sherman_morrison")?;

    let inv_u: Vec<f64> = (0..n).map(|i| dot(inv.row(i), u)).collect();
    let mut vt_inv = vec![0.0; n];
    for (j, &vj) in v.iter().enumerate() {
        if vj != 0.0 {
            axpy(vj, inv.row(j), &mut vt_inv);
        }
    }
    let denom = 1.0 + dot(v, &inv_u);
    if !denom.is_finite() || denom.abs() < tol {
        return Err(LinalgError::DegenerateUpdate { denominator: denom });
    }
    inv.add_outer(-1.0 / denom, &inv_u, &vt_inv);
    Ok(())
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.rows();
    if m.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "invert",
            expected: (n, n),
            found: m.shape(),
        });
    }
    m.ensure_finite("invert")?;
    let scale = m.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .expect("nonempty");
        let pv = a.get(pivot, col);
        if pv.abs() <= scale * 1e-15 || pv == 0.0 {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            swap_rows(&mut a, pivot, col);
            swap_rows(&mut inv, pivot, col);
        }
        let ip = 1.0 / pv;
        a.row_mut(col).iter_mut().for_each(|x| *x *= ip);
        inv.row_mut(col).iter_mut().for_each(|x| *x *= ip);
        let a_col = a.row(col).to_vec();
        let inv_col = inv.row(col).to_vec();
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a.get(r, col);
            if f != 0.0 {
                axpy(-f, &a_col, a.row_mut(r));
                axpy(-f, &inv_col, inv.row_mut(r));
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    let cols = m.cols();
    let data = m.data_mut();
    for j in 0..cols {
        data.swap(a * cols + j, b * cols + j);
    }
}

/// Solves `G x = rhs` for symmetric positive-definite `G`.
pub fn cholesky_solve(g: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = g.rows();
    if g.cols() != n || rhs.len() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "cholesky_solve",
            expected: (n, n),
            found: (g.cols(), rhs.len()),
        });
    }
    let max_diag = (0..n).map(|i| g.get(i, i).abs()).fold(0.0, f64::max);
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = g.get(j, j);
        for p in 0..j {
            d -= l.get(j, p) * l.get(j, p);
        }
        if !(d > max_diag * 1e-14) {
            return Err(LinalgError::SingularGram);
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in (j + 1)..n {
            let mut s = g.get(i, j);
            for p in 0..j {
                s -= l.get(i, p) * l.get(j, p);
            }
            l.set(i, j, s / djj);
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        for p in 0..i {
            y[i] -= l.get(i, p) * y[p];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            y[i] -= l.get(p, i) * y[p];
        }
        y[i] /= l.get(i, i);
    }
    Ok(y)
}

/// `V Σ† Uᵀ b`, zeroing singular values below `rank_tol · σ_max`.
pub fn pseudo_inverse_solve(a: &DenseMatrix, b: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "pseudo_inverse_solve",
            expected: (a.rows(), 1),
            found: (b.len(), 1),
        });
    }
    if !(rank_tol > 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }
    ensure_finite_vec(b, "pseudo_inverse_solve")?;
    svd(a)?.pinv_apply(b, rank_tol)
}

/// Minimum-norm solution `Ãᵀ(ÃÃᵀ + ridge·I)⁻¹ b̃` of a wide system.
///
/// With `ridge = 0` the solve goes through a Householder QR of `Ãᵀ`, which
/// avoids squaring the condition number.
pub fn min_norm_solve(atil: &DenseMatrix, btil: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let (k, d) = atil.shape();
    if btil.len() != k {
        return Err(LinalgError::DimensionMismatch {
            op: "min_norm_solve",
            expected: (k, 1),
            found: (btil.len(), 1),
        });
    }
    if k > d {
        return Err(LinalgError::InvalidArgument(format!(
            "min_norm_solve needs k <= d, got {k} > {d}"
        )));
    }
    if !(ridge >= 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    atil.ensure_finite("min_norm_solve")?;
    ensure_finite_vec(btil, "min_norm_solve")?;
    if ridge == 0.0 {
        return qr_min_norm(atil, btil);
    }
    let mut gram = atil.matmul(&atil.transpose())?;
    for i in 0..k {
        gram.set(i, i, gram.get(i, i) + ridge);
    }
    let y = cholesky_solve(&gram, btil)?;
    atil.tr_matvec(&y)
}

/// For `Ãᵀ = QR`: `w = Q R⁻ᵀ b̃`.
fn qr_min_norm(atil: &DenseMatrix, btil: &[f64]) -> Result<Vec<f64>> {
    let (k, d) = atil.shape();
    // Columns of Ãᵀ are the rows of Ã.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|i| atil.row(i).to_vec()).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = DenseMatrix::zeros(k, k);
    let scale = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    for j in 0..k {
        for (i, h) in reflectors.iter().enumerate() {
            apply_reflector(h, i, &mut cols[j]);
        }
        let x = &cols[j][j..];
        let alpha = norm2(x);
        if !(alpha > scale * 1e-13) {
            return Err(LinalgError::SingularGram);
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut h = x.to_vec();
        h[0] += sign * alpha;
        let hn = norm2(&h);
        h.iter_mut().for_each(|v| *v /= hn);
        for i in 0..j {
            r.set(i, j, cols[j][i]);
        }
        r.set(j, j, -sign * alpha);
        reflectors.push(h);
    }
    // Solve Rᵀ y = b̃ (forward substitution).
    let mut y = btil.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= r.get(p, i) * y[p];
        }
        y[i] /= r.get(i, i);
    }
    // w = Q [y; 0] = H_0 H_1 ... H_{k-1} [y; 0].
    let mut w = vec![0.0; d];
    w[..k].copy_from_slice(&y);
    for (i, h) in reflectors.iter().enumerate().rev() {
        apply_reflector(h, i, &mut w);
    }
    Ok(w)
}

fn apply_reflector(h: &[f64], offset: usize, x: &mut [f64]) {
    let tail = &mut x[offset..];
    let proj = 2.0 * dot(h, tail);
    axpy(-proj, h, tail);
}

/// Iterates `w ← w + (α(SA)†S + ηI)(b − Aw)` from `w = 0` until the residual
/// norm drops below `tol`.
pub fn expected_update_fixed_point(
    a: &DenseMatrix,
    b: &[f64],
    s: &DenseMatrix,
    alpha: f64,
    eta: f64,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let d = a.rows();
    if a.cols() != d || b.len() != d || s.cols() != d {
        return Err(LinalgError::DimensionMismatch {
            op: "expected_update_fixed_point",
            expected: (d, d),
            found: (s.rows(), s.cols()),
        });
    }
    a.ensure_finite("expected_update_fixed_point")?;
    s.ensure_finite("expected_update_fixed_point")?;
    ensure_finite_vec(b, "expected_update_fixed_point")?;

    let sa = s.matmul(a)?;
    let sa_svd = svd(&sa)?;
    // B = α (SA)† S + η I, built column by column from the pseudo-inverse.
    let k = s.rows();
    let mut pinv = DenseMatrix::zeros(d, k);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        let col = sa_svd.pinv_apply(&e, DEFAULT_RANK_TOL)?;
        for i in 0..d {
            pinv.set(i, j, col[i]);
        }
    }
    let mut precond = pinv.matmul(s)?.scale(alpha);
    for i in 0..d {
        precond.set(i, i, precond.get(i, i) + eta);
    }

    let mut w = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let aw = a.matvec(&w)?;
        let r: Vec<f64> = b.iter().zip(&aw).map(|(bi, ai)| bi - ai).collect();
        residual = norm2(&r);
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok(w);
        }
        let step = precond.matvec(&r)?;
        axpy(1.0, &step, &mut w);
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn sherman_morrison_examples() {
        let i2 = DenseMatrix::identity(2);
        assert_eq!(
            sherman_morrison_update(&i2, &[0.0, 0.0], &[1.0, 0.0], 1e-12).unwrap(),
            i2
        );
        // (I + e₁e₁ᵀ)⁻¹ = diag(1/2, 1): direct inverse of diag(2, 1).
        let up = sherman_morrison_update(&i2, &[1.0, 0.0], &[1.0, 0.0], 1e-12).unwrap();
        assert_eq!(up, invert(&DenseMatrix::diag(&[2.0, 1.0])).unwrap());
        let err = sherman_morrison_update(&i2, &[1.0, 0.0], &[-1.0, 0.0], 1e-12).unwrap_err();
        assert!(matches!(err, LinalgError::DegenerateUpdate { .. }));
    }

    #[test]
    fn degenerate_update_leaves_matrix_alone() {
        let mut m = DenseMatrix::identity(2);
        assert!(sherman_morrison_in_place(&mut m, &[1.0, 0.0], &[-1.0, 0.0], 1e-10).is_err());
        assert_eq!(m, DenseMatrix::identity(2));
    }

    #[test]
    fn pseudo_inverse_examples() {
        assert!(close(
            &pseudo_inverse_solve(
                &DenseMatrix::identity(3),
                &[1.0, 2.0, 3.0],
                DEFAULT_RANK_TOL
            )
            .unwrap(),
            &[1.0, 2.0, 3.0],
            1e-14
        ));
        let row = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        assert!(close(
            &pseudo_inverse_solve(&row, &[2.0], DEFAULT_RANK_TOL).unwrap(),
            &[1.0, 1.0],
            1e-14
        ));
        let diag = DenseMatrix::diag(&[2.0, 0.0]);
        assert!(close(
            &pseudo_inverse_solve(&diag, &[4.0, 5.0], DEFAULT_RANK_TOL).unwrap(),
            &[2.0, 0.0],
            1e-14
        ));
    }

    #[test]
    fn min_norm_examples() {
        assert!(close(
            &min_norm_solve(&DenseMatrix::identity(2), &[1.0, 2.0], 0.0).unwrap(),
            &[1.0, 2.0],
            1e-14
        ));
        let row = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        assert!(close(
            &min_norm_solve(&row, &[2.0], 0.0).unwrap(),
            &[1.0, 1.0],
            1e-14
        ));
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let w = min_norm_solve(&row.scale(c), &[2.0 * c], 0.0).unwrap();
            assert!(close(&w, &[1.0, 1.0], 1e-12), "c = {c}: {w:?}");
        }
    }

    #[test]
    fn min_norm_singular_gram() {
        let m = DenseMatrix::from_rows(&[&[1.0, 1.0, 0.0], &[2.0, 2.0, 0.0]]);
        assert_eq!(
            min_norm_solve(&m, &[1.0, 2.0], 0.0),
            Err(LinalgError::SingularGram)
        );
        // A ridge makes it solvable.
        assert!(min_norm_solve(&m, &[1.0, 2.0], 1e-3).is_ok());
    }

    #[test]
    fn fixed_point_examples() {
        let i2 = DenseMatrix::identity(2);
        let w =
            expected_update_fixed_point(&i2, &[1.0, 1.0], &i2, 0.25, 0.25, 10_000, 1e-12).unwrap();
        assert!(close(&w, &[1.0, 1.0], 1e-8));

        let a = DenseMatrix::diag(&[1.0, 0.0]);
        let s = DenseMatrix::from_rows(&[&[0.3, -1.2]]);
        let w = expected_update_fixed_point(&a, &[2.0, 0.0], &s, 0.25, 0.4, 10_000, 1e-12).unwrap();
        assert!(close(&w, &[2.0, 0.0], 1e-8));
    }

    #[test]
    fn fixed_point_reports_no_convergence() {
        let a = DenseMatrix::identity(2);
        let err =
            expected_update_fixed_point(&a, &[1.0, 1.0], &a, 0.25, 0.0, 3, 1e-12).unwrap_err();
        assert!(matches!(
            err,
            LinalgError::NoConvergence { iterations: 3, .. }
        ));
    }

    #[test]
    fn cholesky_solves_spd() {
        let g = DenseMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let x = cholesky_solve(&g, &[2.0, 1.0]).unwrap();
        assert!(close(&g.matvec(&x).unwrap(), &[2.0, 1.0], 1e-14));
    }
}
