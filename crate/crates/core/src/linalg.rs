//! Dense linear-algebra helpers shared by every module.
//!
//! Rank decisions compare pivoted Gram–Schmidt residuals against the
//! largest column norm, so they do not depend on the scale of the input.

use nalgebra::{Complex, DMatrix, DVector, Dyn, Schur, SymmetricEigen};

/// Relative residual threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis (as columns) of the column space of `m`.
///
/// Returns a `nrows × 0` matrix when `m` is numerically zero.
pub fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    if m.ncols() == 0 || d == 0 {
        return DMatrix::zeros(d, 0);
    }
    assert!(m.iter().all(|v| v.is_finite()), "orthonormal_basis: non-finite input");
    if m.amax() == 0.0 {
        return DMatrix::zeros(d, 0);
    }
    pivoted_gram_schmidt(m)
}

/// Column space by Gram–Schmidt with column pivoting and a second
/// orthogonalization pass. nalgebra's SVD can cycle forever on some
/// rank-deficient inputs, so nothing here depends on it.
fn pivoted_gram_schmidt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    let top = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while basis.len() < d {
        let (idx, norm) = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if norm <= RANK_TOL * top {
            break;
        }
        let q = cols.swap_remove(idx) / norm;
        for c in cols.iter_mut() {
            for _ in 0..2 {
                let proj = q.dot(c);
                c.axpy(-proj, &q, 1.0);
            }
        }
        basis.push(q);
    }
    if basis.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Numerical rank with the relative threshold [`RANK_TOL`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    orthonormal_basis(m).ncols()
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns `q` inside ℝ^d.
pub fn orthogonal_complement(q: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return DMatrix::identity(d, d);
    }
    if q.ncols() >= d {
        return DMatrix::zeros(d, 0);
    }
    let proj = DMatrix::identity(d, d) - q * q.transpose();
    let eig = SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut out = DMatrix::zeros(d, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &eig.eigenvectors.column(i));
    }
    out
}

/// Largest singular value; 0 for empty matrices.
pub fn op_norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.transpose() * m).eigenvalues.max().max(0.0).sqrt()
}

/// Smallest singular value of a square matrix.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.transpose() * m).eigenvalues.min().max(0.0).sqrt()
}

/// Upper bound on the operator norm induced by the product norm
/// `‖(x_1,…,x_n)‖ = Σ_s ‖x_s‖₂` on a slot-major stacked space with `n`
/// slots of width `w`: `max_t Σ_s ‖B_st‖₂`. Exact when `n = 1`.
pub fn block_sum_norm(m: &DMatrix<f64>, n: usize, w: usize) -> f64 {
    if n == 1 {
        return op_norm2(m);
    }
    let mut best: f64 = 0.0;
    for t in 0..n {
        let mut col = 0.0;
        for s in 0..n {
            col += op_norm2(&m.view((s * w, t * w), (w, w)).into_owned());
        }
        best = best.max(col);
    }
    best
}

/// Iteration cap for one real Schur attempt.
fn schur_iterations(n: usize) -> usize {
    1000 + 100 * n
}

fn try_real_schur(m: &DMatrix<f64>) -> Option<Schur<f64, Dyn>> {
    Schur::try_new(m.clone(), f64::EPSILON, schur_iterations(m.nrows()))
}

/// Fixed full-rank perturbation pattern for stalled Schur iterations.
fn nudge(m: &DMatrix<f64>, size: f64) -> DMatrix<f64> {
    let n = m.nrows();
    m + DMatrix::from_fn(n, n, |i, j| size * (((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5))
}

/// Real Schur form `m = Q T Qᵀ`. Unshifted QR stalls on exact Jordan
/// blocks; those are retried after a relative perturbation of 1e-15.
pub fn real_schur(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    if let Some(s) = try_real_schur(m) {
        return s.unpack();
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut size = 1e-15 * scale;
    loop {
        if let Some(s) = try_real_schur(&nudge(m, size)) {
            return s.unpack();
        }
        size *= 10.0;
        assert!(size <= 1e-6 * scale, "real Schur iteration failed to converge");
    }
}

/// Eigenvalues of a square matrix (real Schur based). A stalled iteration
/// on a nilpotent matrix reports exact zeros.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    // Exact zeros: Schur on a Jordan block would return O(eps^{1/k}).
    if is_strictly_triangular(m) {
        return vec![Complex::new(0.0, 0.0); m.nrows()];
    }
    if let Some(s) = try_real_schur(m) {
        return s.complex_eigenvalues().iter().cloned().collect();
    }
    if is_nilpotent_matrix(m, 1e-12) {
        return vec![Complex::new(0.0, 0.0); m.nrows()];
    }
    let (_, t) = real_schur(m);
    Schur::try_new(t, f64::EPSILON, schur_iterations(m.nrows()))
        .map(|s| s.complex_eigenvalues().iter().cloned().collect())
        .expect("quasi-triangular input converges immediately")
}

/// Strictly upper or strictly lower triangular, with exact zeros.
pub fn is_strictly_triangular(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let lower = (0..n).all(|i| (i..n).all(|j| m[(i, j)] == 0.0));
    let upper = (0..n).all(|i| (0..=i).all(|j| m[(i, j)] == 0.0));
    lower || upper
}

/// Spectral radius; 0 for empty matrices.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Tolerance-bound nilpotency test.
///
/// Eigenvalues of a nilpotent matrix are perturbed to O(eps^{1/k}) for a
/// Jordan block of size k, so the test is on `‖M^m‖_F` directly.
pub fn is_nilpotent_matrix(m: &DMatrix<f64>, tol: f64) -> bool {
    let k = m.nrows();
    if k == 0 {
        return true;
    }
    let scale = m.norm().max(1.0);
    let mut p = m.clone();
    for _ in 1..k {
        p = &p * m;
    }
    p.norm() <= tol * scale.powi(k as i32)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Residual of `span(a) ⊆ span(q)` for orthonormal `q`: `‖(I − QQᵀ) A‖₂`.
pub fn containment_residual(a: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let resid = if q.ncols() == 0 {
        a.clone()
    } else {
        a - q * (q.transpose() * a)
    };
    op_norm2(&resid)
}

/// Build a column vector from a slice.
pub fn vec_of(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Build a matrix from nested rows.
pub fn mat_of_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Nested rows of a matrix, for serialization.
pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_has_exact_zero_spectrum_and_small_radius_is_kept() {
        let shift = DMatrix::from_fn(6, 6, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
        assert_eq!(spectral_radius(&shift), 0.0);
        let mut near = shift.clone();
        near[(0, 5)] = 1e-6;
        let rho = spectral_radius(&near);
        assert!((rho - 1e-1).abs() < 1e-9, "{rho}");
    }

    #[test]
    fn complement_of_zero_is_identity() {
        let q = DMatrix::zeros(3, 0);
        assert_eq!(orthogonal_complement(&q, 3), DMatrix::identity(3, 3));
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let a = mat_of_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 2.0], vec![3.0, 0.0]]);
        let q = orthonormal_basis(&a);
        assert_eq!(q.ncols(), 2);
        let c = orthogonal_complement(&q, 4);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((c.transpose() * &q).norm() < 1e-12);
    }

    #[test]
    fn rank_is_scale_invariant() {
        let a = mat_of_rows(&[vec![1e-20, 2e-20], vec![2e-20, 4e-20]]);
        assert_eq!(rank(&a), 1);
        assert_eq!(rank(&(a * 1e30)), 1);
    }

    #[test]
    fn nilpotent_shift_detected() {
        let mut s = DMatrix::zeros(4, 4);
        for i in 0..3 {
            s[(i + 1, i)] = 1.0;
        }
        assert!(is_nilpotent_matrix(&s, 1e-10));
        s[(0, 0)] = 1e-3;
        assert!(!is_nilpotent_matrix(&s, 1e-10));
    }

    #[test]
    fn block_norm_bounds_product_norm() {
        let m = mat_of_rows(&[
            vec![1.0, 2.0, 0.5, 0.0],
            vec![0.0, 1.0, -1.0, 0.3],
            vec![0.2, 0.0, 1.0, 0.0],
            vec![0.0, -0.7, 0.0, 2.0],
        ]);
        let bound = block_sum_norm(&m, 2, 2);
        let sum_norm = |v: &DVector<f64>| v.rows(0, 2).norm() + v.rows(2, 2).norm();
        for k in 0..200 {
            let t = k as f64 * 0.37;
            let x = vec_of(&[t.sin(), (2.0 * t).cos(), (0.5 * t).sin(), t.cos()]);
            assert!(sum_norm(&(&m * &x)) <= bound * sum_norm(&x) + 1e-12);
        }
    }
}
