//! Small dense linear-algebra helpers shared by the geometry engines.
//!
//! Everything here works on `nalgebra` dynamic matrices; dimensions in this
//! crate rarely exceed five, so clarity wins over blocking or caching.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which a metric is rejected.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = symmetrize(a);
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Eigen-decomposition sorted by ascending eigenvalue; columns of the
/// returned matrix are the matching unit eigenvectors.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Checks positive definiteness and conditioning of a metric matrix.
pub fn check_metric(g: &DMatrix<f64>) -> Result<()> {
    let ev = sym_eigenvalues(g);
    let min = ev[0];
    let max = ev[ev.len() - 1];
    if !(min > 0.0) || !min.is_finite() || !max.is_finite() {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let condition = max / min;
    if condition > CONDITION_LIMIT {
        return Err(Error::Conditioning {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    Ok(())
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Lower Cholesky factor `L` with `g = L Lᵀ`.
pub fn cholesky_lower(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    g.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })
}

/// Eigenvalues (ascending) of the symmetric pencil `a - λ g`, with `g`
/// positive definite.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = cholesky_lower(g)?;
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let reduced = &l_inv * a * l_inv.transpose();
    Ok(sym_eigenvalues(&reduced))
}

/// Operator norm of the symmetric form `a` measured against the metric `g`:
/// the largest `|λ|` with `a v = λ g v`.
pub fn operator_norm(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let ev = generalized_eigenvalues(a, g)?;
    Ok(ev.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// `g`-orthonormal frame built by modified Gram–Schmidt over the coordinate
/// basis, pivoting on the largest remaining `g`-norm. Columns of the result
/// are the frame vectors in coordinates.
pub fn orthonormal_frame(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let mut remaining: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    let inner = |u: &DVector<f64>, v: &DVector<f64>| (g * v).dot(u);
    let mut frame = DMatrix::zeros(n, n);
    for col in 0..n {
        let (pivot, norm_sq) = remaining
            .iter()
            .enumerate()
            .map(|(i, v)| (i, inner(v, v)))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if !(norm_sq > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: norm_sq });
        }
        let e = remaining.swap_remove(pivot) / norm_sq.sqrt();
        for v in remaining.iter_mut() {
            let proj = inner(&e, v);
            *v -= &e * proj;
        }
        frame.set_column(col, &e);
    }
    Ok(frame)
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Numerical rank: singular values above `rel_tol` times the largest one.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&max) if max > f64::MIN_POSITIVE => sv.iter().filter(|&&s| s > rel_tol * max).count(),
        _ => 0,
    }
}

/// Largest absolute entry of a slice; zero for an empty slice.
pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
