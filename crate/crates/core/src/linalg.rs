//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// `(A + A') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn select_square(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

pub fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Writes `sub` back into a zero vector of length `p` at positions `idx`.
pub fn embed(sub: &DVector<f64>, idx: &[usize], p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = sub[k];
    }
    out
}

/// Smallest and largest eigenvalue of a symmetric matrix.
#[cfg(test)]
pub fn eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (f64::NAN, f64::NAN);
    }
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration on
/// `A^2`, applied as two products with `A` per step.
pub fn spectral_radius(a: &DMatrix<f64>, max_iters: usize, tol: f64) -> f64 {
    let p = a.nrows();
    if p == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment to coordinate axes
    let mut v = DVector::from_fn(p, |i, _| 1.0 + 0.01 * ((i * 7919 % 97) as f64));
    v /= v.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..max_iters {
        let w = a * (a * &v);
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return estimate.sqrt();
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            estimate = next;
            break;
        }
        estimate = next;
    }
    estimate.max(0.0).sqrt()
}

#[cfg(test)]
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}
