use nalgebra::{DMatrix, DVector};

/// Minimum-norm solution of `H y = r` for symmetric positive semidefinite
/// `H`, by eigendecomposition. Eigenvalues below `1e-12·λ_max` count as
/// zero, so for `r` outside the range of `H` this is the least-squares
/// solution.
pub(crate) fn psd_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = h.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut y = DVector::zeros(rhs.len());
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 1e-12 * top {
            let v = eig.eigenvectors.column(k);
            y.axpy(v.dot(rhs) / l, &v, 1.0);
        }
    }
    y
}
