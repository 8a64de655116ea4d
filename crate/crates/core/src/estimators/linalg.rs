//! Covariance spectra via nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

/// Mean-centered `N x D` data matrix.
fn centered<T: Scalar>(cloud: &PointCloud<T>) -> DMatrix<f64> {
    let (n, d) = (cloud.n(), cloud.d_ambient());
    let mut mean = vec![0.0f64; d];
    for row in cloud.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    DMatrix::from_fn(n, d, |i, j| cloud.row(i)[j].as_f64() - mean[j])
}

/// Symmetric eigen-decomposition sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Eigenvalues of the sample covariance, descending. When `N < D` the
/// Gram matrix is decomposed instead (same non-zero spectrum).
pub(crate) fn covariance_spectrum<T: Scalar>(cloud: &PointCloud<T>) -> Vec<f64> {
    let x = centered(cloud);
    let scale = 1.0 / (cloud.n().max(2) - 1) as f64;
    let m = if cloud.d_ambient() <= cloud.n() {
        x.tr_mul(&x) * scale
    } else {
        (&x * x.transpose()) * scale
    };
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Whitened principal-component scores for every component whose
/// covariance eigenvalue exceeds `lambda_max / cond`.
///
/// Returns the scores (`N x r`, row-major) and the retained eigenvalues.
pub(crate) fn whitened_scores<T: Scalar>(cloud: &PointCloud<T>, cond: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (cloud.n(), cloud.d_ambient());
    let x = centered(cloud);
    let dof = (n.max(2) - 1) as f64;
    if d <= n {
        let (values, vectors) = sorted_eigen(x.tr_mul(&x) / dof);
        let lambda_max = values[0];
        let keep: Vec<usize> = (0..values.len())
            .filter(|&i| values[i] > lambda_max / cond)
            .collect();
        let mut scores = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            for &c in &keep {
                let mut s = 0.0;
                for j in 0..d {
                    s += x[(i, j)] * vectors[(j, c)];
                }
                scores.push(s / values[c].sqrt());
            }
        }
        (scores, keep.iter().map(|&c| values[c]).collect())
    } else {
        // Gram route: covariance eigenvalue = mu / dof, whitened score = u * sqrt(dof).
        let (mus, vectors) = sorted_eigen(&x * x.transpose());
        let lambda_max = mus[0] / dof;
        let keep: Vec<usize> = (0..mus.len())
            .filter(|&i| mus[i] / dof > lambda_max / cond)
            .collect();
        let root = dof.sqrt();
        let mut scores = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            for &c in &keep {
                scores.push(vectors[(i, c)] * root);
            }
        }
        (scores, keep.iter().map(|&c| mus[c] / dof).collect())
    }
}
