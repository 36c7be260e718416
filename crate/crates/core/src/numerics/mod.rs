//! Dense numerical kernels: symmetric matrices, eigensolvers and k-means.

mod eigen;
mod kmeans;
mod matrix;

pub use eigen::{sym_eigen, sym_eigenvalues, EigenDecomposition};
pub use kmeans::{kmeans_cluster, lloyd, KmeansResult};
pub use matrix::SymMatrix;

/// Scales each row to unit Euclidean norm; all-zero rows are left as they are.
pub fn normalize_rows(rows: &mut [Vec<f64>]) {
    for row in rows {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
}
