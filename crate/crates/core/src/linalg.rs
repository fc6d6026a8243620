//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Channel-major rows as a matrix (`rows × samples`).
pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c])
}

pub fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order; eigenvectors are the matching columns.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(sym.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // fix the sign so results do not depend on solver internals
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// `(A Aᵀ)^{-1/2} A`: the nearest matrix with orthonormal rows.
pub fn symmetric_decorrelation(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(&(a * a.transpose()));
    let inv_sqrt = DMatrix::from_diagonal(&values.map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()));
    &vectors * inv_sqrt * vectors.transpose() * a
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_sorted_and_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = sorted_eigen(&a);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let gram = vecs.transpose() * &vecs;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-12);
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - a).amax() < 1e-12);
    }

    #[test]
    fn decorrelated_rows_are_orthonormal() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 2.0]);
        let w = symmetric_decorrelation(&a);
        assert!((&w * w.transpose() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
