//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{cmp_real, Real};

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
pub fn symmetric_eigen_desc<T: Real>(m: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_real(eig.eigenvalues[b], eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// 3x3 symmetric eigen-decomposition, eigenvalues ascending, eigenvectors as
/// columns of a right-handed orthonormal frame.
pub fn symmetric_eigen3_asc<T: Real>(m: &Matrix3<T>) -> (Vector3<T>, Matrix3<T>) {
    let eig = m.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| cmp_real(eig.eigenvalues[a], eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let mut vectors = Matrix3::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);
    if vectors.determinant() < T::zero() {
        let flipped = -vectors.column(2);
        vectors.set_column(2, &flipped);
    }
    (values, vectors)
}

/// Flips the vector so that its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn canonical_sign<T: Real>(v: &mut DVector<T>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < T::zero() {
        v.neg_mut();
    }
}

/// Orthogonal `R` minimizing `||a R - b||_F`, i.e. the polar factor of `aᵀ b`.
pub fn procrustes_rotation<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let m = a.transpose() * b;
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    u * vt
}

/// `min over orthogonal R of ||a R - b||_F`.
pub fn procrustes_distance<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let r = procrustes_rotation(a, b);
    (a * r - b).norm()
}

/// Moore–Penrose pseudoinverse with singular values below
/// `rel_cutoff * sigma_max` treated as zero.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>, rel_cutoff: T) -> DMatrix<T> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let cutoff = rel_cutoff * smax;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > T::zero() {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Orthonormal basis for the column span of `m` (rank `m.ncols()` expected).
pub fn orthonormalize<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let k = m.ncols();
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let smin = svd.singular_values.iter().fold(T::infinity(), |a, &b| a.min(b));
    if smax <= T::zero() || smin <= smax * T::lit(1e-12) {
        return Err(Error::Numerical("rank-deficient basis".into()));
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    // polar factor keeps the basis as close as possible to the input columns
    Ok(u.columns(0, k) * vt)
}

/// Largest column-orthonormality defect `max |QᵀQ - I|`.
pub fn orthonormality_defect<T: Real>(q: &DMatrix<T>) -> T {
    let g = q.transpose() * q;
    let mut worst = T::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procrustes_recovers_rotation() {
        let q = DMatrix::<f64>::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rotated = &q * &r;
        assert!(procrustes_distance(&rotated, &q) < 1e-12);
        let found = procrustes_rotation(&q, &rotated);
        assert!((found - r).norm() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_rank_one() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pseudo_inverse(&m, 1e-10);
        assert!((p - DMatrix::from_element(2, 2, 0.25)).norm() < 1e-12);
    }

    #[test]
    fn sorted_eigen() {
        let m = DMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = symmetric_eigen_desc(m);
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
