//! Small dense linear-algebra helpers shared by the geometry and averaging code.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// The input is symmetrized first. Eigenvector columns follow the order of the
/// returned values.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Flip `v` so that its largest-magnitude entry is positive. The first entry
/// wins among exact ties.
pub fn fix_sign_largest_positive(v: &mut DVector<f64>) {
    if let Some(idx) = argmax_abs(v.as_slice()) {
        if v[idx] < 0.0 {
            v.neg_mut();
        }
    }
}

pub(crate) fn argmax_abs(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in values.iter().enumerate() {
        let a = x.abs();
        match best {
            Some((_, b)) if a <= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

/// Singular value decomposition with singular values in descending order.
///
/// Returns `(u, sigma, v)` where `m = u * diag(sigma) * v^T`. Wide inputs are
/// padded with zero rows so that `v` is always square.
pub fn svd_sorted(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let padded;
    let a = if rows < cols {
        padded = m.clone().resize_vertically(cols, 0.0);
        &padded
    } else {
        m
    };
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut v_sorted = DMatrix::zeros(v_t.ncols(), k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
    }
    let u_sorted = u_sorted.rows(0, rows).into_owned();
    (u_sorted, sigma, v_sorted)
}

/// Right singular vector belonging to the smallest singular value, together
/// with the full descending singular spectrum.
pub fn null_vector(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let (_, sigma, v) = svd_sorted(m);
    let last = v.ncols() - 1;
    (v.column(last).into_owned(), sigma)
}

pub fn singular_values3(m: &Matrix3<f64>) -> Vector3<f64> {
    let mut s = m.singular_values();
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    s
}

/// Closest rotation in Frobenius norm (polar factor with determinant fix).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let s = svd.singular_values;
        let mut idx = 0;
        for k in 1..3 {
            if s[k] < s[idx] {
                idx = k;
            }
        }
        let mut d = Matrix3::identity();
        d[(idx, idx)] = -1.0;
        r = u * d * v_t;
    }
    r
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// Rodrigues' formula for a rotation vector.
pub fn rotation_from_axis_angle(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta < 1e-300 {
        return Matrix3::identity();
    }
    let k = w / theta;
    let kx = crate::geom::skew(&k);
    Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

pub fn dmatrix_from_mat3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

pub fn block3(m: &DMatrix<f64>, bi: usize, bj: usize) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[(3 * bi + r, 3 * bj + c)])
}

pub fn set_block3(m: &mut DMatrix<f64>, bi: usize, bj: usize, b: &Matrix3<f64>) {
    for r in 0..3 {
        for c in 0..3 {
            m[(3 * bi + r, 3 * bj + c)] = b[(r, c)];
        }
    }
}

/// Orthonormal basis of the column space via the polar factor `M (M^T M)^{-1/2}`.
///
/// Returns `None` when `M^T M` is numerically singular.
pub fn polar_orthonormalize(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (u, sigma, v) = svd_sorted(m);
    let k = m.ncols();
    if sigma.len() < k || sigma[k - 1] <= 1e-14 * sigma[0].max(1e-300) {
        return None;
    }
    Some(u.columns(0, k) * v.transpose())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
