//! Cameras, bifocal tensors, epipoles, triangulation and relative pose.
//!
//! Cameras follow `P = K R^T [I | -t]`, with `R` the camera-to-world rotation
//! and `t` the center. Writing `V = K^{-T} R^T`, the tensor between views `i`
//! and `j` is `F_ij = V_i [t_i - t_j]_x V_j^T` and satisfies
//! `x_i^T F_ij x_j = 0` for corresponding image points.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax_abs, null_vector, singular_values3};

/// Relative singular-value threshold for rank decisions on 3x3 tensors.
pub const TENSOR_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Essential,
    Fundamental,
}

/// A pinhole camera with upper-triangular intrinsics, a rotation and a center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl CameraModel {
    pub fn new(intrinsics: Matrix3<f64>, rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if orth > 1e-12 || (rotation.determinant() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCamera(format!(
                "rotation is not in SO(3) (orthogonality residual {orth:.3e})"
            )));
        }
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidCamera("intrinsics are not upper triangular".into()));
        }
        if (k[(2, 2)] - 1.0).abs() > 1e-15 || k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(Error::InvalidCamera(
                "intrinsics need K[2][2] = 1 and a positive diagonal".into(),
            ));
        }
        if !center.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidCamera("center is not finite".into()));
        }
        Ok(Self {
            intrinsics,
            rotation,
            center,
        })
    }

    pub fn calibrated(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        Self::new(Matrix3::identity(), rotation, center)
    }

    pub fn is_calibrated(&self) -> bool {
        self.intrinsics == Matrix3::identity()
    }

    /// `V = K^{-T} R^T`.
    pub fn v(&self) -> Matrix3<f64> {
        let k_inv = self.intrinsics.try_inverse().expect("intrinsics validated");
        k_inv.transpose() * self.rotation.transpose()
    }

    pub fn projection(&self) -> Matrix3x4<f64> {
        let kr = self.intrinsics * self.rotation.transpose();
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&kr);
        p.set_column(3, &(-kr * self.center));
        p
    }

    /// Image of a world point, dehomogenized to last coordinate 1.
    pub fn project(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let h = self.intrinsics * self.rotation.transpose() * (x - self.center);
        h / h[2]
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, x: &Vector3<f64>) -> f64 {
        (self.rotation.transpose() * (x - self.center))[2]
    }
}

/// An essential or fundamental matrix.
///
/// `scale_fixed` marks tensors that were normalized to unit Frobenius norm
/// with the largest-magnitude entry positive. Unnormalized tensors keep the
/// scale they were built with, which matters for calibrated consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifocalTensor {
    pub matrix: Matrix3<f64>,
    pub kind: TensorKind,
    pub scale_fixed: bool,
}

impl BifocalTensor {
    /// Validating constructor: the matrix must be finite and rank 2.
    pub fn new(matrix: Matrix3<f64>, kind: TensorKind) -> Result<Self> {
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::RankDeficient);
        }
        let t = Self::from_estimate(matrix, kind);
        if !t.is_rank2() {
            return Err(Error::RankDeficient);
        }
        Ok(t)
    }

    /// Wraps an estimated matrix without validation (averaging output).
    pub fn from_estimate(matrix: Matrix3<f64>, kind: TensorKind) -> Self {
        Self {
            matrix,
            kind,
            scale_fixed: false,
        }
    }

    pub fn normalized(&self) -> Self {
        Self {
            matrix: normalize_tensor_matrix(&self.matrix),
            kind: self.kind,
            scale_fixed: true,
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            kind: self.kind,
            scale_fixed: self.scale_fixed,
        }
    }

    pub fn singular_values(&self) -> Vector3<f64> {
        singular_values3(&self.matrix)
    }

    /// Third singular value below `1e-9` times the largest, second above it.
    pub fn is_rank2(&self) -> bool {
        let s = self.singular_values();
        s[0] > 0.0 && s[2] < TENSOR_RANK_TOL * s[0] && s[1] >= TENSOR_RANK_TOL * s[0]
    }

    pub fn has_equal_singular_values(&self) -> bool {
        let s = self.singular_values();
        s[0] > 0.0 && (s[0] - s[1]).abs() <= TENSOR_RANK_TOL * s[0]
    }
}

/// Unit Frobenius norm with the largest-magnitude entry made positive.
pub fn normalize_tensor_matrix(m: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = m.norm();
    if norm == 0.0 {
        return *m;
    }
    let mut out = m / norm;
    // row-major scan so ties resolve the same way as the serialized layout
    let row_major: Vec<f64> = (0..9).map(|k| out[(k / 3, k % 3)]).collect();
    if let Some(idx) = argmax_abs(&row_major) {
        if row_major[idx] < 0.0 {
            out.neg_mut();
        }
    }
    out
}

/// A point correspondence across two or more views.
///
/// Points are homogeneous image coordinates with last entry 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub view_ids: Vec<usize>,
    pub points: Vec<Vector3<f64>>,
}

impl Track {
    pub fn new(view_ids: Vec<usize>, points: Vec<Vector3<f64>>) -> Result<Self> {
        if view_ids.len() < 2 || view_ids.len() != points.len() {
            return Err(Error::InvalidTrack(format!(
                "{} views with {} points",
                view_ids.len(),
                points.len()
            )));
        }
        for (a, va) in view_ids.iter().enumerate() {
            if view_ids[a + 1..].contains(va) {
                return Err(Error::InvalidTrack(format!("view {va} repeated")));
            }
        }
        let mut pts = Vec::with_capacity(points.len());
        for p in points {
            if !p.iter().all(|x| x.is_finite()) || p[2] == 0.0 {
                return Err(Error::InvalidTrack("point is not a finite image point".into()));
            }
            pts.push(p / p[2]);
        }
        Ok(Self {
            view_ids,
            points: pts,
        })
    }

    pub fn point_in(&self, view: usize) -> Option<&Vector3<f64>> {
        self.view_ids
            .iter()
            .position(|&v| v == view)
            .map(|k| &self.points[k])
    }

    /// The sub-track over `views`, in that order, if every view is observed.
    pub fn restrict(&self, views: &[usize]) -> Option<Track> {
        let points = views
            .iter()
            .map(|&v| self.point_in(v).copied())
            .collect::<Option<Vec<_>>>()?;
        Some(Track {
            view_ids: views.to_vec(),
            points,
        })
    }
}

/// Cross-product matrix: `skew(v) * w = v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Inverse of [`skew`] on the skew-symmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// `V_i (T_i - T_j) V_j^T`, kept at its natural scale.
pub fn bifocal_from_pair(ci: &CameraModel, cj: &CameraModel) -> Result<BifocalTensor> {
    let baseline = ci.center - cj.center;
    if baseline.norm() < 1e-12 {
        return Err(Error::CoincidentCenters(baseline.norm()));
    }
    let m = ci.v() * skew(&baseline) * cj.v().transpose();
    let kind = if ci.is_calibrated() && cj.is_calibrated() {
        TensorKind::Essential
    } else {
        TensorKind::Fundamental
    };
    BifocalTensor::new(m, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpipoleSide {
    /// `e^T F = 0`: the epipole in the left image.
    Left,
    /// `F e = 0`: the epipole in the right image.
    Right,
}

/// Unit null vector of the tensor, largest-magnitude component positive.
pub fn epipole(t: &BifocalTensor, side: EpipoleSide) -> Result<Vector3<f64>> {
    let m = match side {
        EpipoleSide::Right => t.matrix,
        EpipoleSide::Left => t.matrix.transpose(),
    };
    let s = singular_values3(&m);
    if s[0] == 0.0 || s[1] < TENSOR_RANK_TOL * s[0] {
        return Err(Error::RankDeficient);
    }
    let dm = DMatrix::from_fn(3, 3, |r, c| m[(r, c)]);
    let (v, _) = null_vector(&dm);
    let mut e = Vector3::new(v[0], v[1], v[2]).normalize();
    if let Some(idx) = argmax_abs(e.as_slice()) {
        if e[idx] < 0.0 {
            e.neg_mut();
        }
    }
    Ok(e)
}

/// Sum of squared point-to-epipolar-line distances in both images.
pub fn symmetric_epipolar_distance(t: &BifocalTensor, xi: &Vector3<f64>, xj: &Vector3<f64>) -> Result<f64> {
    let f = &t.matrix;
    let line_i = f * xj;
    let line_j = f.transpose() * xi;
    let ni = line_i[0] * line_i[0] + line_i[1] * line_i[1];
    let nj = line_j[0] * line_j[0] + line_j[1] * line_j[1];
    let floor = (1e-15 * f.norm() * xi.norm().max(xj.norm())).powi(2);
    if ni <= floor || nj <= floor {
        return Err(Error::DegenerateLine);
    }
    let r = xi.dot(&line_i);
    Ok(r * r * (1.0 / ni + 1.0 / nj))
}

/// Linear triangulation minimizing `||A X||` with `||X|| = 1`.
///
/// `cams[k]` observes `points[k]`. The returned point has unit norm and a
/// non-negative last coordinate.
pub fn triangulate_dlt(cams: &[Matrix3x4<f64>], points: &[Vector3<f64>]) -> Result<Vector4<f64>> {
    if cams.len() < 2 || cams.len() != points.len() {
        return Err(Error::DegenerateGeometry(format!(
            "triangulation needs matching cameras and points (got {} and {})",
            cams.len(),
            points.len()
        )));
    }
    let mut a = DMatrix::zeros(3 * cams.len(), 4);
    for (k, (p, x)) in cams.iter().zip(points).enumerate() {
        let pn = p / p.norm();
        let rows = skew(&x.normalize()) * pn;
        for r in 0..3 {
            for c in 0..4 {
                a[(3 * k + r, c)] = rows[(r, c)];
            }
        }
    }
    let (v, sigma) = null_vector(&a);
    if (sigma[2] - sigma[3]).abs() <= 1e-12 * sigma[0] {
        return Err(Error::DegenerateGeometry("ambiguous triangulation".into()));
    }
    let mut x = Vector4::new(v[0], v[1], v[2], v[3]);
    x /= x.norm();
    if x[3] < 0.0 {
        x.neg_mut();
    }
    Ok(x)
}

/// Triangulates a track against a full camera list indexed by view id.
pub fn triangulate_track(cams: &[Matrix3x4<f64>], track: &Track) -> Result<Vector4<f64>> {
    let sel = track
        .view_ids
        .iter()
        .map(|&v| {
            cams.get(v)
                .copied()
                .ok_or(Error::IndexOutOfRange { index: v, n: cams.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    triangulate_dlt(&sel, &track.points)
}

/// Relative pose `(R_ij, t_ij)` of view `j` with respect to view `i`.
///
/// With `X_i` and `X_j` the camera-frame coordinates of a point,
/// `X_i = R_ij X_j - t_ij`, and the calibrated tensor is `[t_ij]_x R_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativePose {
    /// Ground-truth relative pose between two cameras, unit translation.
    pub fn between(ci: &CameraModel, cj: &CameraModel) -> Self {
        let rotation = ci.rotation.transpose() * cj.rotation;
        let translation = (ci.rotation.transpose() * (ci.center - cj.center)).normalize();
        Self {
            rotation,
            translation,
        }
    }

    pub fn essential(&self) -> Matrix3<f64> {
        skew(&self.translation) * self.rotation
    }

    /// Depths `(lambda_i, lambda_j)` of the point seen at `xi` and `xj`.
    pub fn depths(&self, xi: &Vector3<f64>, xj: &Vector3<f64>) -> (f64, f64) {
        // lambda_i xi - lambda_j R xj = -t
        let b = self.rotation * xj;
        let a11 = xi.dot(xi);
        let a12 = -xi.dot(&b);
        let a22 = b.dot(&b);
        let r1 = -xi.dot(&self.translation);
        let r2 = b.dot(&self.translation);
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            return (0.0, 0.0);
        }
        let li = (r1 * a22 - a12 * r2) / det;
        let lj = (a11 * r2 - a12 * r1) / det;
        (li, lj)
    }
}

/// The four `(R, t)` factorizations of an essential matrix, `E ~ [t]_x R`.
pub fn essential_decompositions(e: &Matrix3<f64>) -> [RelativePose; 4] {
    let svd = e.svd(true, true);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u0 = svd.u.expect("u requested");
    let vt0 = svd.v_t.expect("v_t requested");
    let mut u = Matrix3::zeros();
    let mut v = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u0.column(src));
        v.set_column(dst, &vt0.row(src).transpose());
    }
    if u.determinant() < 0.0 {
        u.neg_mut();
    }
    if v.determinant() < 0.0 {
        v.neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v.transpose();
    let r2 = u * w.transpose() * v.transpose();
    let t: Vector3<f64> = u.column(2).into_owned();
    [
        RelativePose { rotation: r1, translation: t },
        RelativePose { rotation: r1, translation: -t },
        RelativePose { rotation: r2, translation: t },
        RelativePose { rotation: r2, translation: -t },
    ]
}

/// Number of correspondences triangulating in front of both cameras.
pub fn cheirality_votes(pose: &RelativePose, tracks: &[Track]) -> usize {
    tracks
        .iter()
        .filter(|tr| tr.points.len() >= 2)
        .filter(|tr| {
            let (li, lj) = pose.depths(&tr.points[0], &tr.points[1]);
            li > 0.0 && lj > 0.0
        })
        .count()
}

/// Selects the essential-matrix factorization with the most positive-depth
/// votes. `tracks` are 2-view tracks with `points[0]` in the left view.
pub fn rotation_from_essential(e: &BifocalTensor, tracks: &[Track]) -> Result<RelativePose> {
    if tracks.is_empty() {
        return Err(Error::InsufficientTracks("no 2-view tracks for cheirality".into()));
    }
    let candidates = essential_decompositions(&e.matrix);
    let votes: Vec<usize> = candidates.iter().map(|c| cheirality_votes(c, tracks)).collect();
    let best = *votes.iter().max().expect("four candidates");
    let winners: Vec<usize> = (0..4).filter(|&k| votes[k] == best).collect();
    if winners.len() != 1 {
        return Err(Error::AmbiguousCheirality);
    }
    let mut pose = candidates[winners[0]].clone();
    pose.translation = pose.translation.normalize();
    Ok(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation_from_axis_angle;
    use approx::assert_relative_eq;

    fn cam(w: [f64; 3], t: [f64; 3]) -> CameraModel {
        CameraModel::calibrated(rotation_from_axis_angle(&Vector3::from(w)), Vector3::from(t)).unwrap()
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s, Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        let v = Vector3::new(0.3, -1.2, 2.5);
        assert_eq!(skew(&v) * v, Vector3::zeros());
        let w = Vector3::new(-0.7, 0.1, 0.4);
        assert_relative_eq!(skew(&v) * w, v.cross(&w), epsilon = 1e-15);
        assert_eq!(skew(&(v + w)), skew(&v) + skew(&w));
        assert_eq!(skew(&v), -skew(&v).transpose());
    }

    #[test]
    fn pair_tensor_identity_rotations() {
        let ci = cam([0.0; 3], [0.0; 3]);
        let cj = cam([0.0; 3], [1.0, 0.0, 0.0]);
        let f = bifocal_from_pair(&ci, &cj).unwrap();
        assert_eq!(f.kind, TensorKind::Essential);
        assert_relative_eq!(f.matrix, skew(&Vector3::new(-1.0, 0.0, 0.0)), epsilon = 1e-15);
        assert!(matches!(bifocal_from_pair(&ci, &ci), Err(Error::CoincidentCenters(_))));
    }

    #[test]
    fn pair_tensor_transpose_symmetry_and_equal_singular_values() {
        let ci = cam([0.1, -0.2, 0.3], [0.5, 1.0, -2.0]);
        let cj = cam([-0.4, 0.2, 0.05], [-1.0, 0.3, 0.7]);
        let fij = bifocal_from_pair(&ci, &cj).unwrap();
        let fji = bifocal_from_pair(&cj, &ci).unwrap();
        assert_relative_eq!(fij.matrix, fji.matrix.transpose(), epsilon = 1e-14);
        let s = fij.singular_values();
        assert_relative_eq!(s[0], s[1], max_relative = 1e-12);
        assert!(s[2] < 1e-12 * s[0]);
    }

    #[test]
    fn epipole_of_skew_and_transpose() {
        let f = BifocalTensor::new(skew(&Vector3::new(0.0, 0.0, 1.0)), TensorKind::Essential).unwrap();
        assert_relative_eq!(epipole(&f, EpipoleSide::Right).unwrap(), Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-14);
        let ci = cam([0.1, 0.0, 0.2], [0.0, 0.0, 0.0]);
        let cj = cam([0.0, 0.3, 0.0], [1.0, 2.0, 0.5]);
        let f = bifocal_from_pair(&ci, &cj).unwrap();
        let ft = f.transpose();
        assert_relative_eq!(
            epipole(&f, EpipoleSide::Left).unwrap(),
            epipole(&ft, EpipoleSide::Right).unwrap(),
            epsilon = 1e-12
        );
        // right epipole is the image of the other center in view j
        let proj = cj.project(&ci.center);
        let e = epipole(&f, EpipoleSide::Right).unwrap();
        assert!(e.cross(&proj.normalize()).norm() < 1e-12);
    }

    #[test]
    fn epipole_rejects_rank_one() {
        let m = Vector3::new(1.0, 0.0, 0.0) * Vector3::new(0.0, 1.0, 0.0).transpose();
        let t = BifocalTensor::from_estimate(m, TensorKind::Fundamental);
        assert!(matches!(epipole(&t, EpipoleSide::Right), Err(Error::RankDeficient)));
    }

    #[test]
    fn symmetric_distance_zero_for_exact_and_symmetric() {
        let ci = cam([0.1, 0.0, 0.2], [0.0, 0.0, 0.0]);
        let cj = cam([0.0, 0.3, 0.0], [1.0, 0.2, 0.5]);
        let f = bifocal_from_pair(&ci, &cj).unwrap().normalized();
        let x = Vector3::new(0.3, -0.2, 5.0);
        let (xi, xj) = (ci.project(&x), cj.project(&x));
        assert!(symmetric_epipolar_distance(&f, &xi, &xj).unwrap() < 1e-18);
        let xi2 = xi + Vector3::new(0.01, -0.02, 0.0);
        let d1 = symmetric_epipolar_distance(&f, &xi2, &xj).unwrap();
        let d2 = symmetric_epipolar_distance(&f.transpose(), &xj, &xi2).unwrap();
        assert_relative_eq!(d1, d2, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_distance_grows_quadratically() {
        let ci = cam([0.1, 0.0, 0.2], [0.0, 0.0, 0.0]);
        let cj = cam([0.0, 0.3, 0.0], [1.0, 0.2, 0.5]);
        let f = bifocal_from_pair(&ci, &cj).unwrap().normalized();
        let x = Vector3::new(0.3, -0.2, 5.0);
        let (xi, xj) = (ci.project(&x), cj.project(&x));
        let line = f.matrix * xj;
        let n = Vector3::new(line[0], line[1], 0.0).normalize();
        let d = |delta: f64| symmetric_epipolar_distance(&f, &(xi + n * delta), &xj).unwrap();
        // finite-difference slope of log d versus log delta
        let slope = (d(2e-6).ln() - d(1e-6).ln()) / 2f64.ln();
        assert_relative_eq!(slope, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn triangulation_cases() {
        let c0 = cam([0.0; 3], [-1.0, 0.0, -5.0]);
        let c1 = cam([0.0; 3], [1.0, 0.0, -5.0]);
        let origin = Vector3::zeros();
        let p = [c0.projection(), c1.projection()];
        let x = triangulate_dlt(&p, &[c0.project(&origin), c1.project(&origin)]).unwrap();
        assert_relative_eq!(x, Vector4::new(0.0, 0.0, 0.0, 1.0), epsilon = 1e-12);

        let same = [c0.projection(), c0.projection()];
        let xi = c0.project(&origin);
        assert!(matches!(triangulate_dlt(&same, &[xi, xi]), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn relative_pose_recovered_from_synthetic_pair() {
        let ci = cam([0.1, -0.2, 0.05], [0.0, 0.0, 0.0]);
        let cj = cam([-0.05, 0.1, 0.2], [1.0, 0.3, -0.2]);
        let truth = RelativePose::between(&ci, &cj);
        let e = bifocal_from_pair(&ci, &cj).unwrap().normalized();
        let pts = [
            Vector3::new(0.2, 0.1, 6.0),
            Vector3::new(-0.5, 0.4, 5.0),
            Vector3::new(0.7, -0.3, 7.0),
            Vector3::new(0.0, 0.0, 4.0),
        ];
        let tracks: Vec<Track> = pts
            .iter()
            .map(|x| Track::new(vec![0, 1], vec![ci.project(x), cj.project(x)]).unwrap())
            .collect();
        let pose = rotation_from_essential(&e, &tracks).unwrap();
        assert!(crate::linalg::rotation_angle(&pose.rotation, &truth.rotation) < 1e-8);
        assert_relative_eq!(pose.translation, truth.translation, epsilon = 1e-8);
        // a single track already has a unique winner
        let single = rotation_from_essential(&e, &tracks[..1]).unwrap();
        assert!(crate::linalg::rotation_angle(&single.rotation, &truth.rotation) < 1e-8);
        assert_eq!(
            essential_decompositions(&e.matrix)
                .iter()
                .filter(|c| cheirality_votes(c, &tracks[..1]) == 1)
                .count(),
            1
        );
    }

    #[test]
    fn pure_translation_gives_identity() {
        let ci = cam([0.0; 3], [0.0, 0.0, 0.0]);
        let cj = cam([0.0; 3], [1.0, 0.5, 0.0]);
        let e = bifocal_from_pair(&ci, &cj).unwrap();
        let x = Vector3::new(0.3, 0.2, 5.0);
        let tr = Track::new(vec![0, 1], vec![ci.project(&x), cj.project(&x)]).unwrap();
        let pose = rotation_from_essential(&e, &[tr]).unwrap();
        assert_relative_eq!(pose.rotation, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(CameraModel::calibrated(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
        let mut k = Matrix3::identity();
        k[(1, 0)] = 0.1;
        assert!(CameraModel::new(k, Matrix3::identity(), Vector3::zeros()).is_err());
        assert!(Track::new(vec![0, 0], vec![Vector3::new(0.0, 0.0, 1.0); 2]).is_err());
        assert!(BifocalTensor::new(Matrix3::identity(), TensorKind::Fundamental).is_err());
    }
}
