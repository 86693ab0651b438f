//! Camera recovery from consistent triplet matrices and registration of all
//! triplets into one frame.
//!
//! Euclidean triplet cameras are `[R_i^T | -R_i^T t_i]` with the first view
//! at the origin with identity rotation. Projective triplet cameras put the
//! middle view at `[I | 0]`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    epipole, rotation_from_essential, skew, triangulate_dlt, vee, BifocalTensor, EpipoleSide, TensorKind, Track,
};
use crate::graph::TripletCover;
use crate::linalg::{block3, nearest_rotation, sorted_symmetric_eigen, svd_sorted};
use crate::nview::{certify_collinear_essential_dense, certify_general_dense, CertTolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Euclidean,
    Projective,
}

/// The free parameter fixed by point tracks or by the third tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeParameter {
    /// Position of the third camera along the line, in units of the first baseline.
    Alpha(f64),
    /// Plane-at-infinity vector of the third projective camera.
    A([f64; 4]),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletCameras {
    pub triplet_id: usize,
    pub views: [usize; 3],
    pub cameras: [Matrix3x4<f64>; 3],
    pub frame: Frame,
    pub free_parameter: FreeParameter,
    /// `||R_01 R_12 R_02^T - I||_F` for calibrated triplets, else 0.
    pub cycle_residual: f64,
    /// Residual of the consistency condition not enforced during averaging
    /// (block orthogonality or block rotation), for diagnostics.
    pub condition_residual: f64,
}

impl TripletCameras {
    /// Rotation and center of a Euclidean camera.
    pub fn pose(&self, k: usize) -> (Matrix3<f64>, Vector3<f64>) {
        pose_of(&self.cameras[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    /// Relative eigenvalue threshold for the rank checks.
    pub rank_tol: f64,
    /// Bound on the relative eigenvalue pairing residual.
    pub pairing_tol: f64,
    /// Bound on the Frobenius rotation cycle residual.
    pub cycle_tol: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-6,
            pairing_tol: 1e-6,
            cycle_tol: 0.1,
        }
    }
}

/// `[R^T | -R^T t]`.
pub fn euclidean_camera(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix3x4<f64> {
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r.transpose());
    p.set_column(3, &(-r.transpose() * t));
    p
}

/// Inverse of [`euclidean_camera`].
pub fn pose_of(p: &Matrix3x4<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let r: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).transpose();
    let t = -(r * p.column(3));
    (r, t)
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn pairing_residual(vals: &[f64], k: usize) -> f64 {
    let m = vals.len();
    let scale = vals[0].abs().max(vals[m - 1].abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    (0..k)
        .map(|i| (vals[i] + vals[m - 1 - i]).abs() / scale)
        .fold(0.0, f64::max)
}

fn check_square9(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != 9 || m.ncols() != 9 {
        return Err(Error::InvalidArgument(format!(
            "triplet matrix must be 9x9, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Eigen rotation averaging: top three eigenvectors of the block matrix of
/// relative rotations `R_ab = R_a^T R_b`, returned in the gauge `R_0 = I`.
pub fn eigen_rotation_averaging(n: usize, relative: &BTreeMap<(usize, usize), Matrix3<f64>>) -> Vec<Matrix3<f64>> {
    let mut g = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        g.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&Matrix3::identity());
    }
    for (&(a, b), r) in relative {
        g.fixed_view_mut::<3, 3>(3 * a, 3 * b).copy_from(r);
        g.fixed_view_mut::<3, 3>(3 * b, 3 * a).copy_from(&r.transpose());
    }
    let (_, vecs) = sorted_symmetric_eigen(&g);
    let mut q = vecs.columns(0, 3).into_owned() * (n as f64).sqrt();
    let b0: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into_owned();
    if b0.determinant() < 0.0 {
        let c = -q.column(2);
        q.set_column(2, &c);
    }
    let blocks: Vec<Matrix3<f64>> = (0..n)
        .map(|i| nearest_rotation(&q.fixed_view::<3, 3>(3 * i, 0).into_owned()))
        .collect();
    // blocks are R_i^T W; R_0^T R_i = B_0 B_i^T
    blocks.iter().map(|b| blocks[0] * b.transpose()).collect()
}

/// Calibrated collinear triplet: pairwise rotations by cheirality, eigen
/// rotation averaging, the first baseline from the `(0,1)` block and the
/// position of the third camera from 3-view tracks.
///
/// `e` is the 9x9 triplet matrix over `views`. Tracks may span any views;
/// the relevant sub-tracks are extracted.
pub fn recover_calibrated_collinear_triplet(
    triplet_id: usize,
    views: [usize; 3],
    e: &DMatrix<f64>,
    tracks: &[Track],
    cfg: &RecoveryConfig,
) -> Result<TripletCameras> {
    check_square9(e)?;
    let cert = certify_collinear_essential_dense(
        e,
        CertTolerances {
            rank_tol: cfg.rank_tol,
            residual_tol: cfg.pairing_tol,
        },
    );
    let pairing = pairing_residual(&cert.eigenvalues, 2);
    if cert.rank_estimate != 4 || cert.signature != (2, 2) || !(pairing < cfg.pairing_tol) {
        return Err(Error::InconsistentInput(format!(
            "rank {} signature {:?} pairing residual {pairing:.3e}",
            cert.rank_estimate, cert.signature
        )));
    }

    let mut relative = BTreeMap::new();
    let mut t01 = Vector3::zeros();
    for &(a, b) in &PAIRS {
        let pair_tracks: Vec<Track> = tracks.iter().filter_map(|t| t.restrict(&[views[a], views[b]])).collect();
        let tensor = BifocalTensor::from_estimate(block3(e, a, b), TensorKind::Essential);
        let pose = rotation_from_essential(&tensor, &pair_tracks)?;
        if (a, b) == (0, 1) {
            t01 = pose.translation;
        }
        relative.insert((a, b), pose.rotation);
    }
    let cycle = (relative[&(0, 1)] * relative[&(1, 2)] * relative[&(0, 2)].transpose() - Matrix3::identity()).norm();
    if !(cycle <= cfg.cycle_tol) {
        return Err(Error::CyclicInconsistency(cycle));
    }
    let rots = eigen_rotation_averaging(3, &relative);

    // t_0 = 0, t_1 = -R_0 t_01, t_2 = alpha t_1
    let t1 = -(rots[0] * t01);
    let p0 = euclidean_camera(&rots[0], &Vector3::zeros());
    let p1 = euclidean_camera(&rots[1], &t1);
    let r2t = rots[2].transpose();
    let dir = r2t * rots[0] * t01;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0usize;
    for tr in tracks.iter().filter_map(|t| t.restrict(&views)) {
        let Ok(x) = triangulate_dlt(&[p0, p1], &tr.points[..2]) else {
            continue;
        };
        let xs = skew(&tr.points[2].normalize());
        let a = xs * (r2t * x.xyz());
        let b = xs * (dir * x[3]);
        num += b.dot(&a);
        den += b.norm_squared();
        used += 1;
    }
    if used == 0 || den <= 1e-24 * used as f64 {
        return Err(Error::InsufficientTracks(format!(
            "{used} usable 3-view tracks for the collinear position"
        )));
    }
    let alpha = -num / den;
    let p2 = euclidean_camera(&rots[2], &(t1 * alpha));
    Ok(TripletCameras {
        triplet_id,
        views,
        cameras: [p0, p1, p2],
        frame: Frame::Euclidean,
        free_parameter: FreeParameter::Alpha(alpha),
        cycle_residual: cycle,
        condition_residual: cert.orthogonality_residual,
    })
}

/// Canonical projective pair: the middle view at `[I | 0]`, the first view
/// at `[[e]_x F_01 | e]`, and the third view's base `[[e']_x F_12^T | 0]`
/// with its epipole `e'`.
/// Two canonical cameras, the third camera's left block and its epipole.
type ProjectiveBase = (Matrix3x4<f64>, Matrix3x4<f64>, Matrix3x4<f64>, Vector3<f64>);

fn projective_base(f01: &Matrix3<f64>, f12: &Matrix3<f64>) -> Result<ProjectiveBase> {
    let e0 = epipole(&BifocalTensor::from_estimate(*f01, TensorKind::Fundamental), EpipoleSide::Left)
        .map_err(|_| Error::DegenerateEpipole)?;
    let e2 = epipole(&BifocalTensor::from_estimate(*f12, TensorKind::Fundamental), EpipoleSide::Right)
        .map_err(|_| Error::DegenerateEpipole)?;
    let mut p0 = Matrix3x4::zeros();
    p0.fixed_view_mut::<3, 3>(0, 0).copy_from(&(skew(&e0) * f01));
    p0.set_column(3, &e0);
    let mut p1 = Matrix3x4::zeros();
    p1.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    let mut m2 = Matrix3x4::zeros();
    m2.fixed_view_mut::<3, 3>(0, 0).copy_from(&(skew(&e2) * f12.transpose()));
    Ok((p0, p1, m2, e2))
}

fn third_camera(m2: &Matrix3x4<f64>, e2: &Vector3<f64>, a: &Vector4<f64>) -> Matrix3x4<f64> {
    m2 + e2 * a.transpose()
}

/// Least squares `A a = b` with a rank check on `A`.
fn solve_checked(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vector4<f64>> {
    let (_, s, _) = svd_sorted(a);
    if s.len() < 4 || s[3] < 1e-10 * s[0] {
        return Err(Error::DegenerateEpipole);
    }
    let sol = a
        .clone()
        .svd(true, true)
        .solve(b, 0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Vector4::new(sol[0], sol[1], sol[2], sol[3]))
}

/// Uncalibrated collinear triplet: canonical cameras from `F_01` and
/// `F_12`, with the third camera's vector `a` from 3-view tracks, the point
/// triangulated from the first two views. Each track contributes one
/// independent constraint `a^T X = k` (its other equation is implied by
/// `F_12`), so four generic tracks are needed.
pub fn recover_projective_collinear_triplet(
    triplet_id: usize,
    views: [usize; 3],
    f01: &Matrix3<f64>,
    f12: &Matrix3<f64>,
    tracks: &[Track],
) -> Result<TripletCameras> {
    let (p0, p1, m2, e2) = projective_base(f01, f12)?;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut used = 0usize;
    for tr in tracks.iter().filter_map(|t| t.restrict(&views)) {
        let Ok(x) = triangulate_dlt(&[p0, p1], &tr.points[..2]) else {
            continue;
        };
        let xs = skew(&tr.points[2].normalize());
        let coef = xs * e2 * x.transpose();
        let r = -(xs * (m2 * x));
        for k in 0..3 {
            rows.push([coef[(k, 0)], coef[(k, 1)], coef[(k, 2)], coef[(k, 3)]]);
            rhs.push(r[k]);
        }
        used += 1;
    }
    if used < 4 {
        return Err(Error::InsufficientTracks(format!(
            "{used} usable 3-view tracks, need 4"
        )));
    }
    let a_mat = DMatrix::from_fn(rows.len(), 4, |r, c| rows[r][c]);
    let b = DMatrix::from_column_slice(rhs.len(), 1, &rhs);
    let a = solve_checked(&a_mat, &b)?;
    Ok(TripletCameras {
        triplet_id,
        views,
        cameras: [p0, p1, third_camera(&m2, &e2, &a)],
        frame: Frame::Projective,
        free_parameter: FreeParameter::A([a[0], a[1], a[2], a[3]]),
        cycle_residual: 0.0,
        condition_residual: 0.0,
    })
}

/// Uncalibrated triplet in general position: canonical cameras from `F_01`
/// and `F_12`, with `a` fixed by requiring `P_0^T F_02 P_2` to be
/// skew-symmetric.
pub fn recover_projective_general_triplet(triplet_id: usize, views: [usize; 3], f: &DMatrix<f64>) -> Result<TripletCameras> {
    check_square9(f)?;
    let f01 = block3(f, 0, 1);
    let f12 = block3(f, 1, 2);
    let f02 = block3(f, 0, 2);
    let (p0, p1, m2, e2) = projective_base(&f01, &f12)?;
    let c: Matrix4<f64> = p0.transpose() * f02 * m2;
    let u: Vector4<f64> = p0.transpose() * f02 * e2;
    // (C + C^T)_ij + u_i a_j + u_j a_i = 0 for i <= j
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..4 {
        for j in i..4 {
            let mut row = [0.0; 4];
            row[j] += u[i];
            row[i] += u[j];
            rows.push(row);
            rhs.push(-(c[(i, j)] + c[(j, i)]));
        }
    }
    let a_mat = DMatrix::from_fn(rows.len(), 4, |r, cc| rows[r][cc]);
    let b = DMatrix::from_column_slice(rhs.len(), 1, &rhs);
    let a = solve_checked(&a_mat, &b)?;
    Ok(TripletCameras {
        triplet_id,
        views,
        cameras: [p0, p1, third_camera(&m2, &e2, &a)],
        frame: Frame::Projective,
        free_parameter: FreeParameter::A([a[0], a[1], a[2], a[3]]),
        cycle_residual: 0.0,
        condition_residual: 0.0,
    })
}

/// Counts tracks triangulating in front of every observing camera of the
/// triplet, plus virtual centers seen in front of the real cameras.
fn cheirality_score(cams: &[Matrix3x4<f64>; 3], views: &[usize; 3], is_virtual: &[bool; 3], tracks: &[Track]) -> usize {
    let real: Vec<usize> = (0..3).filter(|&k| !is_virtual[k]).collect();
    let mut score = 0;
    for tr in tracks {
        let mut ps = Vec::new();
        let mut xs = Vec::new();
        for &k in &real {
            if let Some(x) = tr.point_in(views[k]) {
                ps.push(cams[k]);
                xs.push(*x);
            }
        }
        if ps.len() < 2 {
            continue;
        }
        let Ok(x) = triangulate_dlt(&ps, &xs) else {
            continue;
        };
        if ps.iter().all(|p| (p * x)[2] * x[3] > 0.0) {
            score += 1;
        }
    }
    for v in (0..3).filter(|&k| is_virtual[k]) {
        let (_, c) = pose_of(&cams[v]);
        let ch = c.push(1.0);
        if real.iter().all(|&k| (cams[k] * ch)[2] > 0.0) {
            score += 1;
        }
    }
    score
}

/// Calibrated triplet in general position: rotations from the block-rotation
/// factor of the rank-6 certificate, baselines from the blocks at their
/// joint scale, and the overall sign by cheirality.
///
/// Virtual cameras have no tracks; their centers must instead lie in front
/// of the real cameras.
pub fn recover_calibrated_general_triplet(
    triplet_id: usize,
    views: [usize; 3],
    e: &DMatrix<f64>,
    is_virtual: [bool; 3],
    tracks: &[Track],
    cfg: &RecoveryConfig,
) -> Result<TripletCameras> {
    check_square9(e)?;
    let cert = certify_general_dense(
        e,
        TensorKind::Essential,
        CertTolerances {
            rank_tol: cfg.rank_tol,
            residual_tol: cfg.pairing_tol,
        },
    );
    let pairing = pairing_residual(&cert.eigenvalues, 3);
    if cert.rank_estimate != 6 || cert.signature != (3, 3) || !(pairing < cfg.pairing_tol) {
        return Err(Error::InconsistentInput(format!(
            "rank {} signature {:?} pairing residual {pairing:.3e}",
            cert.rank_estimate, cert.signature
        )));
    }
    let blocks = cert
        .block_rotations()
        .ok_or_else(|| Error::InconsistentInput("no block-rotation factor".into()))?;
    let rots: Vec<Matrix3<f64>> = blocks.iter().map(|b| blocks[0] * b.transpose()).collect();
    // [R_a^T d_ab]_x = E_ab R_b^T R_a with d_ab = t_a - t_b
    let mut d = [Vector3::zeros(); 3];
    for (s, &(a, b)) in PAIRS.iter().enumerate() {
        let m = block3(e, a, b) * rots[b].transpose() * rots[a];
        d[s] = rots[a] * vee(&m);
    }
    let t1 = ((d[2] - d[0]) * 2.0 - d[1] - d[2]) / 3.0;
    let t2 = ((d[2] - d[0]) - (d[1] + d[2]) * 2.0) / 3.0;
    let candidates = [1.0, -1.0].map(|sign| {
        [
            euclidean_camera(&rots[0], &Vector3::zeros()),
            euclidean_camera(&rots[1], &(t1 * sign)),
            euclidean_camera(&rots[2], &(t2 * sign)),
        ]
    });
    let scores = candidates
        .map(|c| cheirality_score(&c, &views, &is_virtual, tracks));
    if scores[0] == scores[1] {
        return Err(Error::AmbiguousCheirality);
    }
    let best = if scores[0] > scores[1] { 0 } else { 1 };
    Ok(TripletCameras {
        triplet_id,
        views,
        cameras: candidates[best],
        frame: Frame::Euclidean,
        free_parameter: FreeParameter::None,
        // rotations come from one factorization and are cycle consistent
        cycle_residual: 0.0,
        condition_residual: cert.block_rotation_residual,
    })
}

/// All cameras in one frame after traversing the cover.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub frame: Frame,
    /// Indexed by camera id; `None` for ids not covered.
    pub cameras: Vec<Option<Matrix3x4<f64>>>,
    /// Largest disagreement between repeated estimates of a camera: center
    /// distance (Euclidean) or normalized matrix distance (projective).
    pub max_revisit_residual: f64,
}

impl Registration {
    /// Rotations and centers of Euclidean cameras.
    pub fn poses(&self) -> Vec<Option<(Matrix3<f64>, Vector3<f64>)>> {
        self.cameras.iter().map(|c| c.as_ref().map(pose_of)).collect()
    }
}

/// `s Q x + b` applied to a camera pose.
struct Sim {
    s: f64,
    q: Matrix3<f64>,
    b: Vector3<f64>,
}

fn euclidean_alignment(child: &[(Matrix3<f64>, Vector3<f64>)], global: &[(Matrix3<f64>, Vector3<f64>)]) -> Result<Sim> {
    let mut acc = Matrix3::zeros();
    for ((rc, _), (rg, _)) in child.iter().zip(global) {
        acc += rg * rc.transpose();
    }
    let q = nearest_rotation(&acc);
    let m = child.len() as f64;
    let cc = child.iter().map(|p| p.1).sum::<Vector3<f64>>() / m;
    let cg = global.iter().map(|p| p.1).sum::<Vector3<f64>>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut size = 0.0_f64;
    for ((_, tc), (_, tg)) in child.iter().zip(global) {
        let dc = q * (tc - cc);
        num += dc.dot(&(tg - cg));
        den += dc.norm_squared();
        size = size.max(tc.norm());
    }
    let ratio = den.sqrt() / size.max(1e-300);
    if !(ratio >= 1e-10) {
        return Err(Error::AlignmentIllConditioned(ratio));
    }
    let s = num / den;
    Ok(Sim { s, q, b: cg - q * cc * s })
}

fn normalized(p: &Matrix3x4<f64>) -> Matrix3x4<f64> {
    p / p.norm()
}

fn sign_invariant_distance(a: &Matrix3x4<f64>, b: &Matrix3x4<f64>) -> f64 {
    let (a, b) = (normalized(a), normalized(b));
    (a - b).norm().min((a + b).norm())
}

/// `H` with `P_child H ~ P_global` for every shared camera.
fn projective_alignment(child: &[Matrix3x4<f64>], global: &[Matrix3x4<f64>]) -> Result<Matrix4<f64>> {
    let m = child.len();
    let cols = 16 + m;
    let mut a = DMatrix::zeros(12 * m, cols);
    for (k, (pc, pg)) in child.iter().zip(global).enumerate() {
        let pc = normalized(pc);
        let pg = normalized(pg);
        for r in 0..3 {
            for c in 0..4 {
                let row = 12 * k + 4 * r + c;
                for j in 0..4 {
                    a[(row, 4 * j + c)] = pc[(r, j)];
                }
                a[(row, 16 + k)] = -pg[(r, c)];
            }
        }
    }
    let (_, s, v) = svd_sorted(&a);
    let ratio = s[cols - 2] / s[0];
    if !(ratio >= 1e-10) {
        return Err(Error::AlignmentIllConditioned(ratio));
    }
    let h = v.column(cols - 1);
    let mut out = Matrix4::from_fn(|r, c| h[4 * r + c]);
    if h.rows(16, m).sum() < 0.0 {
        out.neg_mut();
    }
    Ok(out)
}

/// Brings every triplet into the frame of the lowest-id triplet by a BFS over
/// the cover. Euclidean cameras seen repeatedly are merged by the chordal
/// mean of rotations and the mean of centers; projective cameras keep their
/// first estimate.
pub fn register_global(triplets: &[TripletCameras], cover: &TripletCover, frame: Frame) -> Result<Registration> {
    if triplets.len() != cover.len() {
        return Err(Error::InvalidArgument(format!(
            "{} triplet recoveries for {} cover triplets",
            triplets.len(),
            cover.len()
        )));
    }
    for (k, t) in triplets.iter().enumerate() {
        let mut sorted = t.views;
        sorted.sort_unstable();
        let mut expect = cover.triplets[k];
        expect.sort_unstable();
        if t.triplet_id != k || sorted != expect {
            return Err(Error::InvalidArgument(format!("recovery {k} does not match cover triplet {k}")));
        }
        if t.frame != frame {
            return Err(Error::InvalidArgument(format!("recovery {k} is not in a {frame:?} frame")));
        }
    }
    let n = cover.num_cameras();
    let order = cover.bfs_order()?;
    let mut first: Vec<Option<Matrix3x4<f64>>> = vec![None; n];
    let mut all: Vec<Vec<Matrix3x4<f64>>> = vec![Vec::new(); n];
    let mut revisit: f64 = 0.0;
    for (k, _) in order {
        let tc = &triplets[k];
        let shared: Vec<usize> = (0..3).filter(|&s| first[tc.views[s]].is_some()).collect();
        let placed: [Matrix3x4<f64>; 3] = if shared.is_empty() {
            tc.cameras
        } else {
            if shared.len() < 2 {
                return Err(Error::NotConnected);
            }
            match frame {
                Frame::Euclidean => {
                    let child: Vec<_> = shared.iter().map(|&s| tc.pose(s)).collect();
                    let global: Vec<_> = shared
                        .iter()
                        .map(|&s| pose_of(first[tc.views[s]].as_ref().expect("shared")))
                        .collect();
                    let sim = euclidean_alignment(&child, &global)?;
                    std::array::from_fn(|s| {
                        let (r, t) = tc.pose(s);
                        euclidean_camera(&(sim.q * r), &(sim.q * t * sim.s + sim.b))
                    })
                }
                Frame::Projective => {
                    let child: Vec<_> = shared.iter().map(|&s| tc.cameras[s]).collect();
                    let global: Vec<_> = shared
                        .iter()
                        .map(|&s| first[tc.views[s]].expect("shared"))
                        .collect();
                    let h = projective_alignment(&child, &global)?;
                    std::array::from_fn(|s| normalized(&(tc.cameras[s] * h)))
                }
            }
        };
        for s in 0..3 {
            let v = tc.views[s];
            match first[v] {
                None => first[v] = Some(placed[s]),
                Some(p) => {
                    let r = match frame {
                        Frame::Euclidean => (pose_of(&p).1 - pose_of(&placed[s]).1).norm(),
                        Frame::Projective => sign_invariant_distance(&p, &placed[s]),
                    };
                    revisit = revisit.max(r);
                }
            }
            all[v].push(placed[s]);
        }
    }
    let cameras = match frame {
        Frame::Projective => first,
        Frame::Euclidean => all
            .iter()
            .map(|list| {
                if list.is_empty() {
                    return None;
                }
                let mut racc = Matrix3::zeros();
                let mut tacc = Vector3::zeros();
                for p in list {
                    let (r, t) = pose_of(p);
                    racc += r;
                    tacc += t;
                }
                Some(euclidean_camera(&nearest_rotation(&racc), &(tacc / list.len() as f64)))
            })
            .collect(),
    };
    Ok(Registration {
        frame,
        cameras,
        max_revisit_residual: revisit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::CameraModel;
    use crate::graph::sequential_cover;
    use crate::linalg::rotation_from_axis_angle;
    use crate::metrics::{align_similarity, mean_reprojection_error};
    use crate::nview::NViewBifocal;
    use crate::synth::{generate, IntrinsicsMode, Layout};

    fn collinear_cams(spacing: [f64; 3], calibrated: bool) -> Vec<CameraModel> {
        let d = Vector3::new(0.6, 0.7, -0.2).normalize();
        let base = Vector3::new(0.5, -0.3, -8.0);
        let k = if calibrated {
            Matrix3::identity()
        } else {
            Matrix3::new(1.1, 0.01, 0.05, 0.0, 0.9, -0.04, 0.0, 0.0, 1.0)
        };
        (0..3)
            .map(|i| {
                let w = Vector3::new(0.05 * i as f64, -0.04 + 0.03 * i as f64, 0.02);
                CameraModel::new(k, rotation_from_axis_angle(&w), base + d * spacing[i]).unwrap()
            })
            .collect()
    }

    fn tracks_for(cams: &[CameraModel], count: usize) -> Vec<Track> {
        (0..count)
            .map(|k| {
                let a = k as f64;
                let x = Vector3::new(1.2 * (1.3 * a).sin(), 1.1 * (0.7 * a + 0.4).cos(), 0.8 * (0.9 * a).sin());
                Track::new((0..cams.len()).collect(), cams.iter().map(|c| c.project(&x)).collect()).unwrap()
            })
            .collect()
    }

    #[test]
    fn calibrated_collinear_round_trip() {
        let cams = collinear_cams([0.0, 1.0, 2.0], true);
        let e = NViewBifocal::from_cameras(&cams).unwrap().dense();
        let tracks = tracks_for(&cams, 10);
        let t = recover_calibrated_collinear_triplet(0, [0, 1, 2], &e, &tracks, &RecoveryConfig::default()).unwrap();
        let FreeParameter::Alpha(alpha) = t.free_parameter else { panic!() };
        assert!((alpha - 2.0).abs() < 1e-8, "{alpha}");
        assert!(t.cycle_residual < 1e-6);
        let est: Vec<_> = (0..3).map(|k| t.pose(k).1).collect();
        let gt: Vec<_> = cams.iter().map(|c| c.center).collect();
        let sim = align_similarity(&est, &gt).unwrap();
        assert!(sim.residuals.iter().all(|r| *r < 1e-8));
        // recovered tensors reproduce the input blocks up to positive scale
        let rec: Vec<CameraModel> = (0..3)
            .map(|k| {
                let (r, c) = t.pose(k);
                CameraModel::calibrated(nearest_rotation(&r), c).unwrap()
            })
            .collect();
        let e2 = NViewBifocal::from_cameras(&rec).unwrap();
        for &(a, b) in &PAIRS {
            let x = e2.block(a, b).unwrap().normalize();
            let y = block3(&e, a, b).normalize();
            assert!((x - y).norm() < 1e-8);
        }
    }

    #[test]
    fn calibrated_collinear_needs_tracks() {
        let cams = collinear_cams([0.0, 1.0, 2.5], true);
        let e = NViewBifocal::from_cameras(&cams).unwrap().dense();
        let pairs_only: Vec<Track> = tracks_for(&cams, 6)
            .iter()
            .flat_map(|t| PAIRS.map(|(a, b)| t.restrict(&[a, b]).unwrap()))
            .collect();
        let r = recover_calibrated_collinear_triplet(0, [0, 1, 2], &e, &pairs_only, &RecoveryConfig::default());
        assert!(matches!(r, Err(Error::InsufficientTracks(_))), "{r:?}");
    }

    #[test]
    fn calibrated_collinear_rejects_general_input() {
        let mut cams = collinear_cams([0.0, 1.0, 2.0], true);
        cams[2].center += Vector3::new(0.0, 0.0, 1.0);
        let e = NViewBifocal::from_cameras(&cams).unwrap().dense();
        let r = recover_calibrated_collinear_triplet(0, [0, 1, 2], &e, &tracks_for(&cams, 6), &RecoveryConfig::default());
        assert!(matches!(r, Err(Error::InconsistentInput(_))));
    }

    #[test]
    fn projective_collinear_reprojects() {
        let cams = collinear_cams([0.0, 1.3, 2.1], false);
        let f = NViewBifocal::from_cameras(&cams).unwrap();
        let tracks = tracks_for(&cams, 8);
        let t = recover_projective_collinear_triplet(
            0,
            [0, 1, 2],
            &f.block(0, 1).unwrap(),
            &f.block(1, 2).unwrap(),
            &tracks,
        )
        .unwrap();
        let stats = mean_reprojection_error(&t.cameras.map(Some), &tracks);
        assert!(stats.mean < 1e-8, "{stats:?}");

        // four tracks determine a; more tracks do not move it
        let four = recover_projective_collinear_triplet(
            0,
            [0, 1, 2],
            &f.block(0, 1).unwrap(),
            &f.block(1, 2).unwrap(),
            &tracks[..4],
        )
        .unwrap();
        let (FreeParameter::A(a), FreeParameter::A(b)) = (t.free_parameter, four.free_parameter) else {
            panic!()
        };
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn projective_collinear_degenerate_tracks() {
        let cams = collinear_cams([0.0, 1.0, 2.0], false);
        let f = NViewBifocal::from_cameras(&cams).unwrap();
        // points on the camera line project to the epipoles
        let d = cams[1].center - cams[0].center;
        let tracks: Vec<Track> = [3.0, 4.0, 5.5]
            .iter()
            .map(|s| {
                let x = cams[0].center + d * *s;
                Track::new(vec![0, 1, 2], cams.iter().map(|c| c.project(&x)).collect()).unwrap()
            })
            .collect();
        let r = recover_projective_collinear_triplet(0, [0, 1, 2], &f.block(0, 1).unwrap(), &f.block(1, 2).unwrap(), &tracks);
        assert!(matches!(r, Err(Error::DegenerateEpipole) | Err(Error::InsufficientTracks(_))), "{r:?}");
    }

    #[test]
    fn general_triplets_round_trip() {
        let s = generate(Layout::General, 3, 12, 7, IntrinsicsMode::Calibrated).unwrap();
        let e = NViewBifocal::from_cameras(&s.cameras).unwrap().dense();
        let tracks = s.tracks().tracks;
        let t = recover_calibrated_general_triplet(0, [0, 1, 2], &e, [false; 3], &tracks, &RecoveryConfig::default())
            .unwrap();
        let est: Vec<_> = (0..3).map(|k| t.pose(k).1).collect();
        let sim = align_similarity(&est, &s.centers()).unwrap();
        assert!(sim.residuals.iter().all(|r| *r < 1e-8), "{:?}", sim.residuals);
        assert!(sim.scale > 0.0);

        let s = generate(Layout::General, 3, 12, 8, IntrinsicsMode::Varied).unwrap();
        let f = NViewBifocal::from_cameras(&s.cameras).unwrap().dense();
        let t = recover_projective_general_triplet(0, [0, 1, 2], &f).unwrap();
        let stats = mean_reprojection_error(&t.cameras.map(Some), &s.tracks().tracks);
        assert!(stats.mean < 1e-8, "{stats:?}");
    }

    #[test]
    fn register_chain_of_collinear_triplets() {
        let s = generate(Layout::Collinear, 20, 30, 11, IntrinsicsMode::Calibrated).unwrap();
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        let cover = sequential_cover(20).unwrap();
        let tracks = s.tracks().tracks;
        let rec: Vec<TripletCameras> = cover
            .triplets
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let e = m.sub_matrix(t).unwrap();
                recover_calibrated_collinear_triplet(k, *t, &e, &tracks, &RecoveryConfig::default()).unwrap()
            })
            .collect();
        let reg = register_global(&rec, &cover, Frame::Euclidean).unwrap();
        let est: Vec<_> = reg.poses().iter().map(|p| p.unwrap().1).collect();
        let sim = align_similarity(&est, &s.centers()).unwrap();
        let mean = sim.residuals.iter().sum::<f64>() / 20.0;
        assert!(mean < 1e-7, "{mean}");
    }

    #[test]
    fn register_projective_chain() {
        let s = generate(Layout::Collinear, 6, 20, 12, IntrinsicsMode::Varied).unwrap();
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        let cover = sequential_cover(6).unwrap();
        let tracks = s.tracks().tracks;
        let rec: Vec<TripletCameras> = cover
            .triplets
            .iter()
            .enumerate()
            .map(|(k, t)| {
                recover_projective_collinear_triplet(
                    k,
                    *t,
                    &m.block(t[0], t[1]).unwrap(),
                    &m.block(t[1], t[2]).unwrap(),
                    &tracks,
                )
                .unwrap()
            })
            .collect();
        let reg = register_global(&rec, &cover, Frame::Projective).unwrap();
        let stats = mean_reprojection_error(&reg.cameras, &tracks);
        assert!(stats.mean < 1e-7, "{stats:?}");
    }

    #[test]
    fn single_triplet_identity_registration() {
        let cams = collinear_cams([0.0, 1.0, 2.0], true);
        let e = NViewBifocal::from_cameras(&cams).unwrap().dense();
        let t = recover_calibrated_collinear_triplet(0, [0, 1, 2], &e, &tracks_for(&cams, 6), &RecoveryConfig::default())
            .unwrap();
        let cover = TripletCover::from_triplets(vec![[0, 1, 2]]);
        let reg = register_global(std::slice::from_ref(&t), &cover, Frame::Euclidean).unwrap();
        for k in 0..3 {
            assert!((reg.cameras[k].unwrap() - t.cameras[k]).norm() < 1e-12);
        }
    }
}
