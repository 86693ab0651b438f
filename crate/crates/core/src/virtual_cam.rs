//! Virtual cameras that lift collinear triplets into general position.
//!
//! A virtual camera sits at a scene point `X` seen in all three views of a
//! collinear triplet and borrows the orientation of one of them, the source
//! view `s`. Its tensor with a real view `i` is `F_iX ~ [x_i]_x V_is` where
//! `x_i` is the image of `X` in view `i` and `V_is` maps directions from the
//! source frame into view `i`.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    epipole, rotation_from_essential, skew, symmetric_epipolar_distance, BifocalTensor, EpipoleSide, TensorKind,
    Track,
};
use crate::nview::NViewBifocal;

/// Default minimum sine between an image point and an epipole.
pub const DEFAULT_EPIPOLE_MARGIN: f64 = 1e-2;
/// Default source view: the middle camera of the triplet.
pub const DEFAULT_SOURCE: usize = 1;
/// Below this sine the virtual center is treated as collinear with the pair.
pub const DEGENERACY_TOL: f64 = 1e-8;

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// A virtual camera attached to an anchor triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualCamera {
    pub id: usize,
    pub anchor: [usize; 3],
    /// Index of the selected track in the caller's track list.
    pub track_index: usize,
    /// Images of the virtual center in the anchor views.
    pub points: [Vector3<f64>; 3],
    /// Local index of the view lending its orientation.
    pub source: usize,
    /// Unit-norm tensors between anchor view `k` and the virtual camera.
    pub tensors: [Matrix3<f64>; 3],
}

fn sine(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.cross(b).norm() / (na * nb)).min(1.0)
}

fn pair_slot(a: usize, b: usize) -> usize {
    PAIRS
        .iter()
        .position(|&p| p == (a.min(b), a.max(b)))
        .expect("distinct local indices below 3")
}

/// Epipole in local view `i` of the center of local view `j`.
fn epipole_in(tensors: &[BifocalTensor; 3], i: usize, j: usize) -> Result<Vector3<f64>> {
    let side = if i < j { EpipoleSide::Left } else { EpipoleSide::Right };
    epipole(&tensors[pair_slot(i, j)], side)
}

/// Picks the 3-view track whose images stay away from every epipole and
/// whose summed symmetric epipolar distance is smallest. Ties keep the
/// lowest index.
///
/// `tensors` relate the local pairs `(0,1)`, `(0,2)` and `(1,2)` of `views`.
/// Distance to an epipole is the sine of the angle between the homogeneous
/// vectors. Returns the index into `tracks`.
pub fn select_virtual_point(
    tracks: &[Track],
    views: [usize; 3],
    tensors: &[BifocalTensor; 3],
    epipole_margin: f64,
) -> Result<usize> {
    let mut epipoles = Vec::with_capacity(6);
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            epipoles.push((i, epipole_in(tensors, i, j)?));
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, tr) in tracks.iter().enumerate() {
        let Some(local) = tr.restrict(&views) else {
            continue;
        };
        if local.points.len() != 3 {
            continue;
        }
        let x = &local.points;
        if epipoles.iter().any(|(i, e)| sine(&x[*i], e) < epipole_margin) {
            continue;
        }
        let mut cost = 0.0;
        let mut ok = true;
        for (s, &(a, b)) in PAIRS.iter().enumerate() {
            match symmetric_epipolar_distance(&tensors[s], &x[a], &x[b]) {
                Ok(d) => cost += d,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && best.is_none_or(|(_, c)| cost < c) {
            best = Some((idx, cost));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoValidPoint)
}

/// `V_is` for each local view from cameras in a common frame, given as
/// `M_i M_s^{-1}` with `M` the left 3x3 block of each camera.
///
/// For Euclidean cameras this is `R_i^T R_s`. For projective cameras it is
/// the homography through the plane at infinity of that frame.
pub fn orientations_from_cameras(cams: &[Matrix3x4<f64>; 3], source: usize) -> Result<[Matrix3<f64>; 3]> {
    check_source(source)?;
    let ms = cams[source].fixed_view::<3, 3>(0, 0).into_owned();
    let inv = ms
        .try_inverse()
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::DegenerateVirtualPoint("source camera has a singular left block".into()))?;
    Ok([0, 1, 2].map(|i| cams[i].fixed_view::<3, 3>(0, 0) * inv))
}

/// Orientations for uncalibrated triplets, which need the recovered
/// projective cameras of the anchor.
pub fn projective_orientations(cams: Option<&[Matrix3x4<f64>; 3]>, source: usize) -> Result<[Matrix3<f64>; 3]> {
    let cams = cams.ok_or(Error::MissingRecovery)?;
    orientations_from_cameras(cams, source)
}

/// `R_i^T R_s` for each local view from measured essential matrices, with
/// each relative rotation chosen by cheirality on the pair's tracks.
pub fn calibrated_orientations(
    tensors: &[BifocalTensor; 3],
    views: [usize; 3],
    tracks: &[Track],
    source: usize,
) -> Result<[Matrix3<f64>; 3]> {
    check_source(source)?;
    let mut out = [Matrix3::identity(); 3];
    for i in (0..3).filter(|&i| i != source) {
        let (a, b) = (i.min(source), i.max(source));
        let pair: Vec<Track> = tracks.iter().filter_map(|t| t.restrict(&[views[a], views[b]])).collect();
        let pose = rotation_from_essential(&tensors[pair_slot(a, b)], &pair).map_err(|e| match e {
            Error::AmbiguousCheirality => Error::RotationAmbiguity,
            other => other,
        })?;
        // pose.rotation is R_a^T R_b
        out[i] = if i == a { pose.rotation } else { pose.rotation.transpose() };
    }
    Ok(out)
}

fn check_source(source: usize) -> Result<()> {
    if source > 2 {
        return Err(Error::InvalidArgument(format!("source view {source} is not a local index")));
    }
    Ok(())
}

/// Unit-norm `[x_i]_x V_is` for the three anchor views.
///
/// Rejects a virtual center that is collinear with a real view and the
/// source view, which shows up as `x_i` coinciding with the epipole of the
/// source in view `i`.
pub fn virtual_bifocals(
    tensors: &[BifocalTensor; 3],
    orientations: &[Matrix3<f64>; 3],
    points: &[Vector3<f64>; 3],
    source: usize,
) -> Result<[Matrix3<f64>; 3]> {
    check_source(source)?;
    let mut out = [Matrix3::zeros(); 3];
    for i in 0..3 {
        if i != source {
            let e = epipole_in(tensors, i, source)?;
            let s = sine(&points[i], &e);
            if s < DEGENERACY_TOL {
                return Err(Error::DegenerateVirtualPoint(format!(
                    "image in view {i} lies on the epipole of the source (sine {s:.3e})"
                )));
            }
        }
        let f = skew(&points[i]) * orientations[i];
        let sv = crate::linalg::singular_values3(&f);
        if sv[0] == 0.0 || sv[1] < DEGENERACY_TOL * sv[0] {
            return Err(Error::DegenerateVirtualPoint(format!("tensor for view {i} is nearly rank 1")));
        }
        out[i] = f / f.norm();
    }
    Ok(out)
}

/// The 12x12 matrix of an anchor triplet and its virtual camera, with the
/// virtual camera as view 3. `real` holds the `(0,1)`, `(0,2)` and `(1,2)`
/// blocks and `virt[k]` the block between view `k` and the virtual camera.
pub fn four_view_matrix(real: &[Matrix3<f64>; 3], virt: &[Matrix3<f64>; 3], kind: TensorKind) -> Result<NViewBifocal> {
    let mut blocks: Vec<(usize, usize, Matrix3<f64>)> = PAIRS.iter().zip(real).map(|(&(a, b), m)| (a, b, *m)).collect();
    for (k, m) in virt.iter().enumerate() {
        blocks.push((k, 3, *m));
    }
    NViewBifocal::assemble(4, kind, blocks)
}

/// Builds a virtual camera for an anchor triplet from its measured tensors.
///
/// Calibrated anchors take their orientations from the essential matrices.
/// Uncalibrated anchors need `recovered`, the anchor's projective cameras.
#[allow(clippy::too_many_arguments)]
pub fn build_virtual_camera(
    id: usize,
    anchor: [usize; 3],
    tensors: &[BifocalTensor; 3],
    tracks: &[Track],
    recovered: Option<&[Matrix3x4<f64>; 3]>,
    source: usize,
    epipole_margin: f64,
) -> Result<VirtualCamera> {
    let track_index = select_virtual_point(tracks, anchor, tensors, epipole_margin)?;
    let local = tracks[track_index].restrict(&anchor).expect("selected track sees the anchor");
    let points = [local.points[0], local.points[1], local.points[2]];
    let orientations = match tensors[0].kind {
        TensorKind::Essential => calibrated_orientations(tensors, anchor, tracks, source)?,
        TensorKind::Fundamental => projective_orientations(recovered, source)?,
    };
    let tensors = virtual_bifocals(tensors, &orientations, &points, source)?;
    Ok(VirtualCamera {
        id,
        anchor,
        track_index,
        points,
        source,
        tensors,
    })
}
