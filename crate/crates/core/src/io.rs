//! JSON file formats and the evaluation report.
//!
//! Matrices are stored row-major as flat float arrays.

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CameraModel, TensorKind, Track};
use crate::graph::TripletCover;
use crate::metrics::{align_similarity, mean, mean_reprojection_error, median};
use crate::nview::NViewBifocal;
use crate::pipeline::{Algorithm, Averaged, CalibrationRegime};
use crate::recovery::Frame;
use crate::synth::{Layout, Scene, TrackSet};
use crate::virtual_cam::VirtualCamera;

fn m3_to_row(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|k| m[(k / 3, k % 3)])
}

fn m3_from_row(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

fn m34_to_row(m: &Matrix3x4<f64>) -> [f64; 12] {
    std::array::from_fn(|k| m[(k / 4, k % 4)])
}

fn m34_from_row(v: &[f64; 12]) -> Matrix3x4<f64> {
    Matrix3x4::from_row_slice(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub cameras: Vec<CameraJson>,
    pub points: Vec<[f64; 3]>,
    pub layout: Layout,
    pub seed: u64,
}

impl SceneJson {
    pub fn from_scene(s: &Scene) -> Self {
        Self {
            cameras: s
                .cameras
                .iter()
                .map(|c| CameraJson {
                    k: m3_to_row(&c.intrinsics),
                    r: m3_to_row(&c.rotation),
                    t: c.center.into(),
                })
                .collect(),
            points: s.points.iter().map(|p| (*p).into()).collect(),
            layout: s.layout,
            seed: s.seed,
        }
    }

    pub fn to_scene(&self) -> Result<Scene> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| CameraModel::new(m3_from_row(&c.k), m3_from_row(&c.r), Vector3::from(c.t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            cameras,
            points: self.points.iter().map(|p| Vector3::from(*p)).collect(),
            layout: self.layout,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackJson {
    pub view_ids: Vec<usize>,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementsJson {
    pub n: usize,
    pub kind: TensorKind,
    /// `[i, j, f00, f01, ..., f22]` with `i < j`.
    pub edges: Vec<(usize, usize, [f64; 9])>,
    pub tracks: Vec<TrackJson>,
}

fn edges_of(m: &NViewBifocal) -> Vec<(usize, usize, [f64; 9])> {
    m.edges()
        .into_iter()
        .map(|(i, j)| (i, j, m3_to_row(&m.block(i, j).expect("listed edge"))))
        .collect()
}

fn bifocal_of(n: usize, kind: TensorKind, edges: &[(usize, usize, [f64; 9])]) -> Result<NViewBifocal> {
    NViewBifocal::assemble(n, kind, edges.iter().map(|(i, j, v)| (*i, *j, m3_from_row(v))).collect())
}

impl MeasurementsJson {
    pub fn new(m: &NViewBifocal, tracks: &[Track]) -> Self {
        Self {
            n: m.n,
            kind: m.kind,
            edges: edges_of(m),
            tracks: tracks
                .iter()
                .map(|t| TrackJson {
                    view_ids: t.view_ids.clone(),
                    points: t.points.iter().map(|p| (*p).into()).collect(),
                })
                .collect(),
        }
    }

    pub fn bifocal(&self) -> Result<NViewBifocal> {
        bifocal_of(self.n, self.kind, &self.edges)
    }

    pub fn tracks(&self) -> Result<Vec<Track>> {
        self.tracks
            .iter()
            .map(|t| Track::new(t.view_ids.clone(), t.points.iter().map(|p| Vector3::from(*p)).collect()))
            .collect()
    }

    pub fn track_set(&self) -> Result<TrackSet> {
        Ok(TrackSet { tracks: self.tracks()? })
    }
}

/// Output of the averaging stage, enough to rerun recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedJson {
    pub algorithm: Algorithm,
    pub n_real: usize,
    pub kind: TensorKind,
    pub cover: TripletCover,
    pub virtual_cameras: Vec<VirtualCamera>,
    /// Per cover triplet: the `(0,1)`, `(0,2)` and `(1,2)` blocks handed to
    /// recovery.
    pub triplet_blocks: Vec<[[f64; 9]; 3]>,
    pub converged: bool,
    pub iterations: usize,
}

impl AveragedJson {
    pub fn new(a: &Averaged, kind: TensorKind) -> Self {
        let triplet_blocks = a
            .triplet_matrices
            .iter()
            .map(|m| [(0, 1), (0, 2), (1, 2)].map(|(x, y)| m3_to_row(&crate::linalg::block3(m, x, y))))
            .collect();
        Self {
            algorithm: a.algorithm,
            n_real: a.n_real,
            kind,
            cover: a.cover.clone(),
            virtual_cameras: a.virtual_cameras.clone(),
            triplet_blocks,
            converged: a.converged,
            iterations: a.iterations,
        }
    }

    pub fn to_averaged(&self) -> Result<Averaged> {
        if self.triplet_blocks.len() != self.cover.len() {
            return Err(Error::InvalidArgument(format!(
                "{} block triples for {} cover triplets",
                self.triplet_blocks.len(),
                self.cover.len()
            )));
        }
        let triplet_matrices = self
            .triplet_blocks
            .iter()
            .map(|b| crate::admm::triplet_matrix(&[0, 1, 2].map(|k| m3_from_row(&b[k]))))
            .collect();
        let total = self.n_real + self.virtual_cameras.len();
        Ok(Averaged {
            algorithm: self.algorithm,
            n_real: self.n_real,
            cover: self.cover.clone(),
            virtual_cameras: self.virtual_cameras.clone(),
            consensus: NViewBifocal::empty(total, self.kind),
            triplet_matrices,
            converged: self.converged,
            iterations: self.iterations,
            averaging: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamerasJson {
    pub frame: Frame,
    /// Row-major 3x4 projection per camera id; `null` when not reconstructed.
    pub cameras: Vec<Option<[f64; 12]>>,
}

impl CamerasJson {
    pub fn new(frame: Frame, cams: &[Option<Matrix3x4<f64>>]) -> Self {
        Self {
            frame,
            cameras: cams.iter().map(|c| c.as_ref().map(m34_to_row)).collect(),
        }
    }

    pub fn matrices(&self) -> Vec<Option<Matrix3x4<f64>>> {
        self.cameras.iter().map(|c| c.as_ref().map(m34_from_row)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: Option<Algorithm>,
    pub regime: CalibrationRegime,
    pub n_cameras: usize,
    pub n_reconstructed: usize,
    /// After similarity alignment; `null` for projective reconstructions.
    pub mean_position_error: Option<f64>,
    pub median_position_error: Option<f64>,
    /// Rotation about the camera line is not fixed by the centers.
    pub line_gauge_free: Option<bool>,
    pub mean_reprojection_error: f64,
    pub median_reprojection_error: f64,
    pub reprojection_observations: usize,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    /// Wall time; `null` unless timing was requested.
    pub runtime_seconds: Option<f64>,
}

/// Metrics of reconstructed cameras. Position errors need a Euclidean frame
/// and the ground-truth scene.
pub fn evaluate(
    cams: &[Option<Matrix3x4<f64>>],
    frame: Frame,
    kind: TensorKind,
    scene: Option<&Scene>,
    tracks: &[Track],
) -> Result<EvalReport> {
    let n_reconstructed = cams.iter().filter(|c| c.is_some()).count();
    let (mut mean_pos, mut median_pos, mut gauge) = (None, None, None);
    if let (Frame::Euclidean, Some(scene)) = (frame, scene) {
        if scene.cameras.len() != cams.len() {
            return Err(Error::InvalidArgument(format!(
                "{} reconstructed cameras for a {}-camera scene",
                cams.len(),
                scene.cameras.len()
            )));
        }
        let mut est = Vec::new();
        let mut gt = Vec::new();
        for (c, truth) in cams.iter().zip(&scene.cameras) {
            if let Some(p) = c {
                est.push(crate::recovery::pose_of(p).1);
                gt.push(truth.center);
            }
        }
        let sim = align_similarity(&est, &gt)?;
        mean_pos = Some(mean(&sim.residuals));
        median_pos = Some(median(&sim.residuals));
        gauge = Some(sim.line_gauge_free);
    }
    let rep = mean_reprojection_error(cams, tracks);
    Ok(EvalReport {
        algorithm: None,
        regime: CalibrationRegime::of(kind),
        n_cameras: cams.len(),
        n_reconstructed,
        mean_position_error: mean_pos,
        median_position_error: median_pos,
        line_gauge_free: gauge,
        mean_reprojection_error: rep.mean,
        median_reprojection_error: rep.median,
        reprojection_observations: rep.observations,
        converged: None,
        iterations: None,
        runtime_seconds: None,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, measure, IntrinsicsMode, NoiseConfig};

    #[test]
    fn scene_round_trip_is_row_major() {
        let s = generate(Layout::General, 4, 6, 3, IntrinsicsMode::Varied).unwrap();
        let j = SceneJson::from_scene(&s);
        assert_eq!(j.cameras[0].k[1], s.cameras[0].intrinsics[(0, 1)]);
        assert_eq!(j.cameras[0].r[3], s.cameras[0].rotation[(1, 0)]);
        let text = serde_json::to_string(&j).unwrap();
        let back: SceneJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_scene().unwrap(), s);
    }

    #[test]
    fn measurements_round_trip() {
        let s = generate(Layout::Collinear, 5, 6, 4, IntrinsicsMode::Calibrated).unwrap();
        let (m, tr) = measure(&s, &NoiseConfig::default(), 1).unwrap();
        let j = MeasurementsJson::new(&m, &tr.tracks);
        let back: MeasurementsJson = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
        let m2 = back.bifocal().unwrap();
        assert_eq!(m2.edges(), m.edges());
        for (i, jx) in m.edges() {
            assert_eq!(m2.block(i, jx), m.block(i, jx));
        }
        assert_eq!(back.tracks().unwrap(), tr.tracks);
        assert_eq!(j.edges[0].2[1], m.block(0, 1).unwrap()[(0, 1)]);
    }

    #[test]
    fn cameras_round_trip() {
        let p = Matrix3x4::from_fn(|r, c| (r * 4 + c) as f64);
        let j = CamerasJson::new(Frame::Projective, &[Some(p), None]);
        assert_eq!(j.cameras[0].unwrap()[4], 4.0);
        assert_eq!(j.matrices(), vec![Some(p), None]);
    }
}
