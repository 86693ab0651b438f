//! End-to-end reconstruction from measured pairwise tensors.
//!
//! R4 averages an all-collinear network directly in the rank-4 regime. VC
//! lifts collinear triplets with virtual cameras and averages in the rank-6
//! regime.

use nalgebra::{DMatrix, Matrix3, Matrix3x4};
use serde::{Deserialize, Serialize};

use crate::admm::{average, fit_triplet_scales, triplet_matrix, AdmmConfig, AveragingResult};
use crate::error::{Error, Result};
use crate::geom::{BifocalTensor, TensorKind, Track};
use crate::graph::{
    collinearity_score_tensors, heuristic_cover, insert_virtual_and_prune, sequential_cover, TripletCover,
    ViewingGraph, DEFAULT_COLLINEARITY_THRESHOLD,
};
use crate::linalg::block3;
use crate::nview::{NViewBifocal, Regime};
use crate::projection::project;
use crate::recovery::{
    recover_calibrated_collinear_triplet, recover_calibrated_general_triplet, recover_projective_collinear_triplet,
    recover_projective_general_triplet, register_global, Frame, RecoveryConfig, TripletCameras,
};
use crate::virtual_cam::{build_virtual_camera, VirtualCamera, DEFAULT_EPIPOLE_MARGIN, DEFAULT_SOURCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    R4,
    Vc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationRegime {
    Calibrated,
    Uncalibrated,
}

impl CalibrationRegime {
    pub fn of(kind: TensorKind) -> Self {
        match kind {
            TensorKind::Essential => Self::Calibrated,
            TensorKind::Fundamental => Self::Uncalibrated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverStrategy {
    /// Consecutive triplets `(i, i+1, i+2)` when those edges are measured,
    /// the greedy heuristic otherwise.
    Auto,
    Sequential,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    pub admm: AdmmConfig,
    pub recovery: RecoveryConfig,
    pub collinearity_threshold: f64,
    pub epipole_margin: f64,
    pub cover: CoverStrategy,
    /// When false each triplet is projected on its own without consensus,
    /// which gives the per-triplet reference error.
    pub consensus: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::R4,
            admm: AdmmConfig::default(),
            recovery: RecoveryConfig::default(),
            collinearity_threshold: DEFAULT_COLLINEARITY_THRESHOLD,
            epipole_margin: DEFAULT_EPIPOLE_MARGIN,
            cover: CoverStrategy::Auto,
            consensus: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Cover,
    Virtual,
    Average,
    Recover,
    Register,
}

/// A pipeline failure tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |source| StageError { stage, source }
}

/// Averaged tensors and the cover they were averaged over.
#[derive(Debug, Clone)]
pub struct Averaged {
    pub algorithm: Algorithm,
    pub n_real: usize,
    pub cover: TripletCover,
    pub virtual_cameras: Vec<VirtualCamera>,
    /// Blocks at the joint scale, including virtual views. Empty without
    /// consensus.
    pub consensus: NViewBifocal,
    /// The 9x9 matrix of each cover triplet handed to recovery.
    pub triplet_matrices: Vec<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub averaging: Option<AveragingResult>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub averaged: Averaged,
    pub triplets: Vec<TripletCameras>,
    pub frame: Frame,
    /// Real cameras only, indexed by camera id.
    pub cameras: Vec<Option<Matrix3x4<f64>>>,
}

fn measured_tensor(m: &NViewBifocal, a: usize, b: usize) -> Result<BifocalTensor> {
    let (i, j) = (a.min(b), a.max(b));
    let t = m.tensor(i, j).ok_or(Error::MissingBlock(i, j))?;
    Ok(if a < b { t.clone() } else { t.transpose() })
}

fn triplet_tensors(m: &NViewBifocal, t: &[usize; 3]) -> Result<[BifocalTensor; 3]> {
    Ok([
        measured_tensor(m, t[0], t[1])?,
        measured_tensor(m, t[0], t[2])?,
        measured_tensor(m, t[1], t[2])?,
    ])
}

/// Builds the triplet cover for the measured viewing graph.
pub fn build_cover(measured: &NViewBifocal, strategy: CoverStrategy) -> Result<TripletCover> {
    let n = measured.n;
    let graph = ViewingGraph::from_measurements(measured);
    let chain = n >= 3 && (0..n - 2).all(|i| graph.has_edge(i, i + 1) && graph.has_edge(i, i + 2));
    let cover = match strategy {
        CoverStrategy::Sequential => sequential_cover(n)?,
        CoverStrategy::Auto if chain => sequential_cover(n)?,
        _ => heuristic_cover(&graph)?,
    };
    if !cover.is_connected() {
        return Err(Error::NotConnected);
    }
    Ok(cover)
}

/// Collinearity score of each cover triplet from the measured tensors.
pub fn triplet_scores(measured: &NViewBifocal, cover: &TripletCover) -> Result<Vec<f64>> {
    cover
        .triplets
        .iter()
        .map(|t| {
            let [a, b, c] = triplet_tensors(measured, t)?;
            collinearity_score_tensors(&a, &b, &c)
        })
        .collect()
}

/// Measured blocks extended by the virtual cameras of every collinear
/// triplet, with the cover rewired through them.
fn insert_virtual(
    measured: &NViewBifocal,
    tracks: &[Track],
    cover: &TripletCover,
    cfg: &PipelineConfig,
) -> Result<(NViewBifocal, TripletCover, Vec<VirtualCamera>)> {
    let n = measured.n;
    let scores = triplet_scores(measured, cover)?;
    let lifted = insert_virtual_and_prune(cover, &scores, cfg.collinearity_threshold, n)?;
    let mut cams = Vec::with_capacity(lifted.virtual_nodes.len());
    for node in &lifted.virtual_nodes {
        let tensors = triplet_tensors(measured, &node.anchor)?;
        let recovered = match measured.kind {
            TensorKind::Essential => None,
            TensorKind::Fundamental => Some(
                recover_projective_collinear_triplet(
                    node.id,
                    node.anchor,
                    &tensors[0].matrix,
                    &tensors[2].matrix,
                    tracks,
                )?
                .cameras,
            ),
        };
        cams.push(build_virtual_camera(
            node.id,
            node.anchor,
            &tensors,
            tracks,
            recovered.as_ref(),
            DEFAULT_SOURCE,
            cfg.epipole_margin,
        )?);
    }
    let mut extended = NViewBifocal::empty(n + cams.len(), measured.kind);
    for (i, j) in measured.edges() {
        extended.insert_unchecked(i, j, measured.block(i, j).expect("listed edge"));
    }
    for vc in &cams {
        for (k, &a) in vc.anchor.iter().enumerate() {
            extended.insert_unchecked(a, vc.id, vc.tensors[k]);
        }
    }
    Ok((extended, lifted, cams))
}

/// Projects each triplet on its own, with its own scale fit, and stores the
/// result in a matrix indexed per triplet.
fn independent_projection(
    measured: &NViewBifocal,
    cover: &TripletCover,
    regime: Regime,
    rank_tol: f64,
) -> Result<Vec<DMatrix<f64>>> {
    cover
        .triplets
        .iter()
        .map(|t| {
            let blocks = [
                measured_tensor(measured, t[0], t[1])?.matrix,
                measured_tensor(measured, t[0], t[2])?.matrix,
                measured_tensor(measured, t[1], t[2])?.matrix,
            ];
            let (c, _) = fit_triplet_scales(&blocks, regime, rank_tol);
            let scaled: [Matrix3<f64>; 3] = [0, 1, 2].map(|k| blocks[k] * c[k]);
            Ok(project(regime, &triplet_matrix(&scaled), rank_tol).matrix)
        })
        .collect()
}

/// Cover, optional virtual cameras and averaging.
pub fn run_averaging(
    measured: &NViewBifocal,
    tracks: &[Track],
    cfg: &PipelineConfig,
) -> std::result::Result<Averaged, StageError> {
    cfg.admm.validate().map_err(at(Stage::Validate))?;
    let cover = build_cover(measured, cfg.cover).map_err(at(Stage::Cover))?;
    let (input, cover, virtual_cameras, collinear) = match cfg.algorithm {
        Algorithm::R4 => {
            let scores = triplet_scores(measured, &cover).map_err(at(Stage::Validate))?;
            if let Some(k) = scores.iter().position(|s| !(*s < cfg.collinearity_threshold)) {
                return Err(StageError {
                    stage: Stage::Validate,
                    source: Error::InvalidArgument(format!(
                        "R4 requires an all-collinear network; triplet {:?} scores {:.3e}",
                        cover.triplets[k], scores[k]
                    )),
                });
            }
            (measured.clone(), cover, Vec::new(), true)
        }
        Algorithm::Vc => {
            let (ext, lifted, vcs) =
                insert_virtual(measured, tracks, &cover, cfg).map_err(at(Stage::Virtual))?;
            (ext, lifted, vcs, false)
        }
    };
    let regime = Regime::new(collinear, measured.kind);
    if !cfg.consensus {
        let triplet_matrices = independent_projection(&input, &cover, regime, cfg.admm.rank_tol)
            .map_err(at(Stage::Average))?;
        return Ok(Averaged {
            algorithm: cfg.algorithm,
            n_real: measured.n,
            cover,
            virtual_cameras,
            consensus: NViewBifocal::empty(input.n, input.kind),
            triplet_matrices,
            converged: true,
            iterations: 0,
            averaging: None,
        });
    }
    let res = average(&input, &cover, regime, &cfg.admm).map_err(at(Stage::Average))?;
    let triplet_matrices = cover
        .triplets
        .iter()
        .map(|t| res.consensus.sub_matrix(t))
        .collect::<Result<Vec<_>>>()
        .map_err(at(Stage::Average))?;
    Ok(Averaged {
        algorithm: cfg.algorithm,
        n_real: measured.n,
        cover,
        virtual_cameras,
        consensus: res.consensus.clone(),
        triplet_matrices,
        converged: res.converged,
        iterations: res.iterations,
        averaging: Some(res),
    })
}

/// Per-triplet recovery and registration; virtual cameras are dropped.
pub fn run_recovery(
    averaged: &Averaged,
    kind: TensorKind,
    tracks: &[Track],
    cfg: &RecoveryConfig,
) -> std::result::Result<PipelineOutput, StageError> {
    let n = averaged.n_real;
    let frame = match kind {
        TensorKind::Essential => Frame::Euclidean,
        TensorKind::Fundamental => Frame::Projective,
    };
    let mut triplets = Vec::with_capacity(averaged.cover.len());
    for (id, (t, m)) in averaged.cover.triplets.iter().zip(&averaged.triplet_matrices).enumerate() {
        let views = *t;
        let rec = match (averaged.algorithm, kind) {
            (Algorithm::R4, TensorKind::Essential) => recover_calibrated_collinear_triplet(id, views, m, tracks, cfg),
            (Algorithm::R4, TensorKind::Fundamental) => {
                recover_projective_collinear_triplet(id, views, &block3(m, 0, 1), &block3(m, 1, 2), tracks)
            }
            (Algorithm::Vc, TensorKind::Essential) => {
                let is_virtual = views.map(|v| v >= n);
                recover_calibrated_general_triplet(id, views, m, is_virtual, tracks, cfg)
            }
            (Algorithm::Vc, TensorKind::Fundamental) => recover_projective_general_triplet(id, views, m),
        };
        triplets.push(rec.map_err(at(Stage::Recover))?);
    }
    let reg = register_global(&triplets, &averaged.cover, frame).map_err(at(Stage::Register))?;
    let mut cameras = reg.cameras;
    cameras.resize(n.max(cameras.len()), None);
    cameras.truncate(n);
    Ok(PipelineOutput {
        averaged: averaged.clone(),
        triplets,
        frame,
        cameras,
    })
}

/// Averaging followed by recovery.
pub fn run(
    measured: &NViewBifocal,
    tracks: &[Track],
    cfg: &PipelineConfig,
) -> std::result::Result<PipelineOutput, StageError> {
    let averaged = run_averaging(measured, tracks, cfg)?;
    run_recovery(&averaged, measured.kind, tracks, &cfg.recovery)
}
