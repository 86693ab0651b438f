//! Python bindings. Scenes, measurements, cameras and reports cross the
//! boundary as the same JSON documents the command line tool reads and writes.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bifocal_avg::io::{evaluate, CamerasJson, EvalReport, MeasurementsJson, SceneJson};
use bifocal_avg::pipeline::{run_averaging, run_recovery, Algorithm, CalibrationRegime, PipelineConfig, StageError};
use bifocal_avg::synth::{generate, measure as measure_scene, IntrinsicsMode, Layout, NoiseConfig};
use bifocal_avg::Error;

create_exception!(pybifocal, NoConvergenceError, PyRuntimeError, "Averaging did not converge.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } => NoConvergenceError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn stage_to_py(e: StageError) -> PyErr {
    let msg = e.to_string();
    match e.source {
        Error::NoConvergence { .. } => NoConvergenceError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(json_err)
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(json_err)
}

/// Generate a synthetic scene and return it as JSON.
#[pyfunction]
#[pyo3(signature = (layout="collinear", cameras=20, points=50, regime="calibrated", seed=0, collinear_fraction=0.5))]
fn synth(
    layout: &str,
    cameras: usize,
    points: usize,
    regime: &str,
    seed: u64,
    collinear_fraction: f64,
) -> PyResult<String> {
    let layout = match layout {
        "collinear" => Layout::Collinear,
        "general" => Layout::General,
        "mixed" => Layout::Mixed { collinear_fraction },
        other => return Err(PyValueError::new_err(format!("unknown layout {other:?}"))),
    };
    let mode = match regime {
        "calibrated" => IntrinsicsMode::Calibrated,
        "uncalibrated" => IntrinsicsMode::Varied,
        other => return Err(PyValueError::new_err(format!("unknown regime {other:?}"))),
    };
    let scene = generate(layout, cameras, points, seed, mode).map_err(to_py)?;
    to_json(&SceneJson::from_scene(&scene))
}

/// Measure noisy pairwise tensors and tracks of a scene; returns measurements JSON.
#[pyfunction]
#[pyo3(signature = (scene, noise_rot_deg=0.0, noise_trans_deg=0.0, noise_px=0.0, seed=0))]
fn measure(scene: &str, noise_rot_deg: f64, noise_trans_deg: f64, noise_px: f64, seed: u64) -> PyResult<String> {
    let scene = from_json::<SceneJson>(scene)?.to_scene().map_err(to_py)?;
    let noise = NoiseConfig {
        rotation_deg: noise_rot_deg,
        translation_dir_deg: noise_trans_deg,
        pixel: noise_px,
        matrix: 0.0,
    };
    let (m, tracks) = measure_scene(&scene, &noise, seed).map_err(to_py)?;
    to_json(&MeasurementsJson::new(&m, &tracks.tracks))
}

/// Average measured tensors, recover cameras and evaluate them.
///
/// Returns `(cameras_json, report_json)`. A run that hits the iteration cap but
/// still yields cameras is returned with `converged` false in the report;
/// `NoConvergenceError` is raised only when no cameras could be recovered.
#[pyfunction]
#[pyo3(signature = (measurements, algorithm="r4", tol=1e-9, max_iters=500, collinearity_threshold=None, scene=None))]
fn run_pipeline(
    py: Python<'_>,
    measurements: &str,
    algorithm: &str,
    tol: f64,
    max_iters: usize,
    collinearity_threshold: Option<f64>,
    scene: Option<&str>,
) -> PyResult<(String, String)> {
    let algorithm = match algorithm {
        "r4" => Algorithm::R4,
        "vc" => Algorithm::Vc,
        other => return Err(PyValueError::new_err(format!("unknown algorithm {other:?}"))),
    };
    let meas: MeasurementsJson = from_json(measurements)?;
    let scene = match scene {
        Some(s) => Some(from_json::<SceneJson>(s)?.to_scene().map_err(to_py)?),
        None => None,
    };
    let m = meas.bifocal().map_err(to_py)?;
    let tracks = meas.tracks().map_err(to_py)?;
    let mut cfg = PipelineConfig {
        algorithm,
        ..PipelineConfig::default()
    };
    if let Some(t) = collinearity_threshold {
        cfg.collinearity_threshold = t;
    }
    cfg.admm.primal_tol = tol;
    cfg.admm.dual_tol = tol;
    cfg.admm.max_iters = max_iters;

    let result = py.detach(|| {
        let averaged = run_averaging(&m, &tracks, &cfg)?;
        let out = run_recovery(&averaged, m.kind, &tracks, &cfg.recovery).map_err(|e| {
            match averaged.averaging.as_ref().map(|r| r.require_converged()) {
                Some(Err(nc)) => StageError {
                    stage: bifocal_avg::pipeline::Stage::Average,
                    source: nc,
                },
                _ => e,
            }
        })?;
        Ok::<_, StageError>((averaged, out))
    });
    let (averaged, out) = result.map_err(stage_to_py)?;
    let mut report: EvalReport =
        evaluate(&out.cameras, out.frame, m.kind, scene.as_ref(), &tracks).map_err(to_py)?;
    report.algorithm = Some(cfg.algorithm);
    report.regime = CalibrationRegime::of(m.kind);
    report.converged = Some(averaged.converged);
    report.iterations = Some(averaged.iterations);
    Ok((to_json(&CamerasJson::new(out.frame, &out.cameras))?, to_json(&report)?))
}

#[pymodule]
fn pybifocal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoConvergenceError", m.py().get_type::<NoConvergenceError>())?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
