use bifocal_avg::error::Error;
use bifocal_avg::io::evaluate;
use bifocal_avg::pipeline::{run, Algorithm, PipelineConfig, Stage};
use bifocal_avg::synth::{generate, measure, IntrinsicsMode, Layout, NoiseConfig, Scene};

fn run_scene(scene: &Scene, algorithm: Algorithm) -> bifocal_avg::io::EvalReport {
    let (m, tracks) = measure(scene, &NoiseConfig::default(), 1).unwrap();
    let cfg = PipelineConfig {
        algorithm,
        ..PipelineConfig::default()
    };
    let out = run(&m, &tracks.tracks, &cfg).unwrap();
    assert!(out.averaged.converged);
    evaluate(&out.cameras, out.frame, m.kind, Some(scene), &tracks.tracks).unwrap()
}

#[test]
fn r4_calibrated_collinear_oracle() {
    let s = generate(Layout::Collinear, 20, 30, 5, IntrinsicsMode::Calibrated).unwrap();
    let r = run_scene(&s, Algorithm::R4);
    assert_eq!(r.n_reconstructed, 20);
    assert!(r.mean_position_error.unwrap() < 1e-7, "{r:?}");
}

#[test]
fn r4_projective_collinear_oracle() {
    let s = generate(Layout::Collinear, 8, 30, 6, IntrinsicsMode::Varied).unwrap();
    let r = run_scene(&s, Algorithm::R4);
    assert_eq!(r.n_reconstructed, 8);
    assert!(r.mean_position_error.is_none());
    assert!(r.mean_reprojection_error < 1e-7, "{r:?}");
}

#[test]
fn r4_rejects_mixed_scene() {
    let s = generate(Layout::Mixed { collinear_fraction: 0.5 }, 12, 30, 7, IntrinsicsMode::Calibrated).unwrap();
    let (m, tracks) = measure(&s, &NoiseConfig::default(), 1).unwrap();
    let err = run(&m, &tracks.tracks, &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.stage, Stage::Validate);
    assert!(matches!(err.source, Error::InvalidArgument(_)));
}

#[test]
fn vc_on_fully_collinear_oracle() {
    let s = generate(Layout::Collinear, 8, 30, 8, IntrinsicsMode::Calibrated).unwrap();
    let r = run_scene(&s, Algorithm::Vc);
    assert_eq!(r.n_reconstructed, 8);
    assert!(r.mean_position_error.unwrap() < 1e-6, "{r:?}");
}

#[test]
fn vc_on_mixed_calibrated_oracle() {
    let s = generate(Layout::Mixed { collinear_fraction: 0.5 }, 12, 30, 9, IntrinsicsMode::Calibrated).unwrap();
    let r = run_scene(&s, Algorithm::Vc);
    assert_eq!(r.n_reconstructed, 12);
    assert!(r.mean_position_error.unwrap() < 1e-6, "{r:?}");
}

#[test]
fn vc_on_mixed_projective_oracle() {
    let s = generate(Layout::Mixed { collinear_fraction: 0.5 }, 12, 30, 10, IntrinsicsMode::Varied).unwrap();
    let r = run_scene(&s, Algorithm::Vc);
    assert_eq!(r.n_reconstructed, 12);
    assert!(r.mean_reprojection_error < 1e-6, "{r:?}");
}
