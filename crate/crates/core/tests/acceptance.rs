//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line;
//! run with `--nocapture` to see them.

use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Matrix3x4};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use bifocal_avg::admm::{average, AdmmConfig};
use bifocal_avg::geom::{bifocal_from_pair, skew, CameraModel, TensorKind};
use bifocal_avg::graph::{
    enrich_connectivity, heuristic_cover, insert_virtual_and_prune, sequential_cover, TripletCover, ViewingGraph,
};
use bifocal_avg::io::evaluate;
use bifocal_avg::linalg::sorted_symmetric_eigen;
use bifocal_avg::metrics::mean_reprojection_error;
use bifocal_avg::nview::{
    certify_collinear_essential, certify_collinear_fundamental, certify_general, certify_general_dense,
    CertTolerances, Condition, NViewBifocal, Regime,
};
use bifocal_avg::pipeline::{run, run_recovery, Algorithm, Averaged, PipelineConfig};
use bifocal_avg::projection::project;
use bifocal_avg::recovery::Frame;
use bifocal_avg::synth::{generate, measure, IntrinsicsMode, Layout, NoiseConfig, Scene};
use bifocal_avg::virtual_cam::{four_view_matrix, orientations_from_cameras, virtual_bifocals};

fn report(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn exact_averaged(m: &NViewBifocal, cover: TripletCover) -> Averaged {
    let triplet_matrices = cover.triplets.iter().map(|t| m.sub_matrix(t).unwrap()).collect();
    Averaged {
        algorithm: Algorithm::R4,
        n_real: m.n,
        cover,
        virtual_cameras: Vec::new(),
        consensus: m.clone(),
        triplet_matrices,
        converged: true,
        iterations: 0,
        averaging: None,
    }
}

fn collinear_scene(seed: u64, mode: IntrinsicsMode) -> Scene {
    let n = 4 + (seed % 17) as usize;
    generate(Layout::Collinear, n, 12, seed, mode).unwrap()
}

#[test]
fn criterion_1_collinear_calibrated_certificate() {
    let start = Instant::now();
    let mut worst_pattern = 0.0_f64;
    let mut worst_orth = 0.0_f64;
    let mut all_pass = true;
    for seed in 0..100 {
        let s = collinear_scene(seed, IntrinsicsMode::Calibrated);
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        let c = certify_collinear_essential(&m, CertTolerances::default());
        all_pass &= c.pass;
        worst_pattern = worst_pattern.max(c.pattern_residual);
        worst_orth = worst_orth.max(c.orthogonality_residual);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = all_pass && worst_pattern < 1e-8 && worst_orth < 1e-8 && secs < 10.0;
    report(
        1,
        ok,
        &format!("pattern {worst_pattern:.2e} orthogonality {worst_orth:.2e} in {secs:.2}s"),
    );
    assert!(ok);
}

#[test]
fn criterion_2_recovery_round_trip() {
    let mut worst_center = 0.0_f64;
    let mut worst_reproj = 0.0_f64;
    for seed in 0..100 {
        let s = collinear_scene(seed, IntrinsicsMode::Calibrated);
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        assert!(certify_collinear_essential(&m, CertTolerances::default()).pass);
        let tracks = s.tracks().tracks;
        let av = exact_averaged(&m, sequential_cover(m.n).unwrap());
        let out = run_recovery(&av, TensorKind::Essential, &tracks, &Default::default()).unwrap();
        let r = evaluate(&out.cameras, out.frame, TensorKind::Essential, Some(&s), &tracks).unwrap();
        worst_center = worst_center.max(r.mean_position_error.unwrap());
    }
    for seed in 0..100 {
        let s = collinear_scene(1000 + seed, IntrinsicsMode::Varied);
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        assert!(certify_collinear_fundamental(&m, CertTolerances::default()).pass);
        let tracks = s.tracks().tracks;
        let av = exact_averaged(&m, sequential_cover(m.n).unwrap());
        let out = run_recovery(&av, TensorKind::Fundamental, &tracks, &Default::default()).unwrap();
        assert_eq!(out.frame, Frame::Projective);
        worst_reproj = worst_reproj.max(mean_reprojection_error(&out.cameras, &tracks).mean);
    }
    let ok = worst_center < 1e-7 && worst_reproj < 1e-7;
    report(2, ok, &format!("centers {worst_center:.2e} reprojection {worst_reproj:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_3_projective_certificate() {
    let mut ok = true;
    for seed in 0..100 {
        let s = collinear_scene(2000 + seed, IntrinsicsMode::Varied);
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        let c = certify_collinear_fundamental(&m, CertTolerances::default());
        ok &= c.pass && c.rank_estimate == 4 && c.signature == (2, 2) && c.block_row_ranks.iter().all(|&r| r == 2);
    }
    let allowed: HashSet<Condition> = [Condition::Rank, Condition::Signature, Condition::BlockRowRank].into();
    for seed in 0..100 {
        let n = 4 + (seed % 9) as usize;
        let s = generate(Layout::General, n, 12, 3000 + seed, IntrinsicsMode::Varied).unwrap();
        let m = NViewBifocal::from_cameras(&s.cameras).unwrap();
        let c = certify_collinear_fundamental(&m, CertTolerances::default());
        let failed: HashSet<Condition> = c.failures.iter().copied().collect();
        let stated = (c.rank_estimate == 6 && failed.contains(&Condition::Rank))
            || (c.block_row_ranks.contains(&3) && failed.contains(&Condition::BlockRowRank));
        ok &= !c.pass && failed.is_subset(&allowed) && stated;
    }
    report(3, ok, "100 collinear pass, 100 general fail on rank or block-row rank");
    assert!(ok);
}

fn random_symmetric(rng: &mut Xoshiro256PlusPlus) -> DMatrix<f64> {
    let a = DMatrix::from_fn(9, 9, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

#[test]
fn criterion_4_projection_correctness() {
    let regimes = [
        Regime::CollinearEssential,
        Regime::CollinearFundamental,
        Regime::GeneralEssential,
        Regime::GeneralFundamental,
    ];
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let mut worst_idem = 0.0_f64;
    let mut worst_spectrum = 0.0_f64;
    for regime in regimes {
        let k = regime.rank() / 2;
        for _ in 0..1000 {
            let s = random_symmetric(&mut rng);
            let p = project(regime, &s, 1e-9).matrix;
            let pp = project(regime, &p, 1e-9).matrix;
            let scale = p.norm().max(1e-300);
            worst_idem = worst_idem.max((&pp - &p).norm() / scale);
            let vals: Vec<f64> = sorted_symmetric_eigen(&p).0.iter().copied().collect();
            let vmax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            // eigenvalues outside the k largest and k smallest vanish
            let mut spectrum = vals[k..9 - k].iter().fold(0.0_f64, |a, v| a.max(v.abs())) / vmax;
            spectrum = spectrum.max(vals[..k].iter().fold(0.0_f64, |a, v| a.max(-v)) / vmax);
            spectrum = spectrum.max(vals[9 - k..].iter().fold(0.0_f64, |a, v| a.max(*v)) / vmax);
            if regime.kind() == TensorKind::Essential {
                for i in 0..k {
                    spectrum = spectrum.max((vals[i] + vals[8 - i]).abs() / vmax);
                }
            }
            if regime == Regime::GeneralEssential {
                let c = certify_general_dense(&p, TensorKind::Essential, CertTolerances::default());
                spectrum = spectrum.max(c.block_rotation_residual);
            }
            worst_spectrum = worst_spectrum.max(spectrum);
        }
    }
    let ok = worst_idem < 1e-10 && worst_spectrum < 1e-10;
    report(4, ok, &format!("idempotency {worst_idem:.2e} spectrum {worst_spectrum:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_5_r4_under_noise() {
    let noise = NoiseConfig {
        rotation_deg: 0.5,
        ..NoiseConfig::default()
    };
    let mut converged = 0;
    let mut within = 0;
    let mut slowest = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    for seed in 0..30u64 {
        let s = generate(Layout::Collinear, 20, 40, 500 + seed, IntrinsicsMode::Calibrated).unwrap();
        let (m, tracks) = measure(&s, &noise, seed).unwrap();
        let start = Instant::now();
        let out = run(&m, &tracks.tracks, &PipelineConfig::default());
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let Ok(out) = out else { continue };
        let res = out.averaged.averaging.as_ref().unwrap();
        let last = res.final_record().unwrap();
        if !(out.averaged.converged && last.primal < 1e-9 && res.iterations <= 500) {
            continue;
        }
        converged += 1;
        let err = evaluate(&out.cameras, out.frame, m.kind, Some(&s), &tracks.tracks)
            .unwrap()
            .mean_position_error
            .unwrap();
        let floor_cfg = PipelineConfig {
            consensus: false,
            ..PipelineConfig::default()
        };
        let floor = run(&m, &tracks.tracks, &floor_cfg)
            .ok()
            .and_then(|f| evaluate(&f.cameras, f.frame, m.kind, Some(&s), &tracks.tracks).ok())
            .and_then(|r| r.mean_position_error)
            .unwrap_or(f64::INFINITY);
        worst_ratio = worst_ratio.max(err / floor);
        if err < 5.0 * floor {
            within += 1;
        }
    }
    let ok = converged >= 28 && within >= 28 && slowest < 5.0;
    report(
        5,
        ok,
        &format!("converged {converged}/30, within 5x floor {within}/30 (worst ratio {worst_ratio:.2}), slowest {slowest:.2}s"),
    );
    assert!(ok);
}

#[test]
fn criterion_6_virtual_four_view_consistency() {
    let mut ok = true;
    let mut worst_rot = 0.0_f64;
    for seed in 0..100u64 {
        let mode = if seed % 2 == 0 {
            IntrinsicsMode::Calibrated
        } else {
            IntrinsicsMode::Varied
        };
        let s = generate(Layout::Collinear, 3, 8, 6000 + seed, mode).unwrap();
        let x = s.points[(seed % 8) as usize];
        let projs: [Matrix3x4<f64>; 3] = [0, 1, 2].map(|k| s.cameras[k].projection());
        let orient = orientations_from_cameras(&projs, 1).unwrap();
        let pts = [0, 1, 2].map(|k| s.cameras[k].project(&x));
        // image-based tensors at their natural scale -s_i / det(K_i)
        let virt: [Matrix3<f64>; 3] = [0, 1, 2].map(|k| {
            let c = &s.cameras[k];
            skew(&pts[k]) * orient[k] * (-c.depth(&x) / c.intrinsics.determinant())
        });
        let real = [(0, 1), (0, 2), (1, 2)].map(|(a, b)| bifocal_from_pair(&s.cameras[a], &s.cameras[b]).unwrap().matrix);
        let tensors = [(0, 1), (0, 2), (1, 2)].map(|(a, b)| bifocal_from_pair(&s.cameras[a], &s.cameras[b]).unwrap());
        let unit = virtual_bifocals(&tensors, &orient, &pts, 1).unwrap();
        for k in 0..3 {
            let v = virt[k] / virt[k].norm();
            ok &= (v - unit[k]).norm().min((v + unit[k]).norm()) < 1e-9;
        }
        let m = four_view_matrix(&real, &virt, s.kind()).unwrap();
        let c = certify_general(&m, CertTolerances::default());
        ok &= c.pass && c.rank_estimate == 6 && c.signature == (3, 3);
        if s.kind() == TensorKind::Essential {
            worst_rot = worst_rot.max(c.block_rotation_residual);
        }
        // the virtual camera is the oracle camera at X with the source orientation
        let vx = CameraModel::new(s.cameras[1].intrinsics, s.cameras[1].rotation, x).unwrap();
        for (k, v) in virt.iter().enumerate() {
            let oracle = bifocal_from_pair(&s.cameras[k], &vx).unwrap().matrix;
            ok &= (oracle - v).norm() < 1e-9 * oracle.norm();
        }
    }
    ok &= worst_rot < 1e-9;
    report(6, ok, &format!("100 triplets certified, block-rotation {worst_rot:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_7_virtual_cameras_end_to_end() {
    let s = generate(Layout::Mixed { collinear_fraction: 0.5 }, 12, 40, 77, IntrinsicsMode::Calibrated).unwrap();
    let (m, tracks) = measure(&s, &NoiseConfig::default(), 7).unwrap();
    let cfg = PipelineConfig {
        algorithm: Algorithm::Vc,
        ..PipelineConfig::default()
    };
    let out = run(&m, &tracks.tracks, &cfg).unwrap();
    let r = evaluate(&out.cameras, out.frame, m.kind, Some(&s), &tracks.tracks).unwrap();
    let err = r.mean_position_error.unwrap();
    let vc_ok = r.n_reconstructed == 12 && err < 1e-6;

    // rank-6 averaging over the plain cover keeps a failing collinear triplet
    let cover = sequential_cover(12).unwrap();
    let plain = average(&m, &cover, Regime::GeneralEssential, &AdmmConfig::default()).unwrap();
    let collinear = cover.triplets[0];
    let sub = plain.consensus.sub_matrix(&collinear).unwrap();
    let cert = certify_general_dense(&sub, TensorKind::Essential, CertTolerances::default());
    let ok = vc_ok && !cert.pass;
    report(
        7,
        ok,
        &format!(
            "vc error {err:.2e} on {} cameras; plain rank-6 triplet {collinear:?} fails {:?}",
            r.n_reconstructed, cert.failures
        ),
    );
    assert!(ok);
}

fn random_graph(rng: &mut Xoshiro256PlusPlus) -> ViewingGraph {
    let n = rng.random_range(5..14);
    let p = rng.random_range(0.25..0.7);
    let mut g = ViewingGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                g.add_edge(i, j, rng.random_range(0.1..1.0)).unwrap();
            }
        }
    }
    g
}

/// Breadth-first connectivity of the triplet dual graph.
fn bfs_connected(triplets: &[[usize; 3]]) -> bool {
    if triplets.is_empty() {
        return false;
    }
    let share2 = |a: &[usize; 3], b: &[usize; 3]| a.iter().filter(|x| b.contains(x)).count() == 2;
    let mut seen = vec![false; triplets.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(k) = queue.pop_front() {
        for j in 0..triplets.len() {
            if !seen[j] && share2(&triplets[k], &triplets[j]) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}

#[test]
fn criterion_8_cover_machinery() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let mut ok = true;
    let mut enriched = 0;
    let mut graphs = 0;
    while graphs < 50 {
        let g = random_graph(&mut rng);
        let tris = g.triangles();
        if tris.is_empty() {
            continue;
        }
        graphs += 1;
        let seq = sequential_cover(g.n).unwrap();
        ok &= seq.check_invariants().is_ok() && bfs_connected(&seq.triplets);
        let h = heuristic_cover(&g).unwrap();
        for &(a, b) in &h.dual_edges {
            let (ta, tb) = (h.triplets[a], h.triplets[b]);
            ok &= ta.iter().filter(|x| tb.contains(x)).count() == 2;
        }
        let full_connected = bfs_connected(&tris);
        match enrich_connectivity(&h, &tris) {
            Ok(e) => {
                ok &= bfs_connected(&e.triplets) && e.check_invariants().is_ok();
                ok &= h.triplets.iter().all(|t| e.triplets.contains(t));
                if !bfs_connected(&h.triplets) {
                    enriched += 1;
                }
            }
            Err(_) => ok &= !full_connected,
        }
        // a sparse start that is usually disconnected
        let sparse = TripletCover::from_triplets(tris.iter().step_by(3).copied().collect());
        match enrich_connectivity(&sparse, &tris) {
            Ok(e) => {
                ok &= bfs_connected(&e.triplets) && e.check_invariants().is_ok();
                if !bfs_connected(&sparse.triplets) {
                    enriched += 1;
                }
            }
            Err(_) => ok &= !full_connected,
        }
        if full_connected {
            let e = enrich_connectivity(&h, &tris).unwrap();
            let scores: Vec<f64> = (0..e.len()).map(|_| rng.random_range(0.0..0.1)).collect();
            let pruned = insert_virtual_and_prune(&e, &scores, 0.05, g.n).unwrap();
            ok &= bfs_connected(&pruned.triplets) && pruned.is_connected();
        }
    }
    report(8, ok, &format!("50 graphs, {enriched} covers needed enrichment"));
    assert!(ok);
}

#[test]
fn criterion_9_determinism() {
    let bin = env!("CARGO_BIN_EXE_bifocal-avg");
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    let st = std::process::Command::new(bin)
        .args(["synth", "--cameras", "12", "--seed", "9", "--out"])
        .arg(&scene)
        .status()
        .unwrap();
    assert!(st.success());
    let mut reports = Vec::new();
    for (k, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let st = std::process::Command::new(bin)
            .args(["pipeline", "--noise-rot-deg", "0.5", "--seed", "3", "--threads", threads, "--scene"])
            .arg(&scene)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(st.success());
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    let ok = reports[0] == reports[1];
    report(9, ok, &format!("report.json {} bytes, identical across runs", reports[0].len()));
    assert!(ok);
}
