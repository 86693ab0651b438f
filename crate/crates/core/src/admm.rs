//! ADMM consensus averaging of pairwise tensors over a triplet cover.
//!
//! Every triplet keeps a 9x9 copy `Z_k` constrained to the regime's set, the
//! consensus variable holds one 3x3 block per covered edge, and `W_k` are the
//! scaled duals. Each measured block enters the objective as `c_e * M_e`
//! with a scale and sign `c_e` fitted once per triplet before the iterations,
//! since unit-normalized calibrated blocks are not jointly consistent. The
//! penalty grows geometrically so that the nonconvex iteration settles.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize_tensor_matrix, TensorKind};
use crate::graph::TripletCover;
use crate::linalg::{block3, set_block3};
use crate::nview::{NViewBifocal, Regime};
use crate::projection::project;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub rank_tol: f64,
    /// Per-iteration multiplier of `rho`; values above 1 force consensus on
    /// nonconvex sets where a fixed penalty can stall.
    #[serde(default = "default_growth")]
    pub rho_growth: f64,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    /// Worker cap for the per-triplet projections; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 500,
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            rank_tol: 1e-6,
            rho_growth: default_growth(),
            rho_max: default_rho_max(),
            threads: None,
        }
    }
}

fn default_growth() -> f64 {
    1.05
}

fn default_rho_max() -> f64 {
    1e8
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.max_iters > 0
            && self.primal_tol > 0.0
            && self.dual_tol > 0.0
            && self.rank_tol > 0.0
            && self.rho_growth >= 1.0
            && self.rho_max >= self.rho
            && self.threads.is_none_or(|t| t > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("ADMM settings must be positive".into()))
        }
    }
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct AveragingResult {
    /// Consensus blocks normalized to unit Frobenius norm (sign rule applied).
    pub averaged: NViewBifocal,
    /// Consensus blocks at the solver's joint scale, used for recovery.
    pub consensus: NViewBifocal,
    /// Per-edge scale and sign relating consensus blocks to the measurements.
    pub scales: BTreeMap<(usize, usize), f64>,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Some projection clipped a missing positive or negative eigenvalue.
    pub signature_deficient: bool,
}

impl AveragingResult {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.log.last()
    }

    /// Writes the log as line-delimited JSON records.
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.log {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// `Err(NoConvergence)` when the tolerances were not reached.
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            return Ok(());
        }
        let last = self.log.last().copied().unwrap_or(IterationRecord {
            iteration: 0,
            objective: f64::NAN,
            primal: f64::NAN,
            dual: f64::NAN,
        });
        Err(Error::NoConvergence {
            iterations: self.iterations,
            primal: last.primal,
            dual: last.dual,
        })
    }
}

/// Local edge slots of a triplet: `(a, b)` index pairs into the triplet.
const SLOTS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

struct Problem {
    triplets: Vec<[usize; 3]>,
    /// Edge index of each triplet slot.
    slot_edges: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
    /// Unit-normalized measurements per edge.
    measured: Vec<Matrix3<f64>>,
    /// Number of triplets using each edge.
    count: Vec<f64>,
}

impl Problem {
    fn new(measured: &NViewBifocal, cover: &TripletCover) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut edges = Vec::new();
        let mut slot_edges = Vec::with_capacity(cover.len());
        for t in &cover.triplets {
            let mut slots = [0; 3];
            for (s, &(a, b)) in SLOTS.iter().enumerate() {
                let e = (t[a], t[b]);
                let id = *index.entry(e).or_insert_with(|| {
                    edges.push(e);
                    edges.len() - 1
                });
                slots[s] = id;
            }
            slot_edges.push(slots);
        }
        let mut mats = Vec::with_capacity(edges.len());
        for &(i, j) in &edges {
            let b = measured.block(i, j).ok_or(Error::MissingBlock(i, j))?;
            mats.push(normalize_tensor_matrix(&b));
        }
        let mut count = vec![0.0; edges.len()];
        for slots in &slot_edges {
            for &e in slots {
                count[e] += 1.0;
            }
        }
        Ok(Self {
            triplets: cover.triplets.clone(),
            slot_edges,
            edges,
            measured: mats,
            count,
        })
    }

    fn local(&self, k: usize, blocks: &[Matrix3<f64>]) -> DMatrix<f64> {
        triplet_matrix(&[
            blocks[self.slot_edges[k][0]],
            blocks[self.slot_edges[k][1]],
            blocks[self.slot_edges[k][2]],
        ])
    }
}

/// The symmetric 9x9 matrix of a triplet from its `(0,1)`, `(0,2)`, `(1,2)`
/// blocks.
pub fn triplet_matrix(blocks: &[Matrix3<f64>; 3]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(9, 9);
    for (s, &(a, b)) in SLOTS.iter().enumerate() {
        set_block3(&mut m, a, b, &blocks[s]);
        set_block3(&mut m, b, a, &blocks[s].transpose());
    }
    m
}

fn relative_residual(m: &DMatrix<f64>, regime: Regime, rank_tol: f64) -> DVector<f64> {
    let norm = m.norm().max(1e-300);
    let p = project(regime, m, rank_tol).matrix;
    let d = (m - p) / norm;
    DVector::from_column_slice(d.as_slice())
}

fn scaled(blocks: &[Matrix3<f64>; 3], c: &[f64; 3]) -> DMatrix<f64> {
    triplet_matrix(&[blocks[0] * c[0], blocks[1] * c[1], blocks[2] * c[2]])
}

fn fit_residual(blocks: &[Matrix3<f64>; 3], c: &[f64; 3], regime: Regime, rank_tol: f64) -> f64 {
    relative_residual(&scaled(blocks, c), regime, rank_tol).norm()
}

/// Unit null direction of `m` (`left` gives the null vector of `m^T`).
fn null_direction(m: &Matrix3<f64>, left: bool) -> Vector3<f64> {
    let svd = m.svd(true, true);
    let k = (0..3)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .expect("three singular values");
    if left {
        svd.u.expect("u requested").column(k).into_owned()
    } else {
        svd.v_t.expect("v_t requested").row(k).transpose()
    }
}

/// Baseline lengths of a calibrated triplet up to a common factor.
///
/// Block norms are proportional to baselines. The epipoles in each view give
/// the line angle at that vertex of the center triangle, and by the law of
/// sines each side is proportional to the sine of the opposite angle, which
/// is the same for an angle and its supplement.
fn law_of_sines_magnitudes(blocks: &[Matrix3<f64>; 3]) -> [f64; 3] {
    // epipoles per view: view 0 from slots 0,1 (left); view 1 from slot 0
    // (right) and slot 2 (left); view 2 from slots 1,2 (right)
    let pairs = [
        (null_direction(&blocks[0], true), null_direction(&blocks[1], true)),
        (null_direction(&blocks[0], false), null_direction(&blocks[2], true)),
        (null_direction(&blocks[1], false), null_direction(&blocks[2], false)),
    ];
    let sin = pairs.map(|(u, v)| u.cross(&v).norm().min(1.0));
    // slot (0,1) faces vertex 2, (0,2) faces 1, (1,2) faces 0
    [sin[2], sin[1], sin[0]]
}

/// Per-edge scales making one triplet closest to consistent.
///
/// Fundamental triplets are consistent at any scale, so unit scales are
/// returned. Collinear calibrated triplets have a one-parameter family of
/// consistent scales (the position of the middle camera is free), so only the
/// sign pattern is chosen and equal spacing is assumed. General calibrated
/// triplets take magnitudes from the epipole angles and the best sign pattern.
pub fn fit_triplet_scales(blocks: &[Matrix3<f64>; 3], regime: Regime, rank_tol: f64) -> ([f64; 3], f64) {
    let starts: Vec<[f64; 3]> = match regime {
        Regime::CollinearFundamental | Regime::GeneralFundamental => return ([1.0; 3], 0.0),
        Regime::CollinearEssential => {
            let mut v = Vec::new();
            // slots (0,1), (0,2), (1,2); the outer pair gets twice the spacing
            for outer in 0..3 {
                for signs in 0..4u32 {
                    let mut c = [1.0, 1.0, 1.0];
                    c[outer] = 2.0;
                    if signs & 1 != 0 {
                        c[(outer + 1) % 3] = -c[(outer + 1) % 3];
                    }
                    if signs & 2 != 0 {
                        c[(outer + 2) % 3] = -c[(outer + 2) % 3];
                    }
                    v.push(c);
                }
            }
            v
        }
        Regime::GeneralEssential => {
            let mag = law_of_sines_magnitudes(blocks);
            (0..4u32)
                .map(|signs| {
                    let s1 = if signs & 1 != 0 { -1.0 } else { 1.0 };
                    let s2 = if signs & 2 != 0 { -1.0 } else { 1.0 };
                    [mag[0], mag[1] * s1, mag[2] * s2]
                })
                .collect()
        }
    };
    let n = 3f64.sqrt();
    let (res, c) = starts
        .into_iter()
        .map(|c| (fit_residual(blocks, &c, regime, rank_tol), c))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty candidate list");
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if !(norm > 0.0) {
        return ([1.0; 3], res);
    }
    ([c[0] * n / norm, c[1] * n / norm, c[2] * n / norm], res)
}

/// Initial scales: per-triplet fits chained along a BFS of the dual graph.
fn initial_scales(p: &Problem, cover: &TripletCover, regime: Regime, rank_tol: f64) -> Result<Vec<f64>> {
    let fits: Vec<[f64; 3]> = (0..p.triplets.len())
        .into_par_iter()
        .map(|k| {
            let blocks = [
                p.measured[p.slot_edges[k][0]],
                p.measured[p.slot_edges[k][1]],
                p.measured[p.slot_edges[k][2]],
            ];
            fit_triplet_scales(&blocks, regime, rank_tol).0
        })
        .collect();
    let mut c: Vec<Option<f64>> = vec![None; p.edges.len()];
    for (k, parent) in cover.bfs_order()? {
        let fit = fits[k];
        let gain = match parent {
            None => 1.0,
            Some(_) => {
                // match the triplet to an already fixed edge, preferring the largest
                let mut best: Option<(f64, f64)> = None;
                for s in 0..3 {
                    if let Some(v) = c[p.slot_edges[k][s]] {
                        if fit[s].abs() > best.map_or(0.0, |b| b.0) {
                            best = Some((fit[s].abs(), v / fit[s]));
                        }
                    }
                }
                best.map_or(1.0, |b| b.1)
            }
        };
        for s in 0..3 {
            let e = p.slot_edges[k][s];
            if c[e].is_none() {
                c[e] = Some(fit[s] * gain);
            }
        }
    }
    Ok(c.into_iter().map(|v| v.unwrap_or(1.0)).collect())
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Consensus averaging of `measured` over `cover` under `regime`.
///
/// Non-convergence is reported through `converged = false` with the last
/// iterate; use [`AveragingResult::require_converged`] to turn it into an
/// error.
pub fn average(
    measured: &NViewBifocal,
    cover: &TripletCover,
    regime: Regime,
    cfg: &AdmmConfig,
) -> Result<AveragingResult> {
    cfg.validate()?;
    if cover.is_empty() {
        return Err(Error::InvalidArgument("empty cover".into()));
    }
    if !cover.is_connected() {
        return Err(Error::NotConnected);
    }
    if regime.kind() != measured.kind {
        return Err(Error::InvalidArgument(format!(
            "regime {regime:?} does not match {:?} measurements",
            measured.kind
        )));
    }
    let p = Problem::new(measured, cover)?;
    with_pool(cfg.threads, || run(&p, cover, measured, regime, cfg))?
}

fn run(
    p: &Problem,
    cover: &TripletCover,
    measured: &NViewBifocal,
    regime: Regime,
    cfg: &AdmmConfig,
) -> Result<AveragingResult> {
    let m = p.triplets.len();
    let ne = p.edges.len();
    let mut c = initial_scales(p, cover, regime, cfg.rank_tol)?;
    // scales stay fixed: freeing them lets blocks shrink toward trivially
    // consistent configurations
    let mut e: Vec<Matrix3<f64>> = (0..ne).map(|k| p.measured[k] * c[k]).collect();
    let mut w: Vec<DMatrix<f64>> = vec![DMatrix::zeros(9, 9); m];
    let mut log = Vec::new();
    let mut converged = false;
    let mut deficient = false;
    let mut iterations = 0;
    rescale(&mut c, &mut e, &mut w);
    let mut rho = cfg.rho;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let projected: Vec<(DMatrix<f64>, bool)> = (0..m)
            .into_par_iter()
            .map(|k| {
                let pr = project(regime, &(p.local(k, &e) - &w[k]), cfg.rank_tol);
                (pr.matrix, pr.signature_deficient)
            })
            .collect();
        let z: Vec<DMatrix<f64>> = projected.iter().map(|(zk, _)| zk.clone()).collect();
        deficient |= projected.iter().any(|(_, d)| *d);

        // consensus update, accumulated in triplet order
        let mut acc = vec![Matrix3::zeros(); ne];
        for k in 0..m {
            let zw = &z[k] + &w[k];
            for (s, &(a, b)) in SLOTS.iter().enumerate() {
                let ab = block3(&zw, a, b);
                let ba = block3(&zw, b, a);
                acc[p.slot_edges[k][s]] += (ab + ba.transpose()) * 0.5;
            }
        }
        let prev = e.clone();
        for k in 0..ne {
            let n = p.count[k];
            e[k] = (p.measured[k] * (2.0 * n * c[k]) + acc[k] * rho) / (n * (2.0 + rho));
        }

        let mut primal_sq = 0.0;
        let mut norm_sq = 0.0;
        let mut objective = 0.0;
        for k in 0..m {
            let local = p.local(k, &e);
            let diff = &z[k] - &local;
            primal_sq += diff.norm_squared();
            norm_sq += local.norm_squared();
            w[k] += &diff;
            let meas: [Matrix3<f64>; 3] = std::array::from_fn(|s| {
                let id = p.slot_edges[k][s];
                p.measured[id] * c[id]
            });
            objective += (&z[k] - triplet_matrix(&meas)).norm_squared();
        }
        let dual_sq: f64 = (0..m)
            .map(|k| (p.local(k, &e) - p.local(k, &prev)).norm_squared())
            .sum();
        let scale = norm_sq.sqrt().max(1e-300);
        let primal = primal_sq.sqrt() / scale;
        let dual = dual_sq.sqrt() / scale;
        log.push(IterationRecord {
            iteration: it,
            objective,
            primal,
            dual,
        });
        if primal < cfg.primal_tol && dual < cfg.dual_tol {
            converged = true;
            break;
        }
        let next = (rho * cfg.rho_growth).min(cfg.rho_max);
        // scaled duals carry a factor 1/rho
        for x in w.iter_mut() {
            *x *= rho / next;
        }
        rho = next;
    }

    let mut consensus = NViewBifocal::empty(measured.n, measured.kind);
    let mut scales = BTreeMap::new();
    for (k, &(i, j)) in p.edges.iter().enumerate() {
        consensus.insert_unchecked(i, j, e[k]);
        scales.insert((i, j), c[k]);
    }
    let averaged = consensus.normalized();
    Ok(AveragingResult {
        averaged,
        consensus,
        scales,
        log,
        converged,
        iterations,
        signature_deficient: deficient,
    })
}

fn rescale(c: &mut [f64], e: &mut [Matrix3<f64>], w: &mut [DMatrix<f64>]) {
    let ss: f64 = c.iter().map(|v| v * v).sum();
    if ss <= 0.0 {
        return;
    }
    let g = (c.len() as f64 / ss).sqrt();
    for v in c.iter_mut() {
        *v *= g;
    }
    for b in e.iter_mut() {
        *b *= g;
    }
    for x in w.iter_mut() {
        *x *= g;
    }
}

/// Kind-aware regime for a cover: collinear when `collinear` is set.
pub fn regime_for(kind: TensorKind, collinear: bool) -> Regime {
    Regime::new(collinear, kind)
}
