//! Synthetic scenes and noisy measurements used as the ground-truth oracle.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize_tensor_matrix, skew, CameraModel, TensorKind, Track};
use crate::linalg::rotation_from_axis_angle;
use crate::nview::NViewBifocal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum Layout {
    Collinear,
    General,
    /// The first `round(n * collinear_fraction)` cameras share a line.
    Mixed { collinear_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicsMode {
    Calibrated,
    Varied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub cameras: Vec<CameraModel>,
    pub points: Vec<Vector3<f64>>,
    pub layout: Layout,
    pub seed: u64,
}

impl Scene {
    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.cameras.iter().map(|c| c.center).collect()
    }

    pub fn is_calibrated(&self) -> bool {
        self.cameras.iter().all(|c| c.is_calibrated())
    }

    pub fn kind(&self) -> TensorKind {
        if self.is_calibrated() {
            TensorKind::Essential
        } else {
            TensorKind::Fundamental
        }
    }

    /// Noise-free tracks of every point in every camera.
    pub fn tracks(&self) -> TrackSet {
        let ids: Vec<usize> = (0..self.cameras.len()).collect();
        TrackSet {
            tracks: self
                .points
                .iter()
                .map(|x| Track {
                    view_ids: ids.clone(),
                    points: self.cameras.iter().map(|c| c.project(x)).collect(),
                })
                .collect(),
        }
    }
}

/// Point correspondences; each track may span any number of views.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
}

impl TrackSet {
    /// Sub-tracks over `views` (in that order) for tracks observing all of them.
    pub fn restricted(&self, views: &[usize]) -> Vec<Track> {
        self.tracks.iter().filter_map(|t| t.restrict(views)).collect()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

const LINE_DISTANCE: f64 = 8.0;
const SPACING: f64 = 1.0;
const JITTER: f64 = 0.25;
const BOX_HALF: f64 = 1.5;
const MAX_ROLL: f64 = 0.1;

fn random_unit(rng: &mut Xoshiro256PlusPlus) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let a = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    v.cross(&a).normalize()
}

/// Camera-to-world rotation whose optical axis points from `center` to the
/// origin, rolled by `roll` radians.
fn look_at_origin(center: &Vector3<f64>, roll: f64) -> Matrix3<f64> {
    let z = (-center).normalize();
    let x0 = any_perpendicular(&z);
    let y0 = z.cross(&x0);
    let (s, c) = roll.sin_cos();
    let x = x0 * c + y0 * s;
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

fn line_centers(rng: &mut Xoshiro256PlusPlus, count: usize) -> Vec<Vector3<f64>> {
    let u = random_unit(rng);
    let mut d = random_unit(rng);
    d = (d - u * u.dot(&d)).normalize();
    let base = u * LINE_DISTANCE;
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|i| {
            let s = (i as f64 - mid) * SPACING + rng.random_range(-JITTER..JITTER);
            base + d * s
        })
        .collect()
}

fn sphere_centers(rng: &mut Xoshiro256PlusPlus, count: usize) -> Vec<Vector3<f64>> {
    (0..count)
        .map(|_| random_unit(rng) * rng.random_range(7.0..10.0))
        .collect()
}

/// Deterministic scene generation for a fixed seed.
pub fn generate(layout: Layout, n_cams: usize, n_points: usize, seed: u64, mode: IntrinsicsMode) -> Result<Scene> {
    if n_cams < 3 {
        return Err(Error::TooFewCameras(n_cams));
    }
    if n_points < 4 {
        return Err(Error::TooFew { need: 4, got: n_points });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let centers = match layout {
        Layout::Collinear => line_centers(&mut rng, n_cams),
        Layout::General => sphere_centers(&mut rng, n_cams),
        Layout::Mixed { collinear_fraction } => {
            if !(0.0..=1.0).contains(&collinear_fraction) {
                return Err(Error::InvalidArgument(format!("collinear fraction {collinear_fraction}")));
            }
            let k = (n_cams as f64 * collinear_fraction).round() as usize;
            let mut c = line_centers(&mut rng, k);
            c.extend(sphere_centers(&mut rng, n_cams - k));
            c
        }
    };
    let mut cameras = Vec::with_capacity(n_cams);
    for t in centers {
        let r = look_at_origin(&t, rng.random_range(-MAX_ROLL..MAX_ROLL));
        let k = match mode {
            IntrinsicsMode::Calibrated => Matrix3::identity(),
            IntrinsicsMode::Varied => {
                let f = rng.random_range(0.8..1.2);
                let fy = rng.random_range(0.8..1.2);
                let cx = rng.random_range(-0.1..0.1);
                let cy = rng.random_range(-0.1..0.1);
                Matrix3::new(f, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0)
            }
        };
        cameras.push(CameraModel::new(k, r, t)?);
    }
    let points = (0..n_points)
        .map(|_| {
            Vector3::new(
                rng.random_range(-BOX_HALF..BOX_HALF),
                rng.random_range(-BOX_HALF..BOX_HALF),
                rng.random_range(-BOX_HALF..BOX_HALF),
            )
        })
        .collect();
    Ok(Scene {
        cameras,
        points,
        layout,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Mean geodesic error of the relative rotations, degrees.
    pub rotation_deg: f64,
    /// Mean angular error of the translation directions, degrees.
    pub translation_dir_deg: f64,
    /// Standard deviation of image-point noise per coordinate.
    pub pixel: f64,
    /// Standard deviation of additive noise on unit-norm tensors, followed by
    /// rank-2 truncation. Zero disables it.
    pub matrix: f64,
}

/// Pairwise tensors for all camera pairs (unit-normalized) and tracks.
pub fn measure(scene: &Scene, noise: &NoiseConfig, seed: u64) -> Result<(NViewBifocal, TrackSet)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let n = scene.cameras.len();
    let kind = scene.kind();
    let rot_sigma = noise.rotation_deg.to_radians() * (std::f64::consts::PI / 8.0).sqrt();
    let dir_sigma = noise.translation_dir_deg.to_radians() / (std::f64::consts::PI / 2.0).sqrt();
    let mut blocks = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (ci, cj) = (&scene.cameras[i], &scene.cameras[j]);
            let mut r = ci.rotation.transpose() * cj.rotation;
            let mut t = ci.rotation.transpose() * (ci.center - cj.center);
            if rot_sigma > 0.0 {
                let w = gaussian3(&mut rng, rot_sigma);
                r = rotation_from_axis_angle(&w) * r;
            }
            if dir_sigma > 0.0 {
                let len = t.norm();
                let dir = t / len;
                let a = any_perpendicular(&dir);
                let b = dir.cross(&a);
                let g = Vector2::new(
                    rng.sample::<f64, _>(StandardNormal) * dir_sigma,
                    rng.sample::<f64, _>(StandardNormal) * dir_sigma,
                );
                let tilt = g.norm();
                if tilt > 0.0 {
                    let toward = (a * g.x + b * g.y) / tilt;
                    t = (dir * tilt.cos() + toward * tilt.sin()) * len;
                }
            }
            let e = skew(&t) * r;
            let ki = ci.intrinsics.try_inverse().expect("validated");
            let kj = cj.intrinsics.try_inverse().expect("validated");
            let mut m = normalize_tensor_matrix(&(ki.transpose() * e * kj));
            if noise.matrix > 0.0 {
                let normal = Normal::new(0.0, noise.matrix).expect("positive sigma");
                m += Matrix3::from_fn(|_, _| normal.sample(&mut rng));
                m = normalize_tensor_matrix(&rank2_truncate(&m));
            }
            blocks.push((i, j, m));
        }
    }
    let mats = NViewBifocal::assemble(n, kind, blocks)?;
    let pixel = Normal::new(0.0, noise.pixel.max(0.0)).expect("finite sigma");
    let mut tracks = scene.tracks();
    if noise.pixel > 0.0 {
        for tr in &mut tracks.tracks {
            for p in &mut tr.points {
                p.x += pixel.sample(&mut rng);
                p.y += pixel.sample(&mut rng);
            }
        }
    }
    Ok((mats, tracks))
}

fn gaussian3(rng: &mut Xoshiro256PlusPlus, sigma: f64) -> Vector3<f64> {
    Vector3::new(
        rng.sample::<f64, _>(StandardNormal) * sigma,
        rng.sample::<f64, _>(StandardNormal) * sigma,
        rng.sample::<f64, _>(StandardNormal) * sigma,
    )
}

/// Zeroes the smallest singular value.
pub fn rank2_truncate(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let mut s = svd.singular_values;
    let (mut idx, mut best) = (0, f64::INFINITY);
    for k in 0..3 {
        if s[k] < best {
            best = s[k];
            idx = k;
        }
    }
    s[idx] = 0.0;
    svd.u.expect("u") * Matrix3::from_diagonal(&s) * svd.v_t.expect("v_t")
}
