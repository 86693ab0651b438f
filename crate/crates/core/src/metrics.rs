//! Gauge alignment and reconstruction error metrics.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{triangulate_dlt, Track};

/// Similarity `g ~ s R e + t` mapping estimated points onto reference points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Per-point distances after alignment.
    pub residuals: Vec<f64>,
    /// The estimated points are collinear, so the rotation about their line
    /// is not determined by the data.
    pub line_gauge_free: bool,
}

impl Similarity {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

/// Least-squares similarity (Umeyama) from `est` onto `gt`.
pub fn align_similarity(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Similarity> {
    if est.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} estimated and {} reference points",
            est.len(),
            gt.len()
        )));
    }
    if est.len() < 3 {
        return Err(Error::TooFew {
            need: 3,
            got: est.len(),
        });
    }
    let n = est.len() as f64;
    let me = est.iter().sum::<Vector3<f64>>() / n;
    let mg = gt.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut cov_e = Matrix3::zeros();
    let mut var_e = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let de = e - me;
        cov += (g - mg) * de.transpose();
        cov_e += de * de.transpose();
        var_e += de.norm_squared();
    }
    cov /= n;
    cov_e /= n;
    var_e /= n;
    if var_e <= 0.0 {
        return Err(Error::DegenerateGeometry("estimated points coincide".into()));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let mut k = 0;
        for i in 1..3 {
            if svd.singular_values[i] < svd.singular_values[k] {
                k = i;
            }
        }
        s[(k, k)] = -1.0;
    }
    let rotation = u * s * v_t;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * s[(i, i)]).sum();
    let scale = trace / var_e;
    let translation = mg - rotation * me * scale;
    let ev = cov_e.symmetric_eigenvalues();
    let emax = ev.max();
    let mut sorted = [ev[0], ev[1], ev[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    let line_gauge_free = sorted[1] <= 1e-12 * emax;
    let residuals = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (rotation * e * scale + translation - g).norm())
        .collect();
    Ok(Similarity {
        scale,
        rotation,
        translation,
        residuals,
        line_gauge_free,
    })
}

/// Mean and median of the residuals of [`align_similarity`].
pub fn position_errors(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<(f64, f64)> {
    let sim = align_similarity(est, gt)?;
    Ok((mean(&sim.residuals), median(&sim.residuals)))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats {
    pub mean: f64,
    pub median: f64,
    pub observations: usize,
}

fn project(p: &Matrix3x4<f64>, x: &Vector4<f64>) -> Vector3<f64> {
    let h = p * x;
    h / h[2]
}

/// Re-triangulates each track from the cameras that are available and
/// measures the image distance to the reprojections. Tracks seen by fewer
/// than two available cameras contribute nothing.
pub fn mean_reprojection_error(cams: &[Option<Matrix3x4<f64>>], tracks: &[Track]) -> ReprojectionStats {
    let mut errs = Vec::new();
    for tr in tracks {
        let mut ps = Vec::new();
        let mut xs = Vec::new();
        for (v, x) in tr.view_ids.iter().zip(&tr.points) {
            if let Some(Some(p)) = cams.get(*v) {
                ps.push(*p);
                xs.push(*x);
            }
        }
        if ps.len() < 2 {
            continue;
        }
        let Ok(point) = triangulate_dlt(&ps, &xs) else {
            continue;
        };
        for (p, x) in ps.iter().zip(&xs) {
            let r = project(p, &point);
            errs.push(((r[0] - x[0]).powi(2) + (r[1] - x[1]).powi(2)).sqrt());
        }
    }
    ReprojectionStats {
        mean: mean(&errs),
        median: median(&errs),
        observations: errs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation_from_axis_angle;
    use approx::assert_relative_eq;

    fn pts() -> Vec<Vector3<f64>> {
        (0..6)
            .map(|i| {
                let a = i as f64;
                Vector3::new(a.cos() * 3.0, (2.0 * a).sin(), 0.5 * a)
            })
            .collect()
    }

    #[test]
    fn identity_alignment() {
        let p = pts();
        let s = align_similarity(&p, &p).unwrap();
        assert_relative_eq!(s.scale, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert!(s.translation.norm() < 1e-12);
        assert!(s.residuals.iter().all(|r| *r < 1e-12));
        assert!(!s.line_gauge_free);
    }

    #[test]
    fn recovers_exact_similarity() {
        let gt = pts();
        let r = rotation_from_axis_angle(&Vector3::new(0.3, -0.2, 0.9));
        let off = Vector3::new(1.0, -2.0, 0.5);
        let est: Vec<_> = gt.iter().map(|g| r * g * 2.0 + off).collect();
        let s = align_similarity(&est, &gt).unwrap();
        assert_relative_eq!(s.scale, 0.5, epsilon = 1e-12);
        assert!(s.residuals.iter().all(|x| *x < 1e-12));
    }

    #[test]
    fn collinear_points_flagged() {
        let d = Vector3::new(1.0, 2.0, -0.5);
        let gt: Vec<_> = (0..5).map(|i| d * i as f64).collect();
        let est: Vec<_> = gt.iter().map(|g| g * 3.0 + Vector3::x()).collect();
        let s = align_similarity(&est, &gt).unwrap();
        assert!(s.line_gauge_free);
        assert!(s.residuals.iter().all(|x| *x < 1e-10));
    }

    #[test]
    fn too_few_points() {
        let p = pts();
        assert!(matches!(
            align_similarity(&p[..2], &p[..2]),
            Err(Error::TooFew { need: 3, got: 2 })
        ));
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[]), 0.0);
    }
}
