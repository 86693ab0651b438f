//! Projections of symmetric matrices onto the rank-constrained sets of the
//! collinear (rank 4) and general (rank 6) regimes.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::linalg::{nearest_rotation, polar_orthonormalize, sorted_symmetric_eigen, symmetrize};
use crate::nview::{best_block_rotation_factor, Regime};

/// Output of a projection. `signature_deficient` is set when the input had
/// fewer than `k` positive or `k` negative eigenvalues above the rank
/// threshold; the missing eigenvalues are clipped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub matrix: DMatrix<f64>,
    pub signature_deficient: bool,
}

pub fn project(regime: Regime, s: &DMatrix<f64>, rank_tol: f64) -> Projected {
    match regime {
        Regime::CollinearEssential => project_collinear_essential(s, rank_tol),
        Regime::CollinearFundamental => project_collinear_fundamental(s, rank_tol),
        Regime::GeneralEssential => project_general_essential(s, rank_tol),
        Regime::GeneralFundamental => project_general_fundamental(s, rank_tol),
    }
}

struct Split {
    /// Top `k` eigenvectors, descending.
    x: DMatrix<f64>,
    /// Bottom `k` eigenvectors, most negative first.
    y: DMatrix<f64>,
    /// Clipped top eigenvalues (>= 0).
    pos: Vec<f64>,
    /// Clipped bottom eigenvalues as magnitudes (>= 0), most negative first.
    neg: Vec<f64>,
    deficient: bool,
}

fn split(s: &DMatrix<f64>, k: usize, rank_tol: f64) -> Split {
    let (vals, vecs) = sorted_symmetric_eigen(s);
    let m = vals.len();
    let vmax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let thr = rank_tol * vmax;
    let mut x = DMatrix::zeros(m, k);
    let mut y = DMatrix::zeros(m, k);
    let mut pos = Vec::with_capacity(k);
    let mut neg = Vec::with_capacity(k);
    let mut deficient = false;
    for c in 0..k {
        x.set_column(c, &vecs.column(c));
        y.set_column(c, &vecs.column(m - 1 - c));
        let p = vals[c];
        let q = vals[m - 1 - c];
        deficient |= p <= thr || q >= -thr;
        pos.push(p.max(0.0));
        neg.push((-q).max(0.0));
    }
    Split {
        x,
        y,
        pos,
        neg,
        deficient,
    }
}

fn rebuild(x: &DMatrix<f64>, y: &DMatrix<f64>, pos: &[f64], neg: &[f64]) -> DMatrix<f64> {
    let xs = x * DMatrix::from_diagonal(&DVector::from_column_slice(pos)) * x.transpose();
    let ys = y * DMatrix::from_diagonal(&DVector::from_column_slice(neg)) * y.transpose();
    symmetrize(&(xs - ys))
}

fn paired(sp: &Split) -> Vec<f64> {
    sp.pos.iter().zip(&sp.neg).map(|(p, q)| 0.5 * (p + q)).collect()
}

/// Rank 4 with eigenvalues `(m1, m2, -m2, -m1)`, `m_k = (l_k - l_{5-k})/2`.
pub fn project_collinear_essential(s: &DMatrix<f64>, rank_tol: f64) -> Projected {
    let sp = split(s, 2, rank_tol);
    let mu = paired(&sp);
    Projected {
        matrix: rebuild(&sp.x, &sp.y, &mu, &mu),
        signature_deficient: sp.deficient,
    }
}

/// Rank 4 with signature (2,2): two largest positive and two most negative
/// eigenvalues kept.
pub fn project_collinear_fundamental(s: &DMatrix<f64>, rank_tol: f64) -> Projected {
    let sp = split(s, 2, rank_tol);
    Projected {
        matrix: rebuild(&sp.x, &sp.y, &sp.pos, &sp.neg),
        signature_deficient: sp.deficient,
    }
}

/// Rank 6 with signature (3,3).
pub fn project_general_fundamental(s: &DMatrix<f64>, rank_tol: f64) -> Projected {
    let sp = split(s, 3, rank_tol);
    Projected {
        matrix: rebuild(&sp.x, &sp.y, &sp.pos, &sp.neg),
        signature_deficient: sp.deficient,
    }
}

/// Rank 6 with paired spectrum and a block-rotation factor.
///
/// After pairing the eigenvalues, `V = (X + Y S)/sqrt2` is formed with the
/// best sign pattern `S`, each `sqrt(n) V_i` is replaced by its nearest
/// rotation, `U` is re-orthonormalized against the new `V`, and the output is
/// `U M V^T + V M U^T`.
pub fn project_general_essential(s: &DMatrix<f64>, rank_tol: f64) -> Projected {
    let sp = split(s, 3, rank_tol);
    let mu = paired(&sp);
    let (_, mut v, u) = best_block_rotation_factor(&sp.x, &sp.y);
    let n = s.nrows() / 3;
    let sn = (n as f64).sqrt();
    let vmax = mu.iter().fold(0.0_f64, |a, x| a.max(*x));
    if mu[2] <= rank_tol * vmax {
        // the third eigenpair is arbitrary; complete each block by a cross product
        for i in 0..n {
            let a: Vector3<f64> = v.fixed_view::<3, 1>(3 * i, 0).into_owned();
            let b: Vector3<f64> = v.fixed_view::<3, 1>(3 * i, 1).into_owned();
            v.fixed_view_mut::<3, 1>(3 * i, 2).copy_from(&(a.cross(&b) * sn));
        }
    }
    let mut v_rot = DMatrix::zeros(s.nrows(), 3);
    for i in 0..n {
        let b = v.fixed_view::<3, 3>(3 * i, 0) * sn;
        v_rot.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&(nearest_rotation(&b) / sn));
    }
    let resid = &u - &v_rot * (v_rot.transpose() * &u);
    let u_new = polar_orthonormalize(&resid).unwrap_or_else(|| orthonormal_complement_fallback(&v_rot));
    let m = DMatrix::from_diagonal(&DVector::from_vec(mu));
    let out = &u_new * &m * v_rot.transpose();
    Projected {
        matrix: symmetrize(&(&out + out.transpose())),
        signature_deficient: sp.deficient,
    }
}

/// Any three orthonormal columns orthogonal to `v`, used only when the
/// residual of `U` collapses.
fn orthonormal_complement_fallback(v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = v.nrows();
    let proj = DMatrix::identity(m, m) - v * v.transpose();
    let (u, _, _) = crate::linalg::svd_sorted(&proj);
    u.columns(0, 3).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::CameraModel;
    use crate::linalg::rotation_from_axis_angle;
    use crate::nview::{
        certify_collinear_essential_dense, certify_collinear_fundamental_dense, certify_general_dense,
        CertTolerances, NViewBifocal,
    };
    use crate::geom::TensorKind;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn random_sym(seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let a = DMatrix::from_fn(9, 9, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&a)
    }

    fn cams(collinear: bool, calibrated: bool) -> Vec<CameraModel> {
        let k = if calibrated {
            Matrix3::identity()
        } else {
            Matrix3::new(1.1, 0.0, 0.05, 0.0, 0.95, -0.03, 0.0, 0.0, 1.0)
        };
        (0..3)
            .map(|i| {
                let a = i as f64;
                let t = if collinear {
                    Vector3::new(1.0, 0.5, 8.0) + Vector3::new(0.8, 0.1, -0.2) * (a + 0.3 * a * a)
                } else {
                    Vector3::new(2.0 * a.cos(), 1.5 * (2.0 * a).sin(), 8.0 + a)
                };
                let w = Vector3::new(0.1 * a, -0.2 + 0.05 * a, 0.03 * a);
                CameraModel::new(k, rotation_from_axis_angle(&w), t).unwrap()
            })
            .collect()
    }

    #[test]
    fn pairing_formula_on_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, -1.0, -3.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let p = project_collinear_essential(&d, 1e-6);
        assert_relative_eq!(p.matrix, d, epsilon = 1e-12);
        assert!(!p.signature_deficient);
    }

    #[test]
    fn all_projections_idempotent() {
        for seed in 0..20 {
            let s = random_sym(seed);
            for regime in [
                Regime::CollinearEssential,
                Regime::CollinearFundamental,
                Regime::GeneralEssential,
                Regime::GeneralFundamental,
            ] {
                let p1 = project(regime, &s, 1e-6).matrix;
                let p2 = project(regime, &p1, 1e-6).matrix;
                assert!((&p2 - &p1).norm() < 1e-10 * p1.norm().max(1.0), "{regime:?} seed {seed}");
            }
        }
    }

    #[test]
    fn psd_input_flagged() {
        let q = DMatrix::from_fn(9, 4, |r, c| ((r * 5 + c * 2) as f64).cos());
        let s = &q * q.transpose();
        assert!(project_collinear_fundamental(&s, 1e-6).signature_deficient);
        assert!(project_general_fundamental(&s, 1e-6).signature_deficient);
    }

    #[test]
    fn consistent_triplets_are_fixed_points() {
        let cases = [
            (true, true, Regime::CollinearEssential),
            (true, false, Regime::CollinearFundamental),
            (false, true, Regime::GeneralEssential),
            (false, false, Regime::GeneralFundamental),
        ];
        for (col, cal, regime) in cases {
            let d = NViewBifocal::from_cameras(&cams(col, cal)).unwrap().dense();
            let p = project(regime, &d, 1e-6);
            assert!((&p.matrix - &d).norm() < 1e-10 * d.norm(), "{regime:?}");
        }
    }

    #[test]
    fn noisy_triplets_certified_after_projection() {
        let tol = CertTolerances::default();
        let noise = DMatrix::from_fn(9, 9, |r, c| 1e-3 * ((r * 11 + c * 5) as f64).sin());
        let noise = symmetrize(&noise);
        let d = NViewBifocal::from_cameras(&cams(true, true)).unwrap().dense();
        let p = project_collinear_essential(&(&d + &noise), 1e-6).matrix;
        let cert = certify_collinear_essential_dense(&p, tol);
        assert_eq!(cert.rank_estimate, 4);
        let ev = &cert.eigenvalues;
        assert!((ev[0] + ev[8]).abs() < 1e-12 && (ev[1] + ev[7]).abs() < 1e-12);
        assert!((&p - &d).norm() < 1e-2 * d.norm());

        let d = NViewBifocal::from_cameras(&cams(true, false)).unwrap().dense();
        let p = project_collinear_fundamental(&(&d + &noise), 1e-6).matrix;
        assert!(certify_collinear_fundamental_dense(&p, tol).failures.iter().all(|c| {
            *c == crate::nview::Condition::BlockRowRank
        }));

        let d = NViewBifocal::from_cameras(&cams(false, true)).unwrap().dense();
        let p = project_general_essential(&(&d + &noise), 1e-6).matrix;
        let cert = certify_general_dense(&p, TensorKind::Essential, CertTolerances { rank_tol: 1e-6, residual_tol: 1e-6 });
        assert!(cert.pass, "{cert:?}");
        assert!(cert.block_rotation_residual < 1e-12);
    }
}
