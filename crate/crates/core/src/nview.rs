//! The 3n x 3n symmetric block matrix of pairwise tensors and its
//! consistency certificates.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bifocal_from_pair, BifocalTensor, CameraModel, TensorKind};
use crate::linalg::{
    block3, fix_sign_largest_positive, nearest_rotation, set_block3, sorted_symmetric_eigen, svd_sorted,
};

/// Sparse symmetric n-view matrix; blocks are stored for `i < j` only.
#[derive(Debug, Clone, PartialEq)]
pub struct NViewBifocal {
    pub n: usize,
    pub kind: TensorKind,
    blocks: BTreeMap<(usize, usize), BifocalTensor>,
}

impl NViewBifocal {
    /// Validating constructor. `(j, i)` entries are stored transposed as
    /// `(i, j)`; block scales are kept as given.
    pub fn assemble(n: usize, kind: TensorKind, blocks: Vec<(usize, usize, Matrix3<f64>)>) -> Result<Self> {
        let mut out = Self::empty(n, kind);
        for (i, j, m) in blocks {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("diagonal block ({i}, {i})")));
            }
            let (a, b, m) = if i < j { (i, j, m) } else { (j, i, m.transpose()) };
            if out.blocks.contains_key(&(a, b)) {
                return Err(Error::DuplicateEdge(a, b));
            }
            let t = BifocalTensor::new(m, kind).map_err(|_| Error::RankNot2(a, b))?;
            out.blocks.insert((a, b), t);
        }
        Ok(out)
    }

    pub fn empty(n: usize, kind: TensorKind) -> Self {
        Self {
            n,
            kind,
            blocks: BTreeMap::new(),
        }
    }

    /// Inserts a block without validation (estimates and stress tests).
    pub fn insert_unchecked(&mut self, i: usize, j: usize, m: Matrix3<f64>) {
        let (a, b, m) = if i < j { (i, j, m) } else { (j, i, m.transpose()) };
        self.blocks.insert((a, b), BifocalTensor::from_estimate(m, self.kind));
    }

    /// All pairwise tensors of a camera list at their natural scale.
    pub fn from_cameras(cams: &[CameraModel]) -> Result<Self> {
        let kind = if cams.iter().all(|c| c.is_calibrated()) {
            TensorKind::Essential
        } else {
            TensorKind::Fundamental
        };
        let mut out = Self::empty(cams.len(), kind);
        for i in 0..cams.len() {
            for j in i + 1..cams.len() {
                let mut t = bifocal_from_pair(&cams[i], &cams[j])?;
                t.kind = kind;
                out.blocks.insert((i, j), t);
            }
        }
        Ok(out)
    }

    /// Reads the blocks listed in `edges` from a dense matrix.
    pub fn from_dense(n: usize, kind: TensorKind, m: &DMatrix<f64>, edges: &[(usize, usize)]) -> Self {
        let mut out = Self::empty(n, kind);
        for &(i, j) in edges {
            out.insert_unchecked(i, j, block3(m, i, j));
        }
        out
    }

    /// Block `(i, j)`, transposing stored `(j, i)` when needed.
    pub fn block(&self, i: usize, j: usize) -> Option<Matrix3<f64>> {
        if i < j {
            self.blocks.get(&(i, j)).map(|t| t.matrix)
        } else {
            self.blocks.get(&(j, i)).map(|t| t.matrix.transpose())
        }
    }

    pub fn tensor(&self, i: usize, j: usize) -> Option<&BifocalTensor> {
        self.blocks.get(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.blocks.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Unit-normalizes every block with the largest-entry sign rule.
    pub fn normalized(&self) -> Self {
        Self {
            n: self.n,
            kind: self.kind,
            blocks: self.blocks.iter().map(|(k, t)| (*k, t.normalized())).collect(),
        }
    }

    /// Symmetric dense matrix with zero diagonal and zero-filled gaps.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3 * self.n, 3 * self.n);
        for (&(i, j), t) in &self.blocks {
            set_block3(&mut m, i, j, &t.matrix);
            set_block3(&mut m, j, i, &t.matrix.transpose());
        }
        m
    }

    /// Dense sub-matrix over `ids`, in that order; all blocks must exist.
    pub fn sub_matrix(&self, ids: &[usize]) -> Result<DMatrix<f64>> {
        let k = ids.len();
        let mut m = DMatrix::zeros(3 * k, 3 * k);
        for a in 0..k {
            for b in a + 1..k {
                let blk = self
                    .block(ids[a], ids[b])
                    .ok_or(Error::MissingBlock(ids[a].min(ids[b]), ids[a].max(ids[b])))?;
                set_block3(&mut m, a, b, &blk);
                set_block3(&mut m, b, a, &blk.transpose());
            }
        }
        Ok(m)
    }

    /// The sub-problem over `ids` as a standalone n-view matrix.
    pub fn restrict(&self, ids: &[usize]) -> Result<Self> {
        let m = self.sub_matrix(ids)?;
        let edges: Vec<(usize, usize)> = (0..ids.len())
            .flat_map(|a| (a + 1..ids.len()).map(move |b| (a, b)))
            .collect();
        Ok(Self::from_dense(ids.len(), self.kind, &m, &edges))
    }
}

/// Maps thin-SVD factors `(U, V)` to eigenvector factors `(X, Y)`.
///
/// `X = (U + V)/sqrt2`, `Y = (V - U)/sqrt2`, so that
/// `X S X^T - Y S Y^T = U S V^T + V S U^T`.
pub fn svd_spectral_map(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_orthonormal_pair(u, v)?;
    Ok(((u + v) * FRAC_1_SQRT_2, (v - u) * FRAC_1_SQRT_2))
}

/// Inverse of [`svd_spectral_map`].
pub fn spectral_svd_map(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_orthonormal_pair(x, y)?;
    Ok(((x - y) * FRAC_1_SQRT_2, (x + y) * FRAC_1_SQRT_2))
}

fn check_orthonormal_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidArgument("factor shapes differ".into()));
    }
    let mut ab = DMatrix::zeros(a.nrows(), 2 * a.ncols());
    ab.columns_mut(0, a.ncols()).copy_from(a);
    ab.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    let res = (ab.transpose() * &ab - DMatrix::identity(ab.ncols(), ab.ncols())).norm();
    if res > 1e-10 {
        return Err(Error::NotOrthonormal(res));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockIssue {
    pub i: usize,
    pub j: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellformedReport {
    pub pass: bool,
    pub issues: Vec<BlockIssue>,
}

/// Checks rank 2 on every block and, for essential kind, equal singular values.
pub fn check_nview_wellformed(m: &NViewBifocal) -> WellformedReport {
    let mut issues = Vec::new();
    for (&(i, j), t) in &m.blocks {
        if !t.is_rank2() {
            issues.push(BlockIssue {
                i,
                j,
                reason: format!("rank is not 2 (singular values {:?})", t.singular_values().as_slice()),
            });
        } else if m.kind == TensorKind::Essential && !t.has_equal_singular_values() {
            issues.push(BlockIssue {
                i,
                j,
                reason: "nonzero singular values differ".into(),
            });
        }
    }
    WellformedReport {
        pass: issues.is_empty(),
        issues,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    CollinearEssential,
    CollinearFundamental,
    GeneralEssential,
    GeneralFundamental,
}

impl Regime {
    pub fn new(collinear: bool, kind: TensorKind) -> Self {
        match (collinear, kind) {
            (true, TensorKind::Essential) => Regime::CollinearEssential,
            (true, TensorKind::Fundamental) => Regime::CollinearFundamental,
            (false, TensorKind::Essential) => Regime::GeneralEssential,
            (false, TensorKind::Fundamental) => Regime::GeneralFundamental,
        }
    }

    /// Target rank of the regime's matrices.
    pub fn rank(&self) -> usize {
        match self {
            Regime::CollinearEssential | Regime::CollinearFundamental => 4,
            Regime::GeneralEssential | Regime::GeneralFundamental => 6,
        }
    }

    pub fn kind(&self) -> TensorKind {
        match self {
            Regime::CollinearEssential | Regime::GeneralEssential => TensorKind::Essential,
            Regime::CollinearFundamental | Regime::GeneralFundamental => TensorKind::Fundamental,
        }
    }

    pub fn is_collinear(&self) -> bool {
        matches!(self, Regime::CollinearEssential | Regime::CollinearFundamental)
    }
}

/// Individual certificate conditions, reported when violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Rank,
    Signature,
    EigenvaluePairing,
    BlockRowRank,
    BlockOrthogonality,
    BlockRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertTolerances {
    /// Eigenvalues (and singular values) below `rank_tol * max` count as zero.
    pub rank_tol: f64,
    /// Bound on pairing, orthogonality and block-rotation residuals.
    pub residual_tol: f64,
}

impl Default for CertTolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-6,
            residual_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCertificate {
    pub regime: Regime,
    /// Descending eigenvalues of the dense matrix.
    pub eigenvalues: Vec<f64>,
    pub rank_estimate: usize,
    pub signature: (usize, usize),
    pub block_row_ranks: Vec<usize>,
    /// Relative deviation from the paired eigenvalue pattern.
    pub pattern_residual: f64,
    /// Max over blocks of `||V_i^T V_i - I/n||_F` (collinear essential).
    pub orthogonality_residual: f64,
    /// Max over blocks of the distance of `sqrt(n) V_i` to SO(3) (general essential).
    pub block_rotation_residual: f64,
    pub failures: Vec<Condition>,
    pub pass: bool,
    pub tolerances: CertTolerances,
    /// The `3n x 2` (collinear) or `3n x 3` (general) factor `V` that attained
    /// the residual, when it could be formed.
    #[serde(skip)]
    pub v_hat: Option<DMatrix<f64>>,
}

impl ConsistencyCertificate {
    fn new(regime: Regime, m: &DMatrix<f64>, tol: CertTolerances) -> (Self, DMatrix<f64>) {
        let (vals, vecs) = sorted_symmetric_eigen(m);
        let vmax = vals.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let thr = tol.rank_tol * vmax;
        let pos = vals.iter().filter(|&&x| x > thr).count();
        let neg = vals.iter().filter(|&&x| x < -thr).count();
        let n = m.nrows() / 3;
        let block_row_ranks = (0..n)
            .map(|i| {
                let row = m.rows(3 * i, 3).into_owned();
                let (_, s, _) = svd_sorted(&row);
                let smax = s[0];
                s.iter().filter(|&&x| x > tol.rank_tol * smax && smax > 0.0).count()
            })
            .collect();
        (
            Self {
                regime,
                eigenvalues: vals.iter().copied().collect(),
                rank_estimate: pos + neg,
                signature: (pos, neg),
                block_row_ranks,
                pattern_residual: 0.0,
                orthogonality_residual: 0.0,
                block_rotation_residual: 0.0,
                failures: Vec::new(),
                pass: false,
                tolerances: tol,
                v_hat: None,
            },
            vecs,
        )
    }

    fn finish(mut self) -> Self {
        self.pass = self.failures.is_empty();
        self
    }

    fn fail(&mut self, c: Condition) {
        if !self.failures.contains(&c) {
            self.failures.push(c);
        }
    }

    /// Rotations `sqrt(n) [v1, v2, sqrt(n) v1 x v2]` (collinear) or
    /// `polar(sqrt(n) V_i)` (general) per block. They equal `R_i^T W` for one
    /// global rotation `W` on consistent input.
    pub fn block_rotations(&self) -> Option<Vec<Matrix3<f64>>> {
        let v = self.v_hat.as_ref()?;
        let n = v.nrows() / 3;
        let sn = (n as f64).sqrt();
        Some(
            (0..n)
                .map(|i| {
                    if v.ncols() == 2 {
                        let a: Vector3<f64> = v.fixed_view::<3, 1>(3 * i, 0) * sn;
                        let b: Vector3<f64> = v.fixed_view::<3, 1>(3 * i, 1) * sn;
                        nearest_rotation(&Matrix3::from_columns(&[a, b, a.cross(&b)]))
                    } else {
                        nearest_rotation(&(v.fixed_view::<3, 3>(3 * i, 0) * sn))
                    }
                })
                .collect(),
        )
    }
}

fn sign_fixed_columns(vecs: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(vecs.nrows(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        let mut v = vecs.column(c).into_owned();
        fix_sign_largest_positive(&mut v);
        out.set_column(k, &v);
    }
    out
}

fn pairing_residual(vals: &[f64], k: usize) -> f64 {
    let m = vals.len();
    let scale = vals[0].abs().max(vals[m - 1].abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    (0..k)
        .map(|i| (vals[i] + vals[m - 1 - i]).abs() / scale)
        .fold(0.0, f64::max)
}

/// Thm 1 test for a dense n-view essential matrix.
pub fn certify_collinear_essential_dense(m: &DMatrix<f64>, tol: CertTolerances) -> ConsistencyCertificate {
    let (mut cert, vecs) = ConsistencyCertificate::new(Regime::CollinearEssential, m, tol);
    let vals = cert.eigenvalues.clone();
    let len = vals.len();
    if cert.rank_estimate != 4 {
        cert.fail(Condition::Rank);
    }
    if cert.signature != (2, 2) {
        cert.fail(Condition::Signature);
    }
    if len < 4 {
        cert.pattern_residual = f64::INFINITY;
        cert.orthogonality_residual = f64::INFINITY;
        cert.fail(Condition::EigenvaluePairing);
        cert.fail(Condition::BlockOrthogonality);
        return cert.finish();
    }
    // lambda, lambda, -lambda, -lambda
    let four = [vals[0], vals[1], -vals[len - 2], -vals[len - 1]];
    let lam = four.iter().sum::<f64>() / 4.0;
    cert.pattern_residual = if lam > 0.0 {
        four.iter().map(|x| (x - lam).abs()).fold(0.0, f64::max) / lam
    } else {
        f64::INFINITY
    };
    if !(cert.pattern_residual < tol.residual_tol) {
        cert.fail(Condition::EigenvaluePairing);
    }
    let x = sign_fixed_columns(&vecs, &[0, 1]);
    let y = sign_fixed_columns(&vecs, &[len - 1, len - 2]);
    let (res, v_hat) = best_o2_alignment(&x, &y);
    cert.orthogonality_residual = res;
    cert.v_hat = Some(v_hat);
    if !(res < tol.residual_tol) {
        cert.fail(Condition::BlockOrthogonality);
    }
    cert.finish()
}

pub fn certify_collinear_essential(m: &NViewBifocal, tol: CertTolerances) -> ConsistencyCertificate {
    certify_collinear_essential_dense(&m.dense(), tol)
}

fn rot2(theta: f64, reflect: bool) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    let r = Matrix2::new(c, -s, s, c);
    if reflect {
        r * Matrix2::new(1.0, 0.0, 0.0, -1.0)
    } else {
        r
    }
}

/// Residuals of `V(G)_i^T V(G)_i - I/n` with `V(G) = (X + Y G)/sqrt2`.
fn o2_residuals(x: &DMatrix<f64>, y: &DMatrix<f64>, g: &Matrix2<f64>) -> Vec<f64> {
    let n = x.nrows() / 3;
    let inv_n = 1.0 / n as f64;
    let yg = y * DMatrix::from_fn(2, 2, |r, c| g[(r, c)]);
    let v = (x + yg) * FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let b = v.rows(3 * i, 3);
        let gram = b.transpose() * b;
        out.push(gram[(0, 0)] - inv_n);
        out.push(gram[(1, 1)] - inv_n);
        out.push(std::f64::consts::SQRT_2 * gram[(0, 1)]);
    }
    out
}

fn max_block_residual(r: &[f64]) -> f64 {
    r.chunks(3)
        .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
        .fold(0.0, f64::max)
}

/// Searches `G` in O(2) minimizing the block-orthogonality residual. Returns
/// the max block residual and `V = (X + Y G)/sqrt2`.
fn best_o2_alignment(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut best = (f64::INFINITY, 0.0, false);
    for reflect in [false, true] {
        const STEPS: usize = 72;
        let mut starts: Vec<(f64, f64)> = (0..STEPS)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / STEPS as f64;
                (sq(&o2_residuals(x, y, &rot2(th, reflect))), th)
            })
            .collect();
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, th0) in starts.iter().take(3) {
            let mut th = th0;
            let mut r = o2_residuals(x, y, &rot2(th, reflect));
            for _ in 0..60 {
                let h = 1e-6;
                let rp = o2_residuals(x, y, &rot2(th + h, reflect));
                let rm = o2_residuals(x, y, &rot2(th - h, reflect));
                let (mut jtj, mut jtr) = (0.0, 0.0);
                for k in 0..r.len() {
                    let d = (rp[k] - rm[k]) / (2.0 * h);
                    jtj += d * d;
                    jtr += d * r[k];
                }
                if jtj <= 0.0 {
                    break;
                }
                let step = -jtr / jtj;
                let mut t = 1.0;
                let cur = sq(&r);
                let mut accepted = false;
                while t > 1e-6 {
                    let cand = o2_residuals(x, y, &rot2(th + t * step, reflect));
                    if sq(&cand) < cur {
                        th += t * step;
                        r = cand;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted || (t * step).abs() < 1e-15 {
                    break;
                }
            }
            let res = max_block_residual(&r);
            if res < best.0 {
                best = (res, th, reflect);
            }
        }
    }
    let g = rot2(best.1, best.2);
    let v = (x + y * DMatrix::from_fn(2, 2, |r, c| g[(r, c)])) * FRAC_1_SQRT_2;
    (best.0, v)
}

/// Thm 2 test for a dense n-view fundamental matrix.
pub fn certify_collinear_fundamental_dense(m: &DMatrix<f64>, tol: CertTolerances) -> ConsistencyCertificate {
    let (mut cert, _) = ConsistencyCertificate::new(Regime::CollinearFundamental, m, tol);
    if cert.rank_estimate != 4 {
        cert.fail(Condition::Rank);
    }
    if cert.signature != (2, 2) {
        cert.fail(Condition::Signature);
    }
    if cert.block_row_ranks.iter().any(|&r| r != 2) {
        cert.fail(Condition::BlockRowRank);
    }
    cert.finish()
}

pub fn certify_collinear_fundamental(m: &NViewBifocal, tol: CertTolerances) -> ConsistencyCertificate {
    certify_collinear_fundamental_dense(&m.dense(), tol)
}

/// Rank-6 test: signature (3,3) and, for essential kind, paired eigenvalues
/// with a block-rotation factor.
pub fn certify_general_dense(m: &DMatrix<f64>, kind: TensorKind, tol: CertTolerances) -> ConsistencyCertificate {
    let regime = Regime::new(false, kind);
    let (mut cert, vecs) = ConsistencyCertificate::new(regime, m, tol);
    if cert.rank_estimate != 6 {
        cert.fail(Condition::Rank);
    }
    if cert.signature != (3, 3) {
        cert.fail(Condition::Signature);
    }
    if kind == TensorKind::Fundamental {
        return cert.finish();
    }
    let len = cert.eigenvalues.len();
    if len < 6 {
        cert.pattern_residual = f64::INFINITY;
        cert.block_rotation_residual = f64::INFINITY;
        cert.fail(Condition::EigenvaluePairing);
        cert.fail(Condition::BlockRotation);
        return cert.finish();
    }
    cert.pattern_residual = pairing_residual(&cert.eigenvalues, 3);
    if !(cert.pattern_residual < tol.residual_tol) {
        cert.fail(Condition::EigenvaluePairing);
    }
    let x = sign_fixed_columns(&vecs, &[0, 1, 2]);
    let y = sign_fixed_columns(&vecs, &[len - 1, len - 2, len - 3]);
    let (res, v_hat, _) = best_block_rotation_factor(&x, &y);
    cert.block_rotation_residual = res;
    cert.v_hat = Some(v_hat);
    if !(res < tol.residual_tol) {
        cert.fail(Condition::BlockRotation);
    }
    cert.finish()
}

pub fn certify_general(m: &NViewBifocal, tol: CertTolerances) -> ConsistencyCertificate {
    certify_general_dense(&m.dense(), m.kind, tol)
}

/// Distance of each `sqrt(n) V_i` block to SO(3), maximized over blocks.
pub fn block_rotation_residual(v: &DMatrix<f64>) -> f64 {
    let n = v.nrows() / 3;
    let sn = (n as f64).sqrt();
    (0..n)
        .map(|i| {
            let b: Matrix3<f64> = v.fixed_view::<3, 3>(3 * i, 0) * sn;
            (b - nearest_rotation(&b)).norm()
        })
        .fold(0.0, f64::max)
}

/// Chooses the relative signs of the `(x_k, y_k)` pairs so that the blocks of
/// `V = (X + Y S)/sqrt2` are closest to scaled rotations.
///
/// Returns the residual, the sign-resolved `V` with positive block
/// determinants, and the matching `U = (X - Y S)/sqrt2` with the same column
/// signs, so that `X M X^T - Y M Y^T = U M V^T + V M U^T` for diagonal `M`.
pub(crate) fn best_block_rotation_factor(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows() / 3;
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for mask in 0..8u32 {
        let mut v = DMatrix::zeros(x.nrows(), 3);
        let mut u = DMatrix::zeros(x.nrows(), 3);
        for k in 0..3 {
            let s = if mask & (1 << k) != 0 { -1.0 } else { 1.0 };
            v.set_column(k, &((x.column(k) + y.column(k) * s) * FRAC_1_SQRT_2));
            u.set_column(k, &((x.column(k) - y.column(k) * s) * FRAC_1_SQRT_2));
        }
        let det_sum: f64 = (0..n)
            .map(|i| v.fixed_view::<3, 3>(3 * i, 0).into_owned().determinant())
            .sum();
        if det_sum < 0.0 {
            let cv = -v.column(2).into_owned();
            v.set_column(2, &cv);
            let cu = -u.column(2).into_owned();
            u.set_column(2, &cu);
        }
        let res = block_rotation_residual(&v);
        if best.as_ref().is_none_or(|(r, _, _)| res < *r) {
            best = Some((res, v, u));
        }
    }
    best.expect("eight candidates")
}

/// Factors a matrix with `k` positive and `k` negative significant eigenvalues
/// as `U V^T + V U^T`, with `U = (X+Y)/sqrt2`, `V = (X-Y)/sqrt2` and `X`, `Y`
/// the eigenvectors scaled by the square roots of the eigenvalue magnitudes.
pub fn pm_factorization(m: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = sorted_symmetric_eigen(m);
    let len = vals.len();
    if len < 2 * k || vals[k - 1] <= 0.0 || vals[len - k] >= 0.0 {
        return Err(Error::InconsistentInput(format!("signature is not ({k},{k})")));
    }
    let mut x = DMatrix::zeros(len, k);
    let mut y = DMatrix::zeros(len, k);
    for c in 0..k {
        x.set_column(c, &(vecs.column(c) * vals[c].sqrt()));
        let idx = len - 1 - c;
        y.set_column(c, &(vecs.column(idx) * (-vals[idx]).sqrt()));
    }
    Ok(((&x + &y) * FRAC_1_SQRT_2, (&x - &y) * FRAC_1_SQRT_2))
}
