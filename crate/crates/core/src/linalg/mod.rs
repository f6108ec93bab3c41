//! Dense linear-algebra kit: vectorization, Kronecker and row-wise Kronecker
//! products, commutation matrices, SVD-based minimum-norm solves, economy QR
//! and functions of diagonalizable matrices.
//!
//! All routines work on complex column-major storage (`CMat`). Real-only
//! callers validate realness themselves and reuse the same storage.

mod banded;
mod sparse;

pub use banded::BandLu;
pub use sparse::SparseMatrix;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;

/// Relative threshold (w.r.t. the largest singular value) below which
/// singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Default guard on the eigenvector condition number in [`matrix_function`].
pub const DEFAULT_DIAG_COND_TOL: f64 = 1e8;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Stacks the columns of `a`.
pub fn vec(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMat::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Khatri–Rao transpose product: row `i` of the result is
/// `g.row(i) ⊗ vt.row(i)`.
pub fn khatri_rao_t(g: &CMat, vt: &CMat) -> Result<CMat> {
    if g.nrows() != vt.nrows() {
        return Err(Error::Dimension(format!(
            "khatri_rao_t: G has {} rows, V^T has {}",
            g.nrows(),
            vt.nrows()
        )));
    }
    let (p, k, n) = (g.nrows(), g.ncols(), vt.ncols());
    let mut out = CMat::zeros(p, k * n);
    for i in 0..p {
        for j in 0..k {
            let gij = g[(i, j)];
            for l in 0..n {
                out[(i, j * n + l)] = gij * vt[(i, l)];
            }
        }
    }
    Ok(out)
}

/// The `(p, p)` commutation matrix: `Π vec(X) = vec(Xᵀ)` for every `p × p`
/// matrix `X`.
pub fn commutation(p: usize) -> CMat {
    let mut pi = CMat::zeros(p * p, p * p);
    for i in 0..p {
        for j in 0..p {
            // vec(X)[i + j p] = X[i, j] lands at vec(Xᵀ)[j + i p].
            pi[(j + i * p, i + j * p)] = C64::new(1.0, 0.0);
        }
    }
    pi
}

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: CMat,
    pub s: Vec<f64>,
    pub vt: CMat,
}

impl SvdFactors {
    pub fn rank(&self, rank_tol: f64) -> usize {
        match self.s.first() {
            Some(&s1) if s1 > 0.0 => self.s.iter().filter(|&&s| s > rank_tol * s1).count(),
            _ => 0,
        }
    }

    /// Smallest singular value of the factored matrix counted up to
    /// `min(rows, cols)`; zero when the matrix is empty.
    pub fn sigma_min(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * &self.vt
    }
}

fn to_faer<T: Copy>(a: &DMatrix<T>) -> faer::Mat<T> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer<T: Copy + nalgebra::Scalar>(a: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD, or full when `full` is set, with singular values in
/// descending order.
fn faer_svd<T>(a: &DMatrix<T>, full: bool) -> (DMatrix<T>, Vec<f64>, DMatrix<T>)
where
    T: faer::traits::ComplexField<Real = f64> + Copy + nalgebra::Scalar + nalgebra::ComplexField,
    T: SvdAdjoint,
{
    let (m, n) = a.shape();
    let q = m.min(n);
    if q == 0 {
        let (ur, vr) = if full { (m, n) } else { (0, 0) };
        return (DMatrix::zeros(m, ur), Vec::new(), DMatrix::zeros(vr, n));
    }
    let fa = to_faer(a);
    let dec = if full { fa.svd() } else { fa.thin_svd() }.expect("svd iteration converges");
    let s = dec.S().column_vector().iter().map(|x| x.real_part()).collect();
    let u = from_faer(dec.U());
    let vt = T::adjoint_of(&from_faer(dec.V()));
    (u, s, vt)
}

#[doc(hidden)]
pub trait SvdAdjoint: Sized {
    fn adjoint_of(m: &DMatrix<Self>) -> DMatrix<Self>;
    fn real_part(&self) -> f64;
}

impl SvdAdjoint for f64 {
    fn adjoint_of(m: &DMatrix<f64>) -> DMatrix<f64> {
        m.transpose()
    }
    fn real_part(&self) -> f64 {
        *self
    }
}

impl SvdAdjoint for C64 {
    fn adjoint_of(m: &DMatrix<C64>) -> DMatrix<C64> {
        m.adjoint()
    }
    fn real_part(&self) -> f64 {
        self.re
    }
}

pub fn svd(a: &CMat) -> SvdFactors {
    let (u, s, vt) = faer_svd(a, false);
    SvdFactors { u, s, vt }
}

/// Full SVD: `u` is `m × m` and `vt` is `n × n`.
pub fn full_svd(a: &CMat) -> SvdFactors {
    let (u, s, vt) = faer_svd(a, true);
    SvdFactors { u, s, vt }
}

/// Thin SVD `U diag(s) Vᵀ` of a real matrix, `s` descending.
pub fn svd_real(a: &RMat) -> (RMat, Vec<f64>, RMat) {
    faer_svd(a, false)
}

/// Singular values in descending order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    to_faer(a).singular_values().expect("svd iteration converges")
}

/// `i`-th largest singular value (1-based), zero when `i` exceeds
/// `min(rows, cols)`.
pub fn sigma(a: &CMat, i: usize) -> f64 {
    singular_values(a).get(i - 1).copied().unwrap_or(0.0)
}

/// 2-norm condition number `σ₁/σ_min`; infinite for rank-deficient input.
pub fn cond2(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone)]
pub struct MinNormSolution {
    pub x: CVec,
    pub rank: usize,
    /// `‖A x − b‖₂`.
    pub residual: f64,
}

/// Minimum-norm least-squares solution `A† b`, with the pseudoinverse
/// truncated at singular values `≤ rank_tol · σ₁`.
pub fn min_norm_solve(a: &CMat, b: &CVec, rank_tol: f64) -> Result<MinNormSolution> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "min_norm_solve: A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let f = svd(a);
    let rank = f.rank(rank_tol);
    let mut x = CVec::zeros(a.ncols());
    for i in 0..rank {
        let coef = f.u.column(i).dotc(b) / f.s[i];
        for (xj, vj) in x.iter_mut().zip(f.vt.row(i).iter()) {
            *xj += coef * vj.conj();
        }
    }
    let residual = (a * &x - b).norm();
    Ok(MinNormSolution { x, rank, residual })
}

/// Moore–Penrose pseudoinverse truncated at `rank_tol · σ₁`.
pub fn pinv(a: &CMat, rank_tol: f64) -> CMat {
    let f = svd(a);
    let rank = f.rank(rank_tol);
    let mut out = CMat::zeros(a.ncols(), a.nrows());
    for i in 0..rank {
        let v = f.vt.row(i).adjoint();
        let u = f.u.column(i).adjoint();
        out += (v * u).unscale(f.s[i]);
    }
    out
}

/// Real counterpart of [`pinv`].
pub fn pinv_real(a: &RMat, rank_tol: f64) -> RMat {
    let (m, n) = a.shape();
    let (u, s, vt) = svd_real(a);
    let mut out = RMat::zeros(n, m);
    let s1 = s.first().copied().unwrap_or(0.0);
    for (i, &si) in s.iter().enumerate() {
        if s1 > 0.0 && si > rank_tol * s1 {
            out += vt.row(i).transpose() * u.column(i).transpose() / si;
        }
    }
    out
}

/// Economy QR of an `n × p` matrix (`n ≥ p`). With `full_q` the returned Q
/// is `n × n` unitary whose first `p` columns span `range(V)`; otherwise Q is
/// `n × p` with orthonormal columns. T is `p × p` upper triangular and
/// `V = Q[:, ..p] T`.
pub fn economy_qr(v: &CMat, full_q: bool) -> Result<(CMat, CMat)> {
    let (n, p) = v.shape();
    if n < p {
        return Err(Error::Dimension(format!("economy_qr needs n >= p, got {n}x{p}")));
    }
    if full_q {
        let mut aug = CMat::zeros(n, p + n);
        aug.view_mut((0, 0), (n, p)).copy_from(v);
        aug.view_mut((0, p), (n, n)).fill_with_identity();
        let qr = aug.qr();
        let q = qr.q();
        let r = qr.r();
        let t = r.view((0, 0), (p, p)).into_owned();
        Ok((q, t))
    } else {
        let qr = v.clone().qr();
        Ok((qr.q(), qr.r()))
    }
}

/// Evaluates `f(M) = X f(D) X⁻¹` from the eigendecomposition `M = X D X⁻¹`.
/// Fails when the eigenvector matrix has a 2-norm condition estimate above
/// `diag_cond_tol` (defective or nearly defective `M`).
pub fn matrix_function<F>(f: F, m: &CMat, diag_cond_tol: f64) -> Result<CMat>
where
    F: Fn(C64) -> C64,
{
    let (x, d) = eigen_decomposition(m)?;
    let cond = cond2(&x);
    if !(cond <= diag_cond_tol) {
        return Err(Error::IllConditionedEigenvectors {
            condition: cond,
            limit: diag_cond_tol,
        });
    }
    let mut xf = x.clone();
    for (j, lam) in d.iter().enumerate() {
        let fl = f(*lam);
        xf.column_mut(j).scale_mut_c(fl);
    }
    let xinv = x
        .try_inverse()
        .ok_or_else(|| Error::Singular("matrix_function eigenvector basis".into()))?;
    Ok(xf * xinv)
}

trait ScaleC {
    fn scale_mut_c(&mut self, s: C64);
}

impl<S> ScaleC for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_c(&mut self, s: C64) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

/// Eigenvectors (unit columns) and eigenvalues of a square complex matrix,
/// from the complex Schur form followed by triangular back-substitution.
pub fn eigen_decomposition(m: &CMat) -> Result<(CMat, Vec<C64>)> {
    let p = m.nrows();
    if p != m.ncols() {
        return Err(Error::Dimension(format!("eigen_decomposition of {}x{}", p, m.ncols())));
    }
    if p == 0 {
        return Ok((CMat::zeros(0, 0), Vec::new()));
    }
    let schur = m.clone().schur();
    let (q, t) = schur.unpack();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * scale;
    let mut y = CMat::zeros(p, p);
    for i in 0..p {
        let lam = t[(i, i)];
        y[(i, i)] = C64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for l in (j + 1)..=i {
                acc += t[(j, l)] * y[(l, i)];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < small {
                den = C64::new(small, 0.0);
            }
            y[(j, i)] = -acc / den;
        }
    }
    let mut x = q * y;
    for mut col in x.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col.unscale_mut(nrm);
        }
    }
    let d = (0..p).map(|i| t[(i, i)]).collect();
    Ok((x, d))
}

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn real_part(a: &CMat) -> RMat {
    a.map(|z| z.re)
}

/// Largest absolute imaginary part relative to the Frobenius norm.
pub fn imag_ratio(a: &CMat) -> f64 {
    let nrm = a.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    a.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / nrm
}

/// `‖A − Aᵀ‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn asymmetry(a: &CMat) -> f64 {
    let nrm = a.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / nrm
}
