//! Split-form nonlinear eigenvalue problems `F(λ) = Σⱼ fⱼ(λ) Fⱼ`, the
//! approximate eigenpair sets they are paired with, and the residual objects
//! every backward-error formula starts from.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::{matrix_function, BandLu, CMat, CVec, SparseMatrix, C64, DEFAULT_DIAG_COND_TOL};

type ScalarMap = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

/// Scalar function `fⱼ` of a split-form term together with its derivative.
#[derive(Clone)]
pub enum ScalarFn {
    One,
    Lambda,
    Lambda2,
    /// `e^{-λ}`
    ExpNeg,
    /// `e^{-2λ}`
    ExpNeg2,
    /// `Σᵢ cᵢ λⁱ`, coefficients in increasing degree.
    Polynomial(Vec<C64>),
    /// `e^{rate·λ}`
    ScaledExp(f64),
    Custom {
        name: String,
        f: ScalarMap,
        df: ScalarMap,
    },
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl ScalarFn {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(C64) -> C64 + Send + Sync + 'static,
        df: impl Fn(C64) -> C64 + Send + Sync + 'static,
    ) -> Self {
        ScalarFn::Custom {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScalarFn::One => "one".into(),
            ScalarFn::Lambda => "lambda".into(),
            ScalarFn::Lambda2 => "lambda2".into(),
            ScalarFn::ExpNeg => "exp_neg".into(),
            ScalarFn::ExpNeg2 => "exp_neg2".into(),
            ScalarFn::Polynomial(c) => format!("polynomial{c:?}"),
            ScalarFn::ScaledExp(r) => format!("exp({r}*lambda)"),
            ScalarFn::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        match self {
            ScalarFn::One => C64::new(1.0, 0.0),
            ScalarFn::Lambda => z,
            ScalarFn::Lambda2 => z * z,
            ScalarFn::ExpNeg => (-z).exp(),
            ScalarFn::ExpNeg2 => (-2.0 * z).exp(),
            ScalarFn::Polynomial(c) => c.iter().rev().fold(C64::new(0.0, 0.0), |acc, ci| acc * z + ci),
            ScalarFn::ScaledExp(r) => (*r * z).exp(),
            ScalarFn::Custom { f, .. } => f(z),
        }
    }

    pub fn deriv(&self, z: C64) -> C64 {
        match self {
            ScalarFn::One => C64::new(0.0, 0.0),
            ScalarFn::Lambda => C64::new(1.0, 0.0),
            ScalarFn::Lambda2 => 2.0 * z,
            ScalarFn::ExpNeg => -(-z).exp(),
            ScalarFn::ExpNeg2 => -2.0 * (-2.0 * z).exp(),
            ScalarFn::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(C64::new(0.0, 0.0), |acc, (i, ci)| acc * z + ci * i as f64),
            ScalarFn::ScaledExp(r) => *r * (*r * z).exp(),
            ScalarFn::Custom { df, .. } => df(z),
        }
    }

    /// Whether `f` maps reals to reals (needed for real arithmetic paths).
    pub fn is_real(&self) -> bool {
        match self {
            ScalarFn::Polynomial(c) => c.iter().all(|x| x.im == 0.0),
            ScalarFn::Custom { f, .. } => f(C64::new(0.37, 0.0)).im == 0.0,
            _ => true,
        }
    }
}

/// A constant matrix coefficient, stored in whichever form keeps products
/// with thin blocks cheap.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Dense(CMat),
    Sparse(SparseMatrix),
    /// `left · rightᵀ`
    LowRank { left: CMat, right: CMat },
}

impl Coefficient {
    pub fn identity(n: usize) -> Self {
        Coefficient::Sparse(SparseMatrix::identity(n))
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Coefficient::Dense(a) => a.shape(),
            Coefficient::Sparse(s) => (s.nrows(), s.ncols()),
            Coefficient::LowRank { left, right } => (left.nrows(), right.nrows()),
        }
    }

    pub fn mul_mat(&self, x: &CMat) -> CMat {
        match self {
            Coefficient::Dense(a) => a * x,
            Coefficient::Sparse(s) => s.mul_mat(x),
            Coefficient::LowRank { left, right } => left * (right.transpose() * x),
        }
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            Coefficient::Dense(a) => a.clone(),
            Coefficient::Sparse(s) => s.to_dense(),
            Coefficient::LowRank { left, right } => left * right.transpose(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Coefficient::Dense(a) => a.norm(),
            Coefficient::Sparse(s) => s.frobenius_norm(),
            Coefficient::LowRank { left, right } => lowrank_frobenius(left, right),
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        match self {
            Coefficient::Dense(a) => Coefficient::Dense(a * c),
            Coefficient::Sparse(s) => Coefficient::Sparse(s.scaled(c)),
            Coefficient::LowRank { left, right } => Coefficient::LowRank {
                left: left * c,
                right: right.clone(),
            },
        }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        match self {
            Coefficient::Dense(a) => a.iter().all(|z| z.im.abs() <= tol * a.norm()),
            Coefficient::Sparse(s) => s.is_real(tol),
            Coefficient::LowRank { left, right } => {
                let l = left.norm().max(f64::MIN_POSITIVE);
                let r = right.norm().max(f64::MIN_POSITIVE);
                left.iter().all(|z| z.im.abs() <= tol * l) && right.iter().all(|z| z.im.abs() <= tol * r)
            }
        }
    }

    /// `‖A − Aᵀ‖_F`.
    pub fn asymmetry_norm(&self) -> f64 {
        match self {
            Coefficient::Sparse(s) => s.add_scaled(&s.transpose(), C64::new(-1.0, 0.0)).frobenius_norm(),
            other => {
                let d = other.to_dense();
                (&d - d.transpose()).norm()
            }
        }
    }
}

/// `‖A Bᵀ‖_F` from the triangular factors of thin QRs of `A` and `B`.
pub(crate) fn lowrank_frobenius(a: &CMat, b: &CMat) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let ra = a.clone().qr().r();
    let rb = b.clone().qr().r();
    (ra * rb.transpose()).norm()
}

/// Split-form problem. Weights, when given, are folded into the stored
/// coefficients so downstream formulas never see them.
#[derive(Debug, Clone)]
pub struct SplitNep {
    n: usize,
    coeffs: Vec<Coefficient>,
    funcs: Vec<ScalarFn>,
    weights: Vec<f64>,
}

impl SplitNep {
    pub fn new(coeffs: Vec<Coefficient>, funcs: Vec<ScalarFn>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Dimension("split form needs at least one term".into()));
        }
        if coeffs.len() != funcs.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients but {} scalar functions",
                coeffs.len(),
                funcs.len()
            )));
        }
        let n = coeffs[0].shape().0;
        for (j, c) in coeffs.iter().enumerate() {
            if c.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "coefficient {j} is {:?}, expected {n}x{n}",
                    c.shape()
                )));
            }
        }
        let k = coeffs.len();
        Ok(SplitNep {
            n,
            coeffs,
            funcs,
            weights: vec![1.0; k],
        })
    }

    /// Folds positive weights into the coefficients: `Fⱼ ← wⱼ Fⱼ`.
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.k() {
            return Err(Error::Dimension(format!("{} weights for {} terms", weights.len(), self.k())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Config(format!("weights must be positive, got {w}")));
        }
        for ((c, w), stored) in self.coeffs.iter_mut().zip(weights).zip(self.weights.iter_mut()) {
            *c = c.scaled(C64::new(*w, 0.0));
            *stored *= w;
        }
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Coefficient] {
        &self.coeffs
    }

    pub fn funcs(&self) -> &[ScalarFn] {
        &self.funcs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same scalar functions, new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<Coefficient>) -> Result<Self> {
        let mut out = SplitNep::new(coeffs, self.funcs.clone())?;
        out.weights = self.weights.clone();
        Ok(out)
    }

    pub fn f_values(&self, lambda: C64) -> Vec<C64> {
        self.funcs.iter().map(|f| f.eval(lambda)).collect()
    }

    pub fn coeff_frobenius(&self) -> f64 {
        self.coeffs.iter().map(|c| c.frobenius_norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Dense `F(λ)`.
    pub fn evaluate(&self, lambda: C64) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for (c, f) in self.coeffs.iter().zip(&self.funcs) {
            let fl = f.eval(lambda);
            accumulate(&mut out, c, fl);
        }
        out
    }

    /// Dense `F'(λ)`.
    pub fn evaluate_derivative(&self, lambda: C64) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for (c, f) in self.coeffs.iter().zip(&self.funcs) {
            accumulate(&mut out, c, f.deriv(lambda));
        }
        out
    }

    /// `F(λ) X` without forming `F(λ)`.
    pub fn apply(&self, lambda: C64, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n, x.ncols());
        for (c, f) in self.coeffs.iter().zip(&self.funcs) {
            out += c.mul_mat(x) * f.eval(lambda);
        }
        out
    }

    /// `F'(λ) X`.
    pub fn apply_derivative(&self, lambda: C64, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n, x.ncols());
        for (c, f) in self.coeffs.iter().zip(&self.funcs) {
            out += c.mul_mat(x) * f.deriv(lambda);
        }
        out
    }

    /// `‖F(λ)‖_F`, computed without densifying when no dense coefficient is
    /// present.
    pub fn frobenius_at(&self, lambda: C64) -> f64 {
        let parts = self.split_parts(lambda);
        if let Some(mut d) = parts.dense {
            if let Some(s) = &parts.sparse {
                d += s.to_dense();
            }
            if let Some((a, b)) = &parts.lowrank {
                d += a * b.transpose();
            }
            return d.norm();
        }
        let s2 = parts.sparse.as_ref().map_or(0.0, |s| s.frobenius_norm().powi(2));
        let (l2, cross) = match &parts.lowrank {
            None => (0.0, 0.0),
            Some((a, b)) => {
                let l = lowrank_frobenius(a, b).powi(2);
                let cross = parts.sparse.as_ref().map_or(0.0, |s| {
                    s.iter()
                        .map(|(i, j, v)| {
                            let lij: C64 = (0..a.ncols()).map(|c| a[(i, c)] * b[(j, c)]).sum();
                            (v.conj() * lij).re
                        })
                        .sum::<f64>()
                });
                (l, cross)
            }
        };
        (s2 + l2 + 2.0 * cross).max(0.0).sqrt()
    }

    fn split_parts(&self, lambda: C64) -> SplitParts {
        let mut parts = SplitParts::default();
        for (c, f) in self.coeffs.iter().zip(&self.funcs) {
            let fl = f.eval(lambda);
            match c {
                Coefficient::Dense(a) => {
                    let d = parts.dense.get_or_insert_with(|| CMat::zeros(self.n, self.n));
                    *d += a * fl;
                }
                Coefficient::Sparse(s) => {
                    parts.sparse = Some(match parts.sparse.take() {
                        None => s.scaled(fl),
                        Some(acc) => acc.add_scaled(s, fl),
                    });
                }
                Coefficient::LowRank { left, right } => {
                    let (a, b) = match parts.lowrank.take() {
                        None => (left * fl, right.clone()),
                        Some((a, b)) => (hstack(&a, &(left * fl)), hstack(&b, right)),
                    };
                    parts.lowrank = Some((a, b));
                }
            }
        }
        parts
    }

    /// Factorization of `F(λ)` for repeated solves. Banded LU plus a
    /// Woodbury correction is used when no dense term is present and the
    /// sparse part is narrow-banded; dense LU otherwise.
    pub fn factor(&self, lambda: C64) -> Result<Factorization> {
        let parts = self.split_parts(lambda);
        let banded = parts.dense.is_none()
            && parts.sparse.as_ref().is_some_and(|s| {
                let (lo, hi) = s.bandwidth();
                (2 * lo + hi + 1) * 4 < self.n
            });
        if banded {
            let s = parts.sparse.unwrap();
            let lu = BandLu::factor(&s)?;
            let woodbury = match parts.lowrank {
                None => None,
                Some((a, b)) => {
                    let sa = lu.solve_mat(&a);
                    let cap = CMat::identity(a.ncols(), a.ncols()) + b.transpose() * &sa;
                    let cap_lu = cap.lu();
                    if cap_lu.is_invertible() {
                        Some((sa, b, cap_lu))
                    } else {
                        return Err(Error::Singular(format!("Woodbury capacitance at lambda = {lambda}")));
                    }
                }
            };
            return Ok(Factorization::Banded { lu, woodbury });
        }
        let mut d = parts.dense.unwrap_or_else(|| CMat::zeros(self.n, self.n));
        if let Some(s) = &parts.sparse {
            d += s.to_dense();
        }
        if let Some((a, b)) = &parts.lowrank {
            d += a * b.transpose();
        }
        let lu = d.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(format!("F(lambda) at lambda = {lambda}")));
        }
        Ok(Factorization::Dense(lu))
    }
}

#[derive(Default)]
struct SplitParts {
    dense: Option<CMat>,
    sparse: Option<SparseMatrix>,
    lowrank: Option<(CMat, CMat)>,
}

fn accumulate(out: &mut CMat, c: &Coefficient, s: C64) {
    match c {
        Coefficient::Dense(a) => *out += a * s,
        Coefficient::Sparse(sp) => {
            for (i, j, v) in sp.iter() {
                out[(i, j)] += v * s;
            }
        }
        Coefficient::LowRank { left, right } => *out += (left * s) * right.transpose(),
    }
}

pub fn hstack(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub enum Factorization {
    Dense(LU<C64, Dyn, Dyn>),
    Banded {
        lu: BandLu,
        woodbury: Option<(CMat, CMat, LU<C64, Dyn, Dyn>)>,
    },
}

impl Factorization {
    pub fn solve(&self, b: &CVec) -> CVec {
        match self {
            Factorization::Dense(lu) => lu.solve(b).expect("factorization checked invertible"),
            Factorization::Banded { lu, woodbury } => {
                let y = lu.solve_vec(b);
                match woodbury {
                    None => y,
                    Some((sa, bf, cap)) => {
                        let t = cap.solve(&(bf.transpose() * &y)).expect("capacitance checked invertible");
                        y - sa * t
                    }
                }
            }
        }
    }
}

/// `p` approximate eigenvalues and the matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenpairSet {
    lambdas: Vec<C64>,
    v: CMat,
    normalized: bool,
}

impl EigenpairSet {
    pub fn new(lambdas: Vec<C64>, v: CMat) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Dimension("eigenpair set needs p >= 1".into()));
        }
        if lambdas.len() != v.ncols() {
            return Err(Error::Dimension(format!(
                "{} eigenvalues but V has {} columns",
                lambdas.len(),
                v.ncols()
            )));
        }
        let normalized = v.column_iter().all(|c| (c.norm() - 1.0).abs() <= 1e-12);
        Ok(EigenpairSet { lambdas, v, normalized })
    }

    /// Copy with unit-norm columns, plus the original column norms.
    pub fn normalize(&self) -> (EigenpairSet, Vec<f64>) {
        let mut v = self.v.clone();
        let mut scales = Vec::with_capacity(v.ncols());
        for mut c in v.column_iter_mut() {
            let nrm = c.norm();
            scales.push(nrm);
            if nrm > 0.0 {
                c.unscale_mut(nrm);
            }
        }
        (
            EigenpairSet {
                lambdas: self.lambdas.clone(),
                v,
                normalized: true,
            },
            scales,
        )
    }

    pub fn p(&self) -> usize {
        self.lambdas.len()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_real(&self) -> bool {
        self.lambdas.iter().all(|l| l.im == 0.0) && self.v.iter().all(|z| z.im == 0.0)
    }
}

/// `(V, M)` with `Σⱼ Fⱼ V fⱼ(M) ≈ 0`.
#[derive(Debug, Clone)]
pub struct InvariantPair {
    pub v: CMat,
    pub m: CMat,
}

impl InvariantPair {
    pub fn new(v: CMat, m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() != v.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "invariant pair: V is {:?}, M is {:?}",
                v.shape(),
                m.shape()
            )));
        }
        Ok(InvariantPair { v, m })
    }
}

/// `R = Σⱼ Fⱼ V fⱼ(Λ)`, `G[i, j] = fⱼ(λ̂ᵢ)` and `W = [V f₁(Λ); …; V f_k(Λ)]`.
#[derive(Debug, Clone)]
pub struct ResidualBundle {
    pub r: CMat,
    pub g: CMat,
    pub w: CMat,
    pub r_norm: f64,
    pub col_norms: Vec<f64>,
}

impl ResidualBundle {
    /// Block `j` of `W`, i.e. `V fⱼ(Λ)`.
    pub fn w_block(&self, j: usize) -> CMat {
        let n = self.r.nrows();
        self.w.rows(j * n, n).into_owned()
    }
}

pub fn residual_bundle(nep: &SplitNep, pairs: &EigenpairSet) -> Result<ResidualBundle> {
    if pairs.n() != nep.n() {
        return Err(Error::Dimension(format!(
            "eigenvectors have length {}, problem dimension is {}",
            pairs.n(),
            nep.n()
        )));
    }
    let (n, p, k) = (nep.n(), pairs.p(), nep.k());
    let g = CMat::from_fn(p, k, |i, j| nep.funcs()[j].eval(pairs.lambdas()[i]));
    let mut w = CMat::zeros(k * n, p);
    let mut r = CMat::zeros(n, p);
    for (j, c) in nep.coeffs().iter().enumerate() {
        let mut wj = pairs.v().clone();
        for (i, mut col) in wj.column_iter_mut().enumerate() {
            let gij = g[(i, j)];
            col.iter_mut().for_each(|z| *z *= gij);
        }
        r += c.mul_mat(&wj);
        w.rows_mut(j * n, n).copy_from(&wj);
    }
    Ok(bundle(r, g, w))
}

fn bundle(r: CMat, g: CMat, w: CMat) -> ResidualBundle {
    let col_norms = r.column_iter().map(|c| c.norm()).collect();
    ResidualBundle {
        r_norm: r.norm(),
        r,
        g,
        w,
        col_norms,
    }
}

/// Residual of an invariant pair. `g` holds `Ĝ = [f₁(M)ᵀ ⋯ f_k(M)ᵀ]` and
/// `w` the stacked blocks `V fⱼ(M)`.
pub fn invariant_residual(nep: &SplitNep, pair: &InvariantPair) -> Result<ResidualBundle> {
    if pair.v.nrows() != nep.n() {
        return Err(Error::Dimension(format!(
            "invariant pair V has {} rows, problem dimension is {}",
            pair.v.nrows(),
            nep.n()
        )));
    }
    let (n, p, k) = (nep.n(), pair.m.nrows(), nep.k());
    let mut g = CMat::zeros(p, k * p);
    let mut w = CMat::zeros(k * n, p);
    let mut r = CMat::zeros(n, p);
    for (j, (c, f)) in nep.coeffs().iter().zip(nep.funcs()).enumerate() {
        let fm = matrix_function(|z| f.eval(z), &pair.m, DEFAULT_DIAG_COND_TOL)?;
        g.columns_mut(j * p, p).copy_from(&fm.transpose());
        let wj = &pair.v * &fm;
        r += c.mul_mat(&wj);
        w.rows_mut(j * n, n).copy_from(&wj);
    }
    Ok(bundle(r, g, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::khatri_rao_t;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_cmat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMat {
        CMat::from_fn(m, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_nep(rng: &mut ChaCha8Rng, n: usize) -> SplitNep {
        SplitNep::new(
            vec![
                Coefficient::Dense(rand_cmat(rng, n, n)),
                Coefficient::Dense(rand_cmat(rng, n, n)),
                Coefficient::Dense(rand_cmat(rng, n, n)),
            ],
            vec![ScalarFn::One, ScalarFn::Lambda2, ScalarFn::ExpNeg],
        )
        .unwrap()
    }

    /// Neumaier-compensated sum of complex terms.
    fn compensated_sum(terms: &[C64]) -> C64 {
        let part = |xs: Vec<f64>| {
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for x in xs {
                let t = s + x;
                c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
                s = t;
            }
            s + c
        };
        C64::new(part(terms.iter().map(|z| z.re).collect()), part(terms.iter().map(|z| z.im).collect()))
    }

    #[test]
    fn scalar_fn_derivatives_match_differences() {
        let z = C64::new(0.3, -0.7);
        let h = 1e-6;
        for f in [
            ScalarFn::One,
            ScalarFn::Lambda,
            ScalarFn::Lambda2,
            ScalarFn::ExpNeg,
            ScalarFn::ExpNeg2,
            ScalarFn::Polynomial(vec![C64::new(1.0, 0.0), C64::new(0.0, -2.0), C64::new(3.0, 0.0)]),
            ScalarFn::ScaledExp(-0.5),
        ] {
            let fd = (f.eval(z + h) - f.eval(z - h)) / (2.0 * h);
            assert!((fd - f.deriv(z)).norm() < 1e-8, "{}", f.name());
        }
    }

    #[test]
    fn single_constant_term_evaluates_to_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let a = rand_cmat(&mut rng, 4, 4);
        let nep = SplitNep::new(vec![Coefficient::Dense(a.clone())], vec![ScalarFn::One]).unwrap();
        assert_eq!(nep.evaluate(C64::new(3.0, 1.0)), a);
    }

    #[test]
    fn evaluate_matches_compensated_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nep = random_nep(&mut rng, 5);
        let lam = C64::new(0.4, 0.9);
        let f = nep.evaluate(lam);
        let dense: Vec<CMat> = nep.coeffs().iter().map(|c| c.to_dense()).collect();
        let fv = nep.f_values(lam);
        for i in 0..5 {
            for j in 0..5 {
                let terms: Vec<C64> = dense.iter().zip(&fv).map(|(a, fl)| a[(i, j)] * fl).collect();
                assert!((f[(i, j)] - compensated_sum(&terms)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn weights_fold_into_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let nep = random_nep(&mut rng, 4);
        let lam = C64::new(0.1, 0.2);
        let weighted = nep.clone().with_weights(&[2.0, 1.0, 0.5]).unwrap();
        let fv = nep.f_values(lam);
        let want: CMat = nep
            .coeffs()
            .iter()
            .zip(&fv)
            .zip([2.0, 1.0, 0.5])
            .map(|((c, f), w)| c.to_dense() * (*f * w))
            .fold(CMat::zeros(4, 4), |a, b| a + b);
        assert!((weighted.evaluate(lam) - want).norm() < 1e-13);
        assert!(nep.with_weights(&[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn frobenius_at_handles_sparse_and_lowrank_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 30;
        let tri = SparseMatrix::from_real_triplets(
            n,
            n,
            &(0..n)
                .flat_map(|i| {
                    let mut v = vec![(i, i, -2.0)];
                    if i + 1 < n {
                        v.push((i, i + 1, 1.0));
                        v.push((i + 1, i, 1.0));
                    }
                    v
                })
                .collect::<Vec<_>>(),
        );
        let u = rand_cmat(&mut rng, n, 2);
        let nep = SplitNep::new(
            vec![
                Coefficient::Sparse(tri),
                Coefficient::LowRank { left: -u.clone(), right: u },
                Coefficient::identity(n),
            ],
            vec![ScalarFn::One, ScalarFn::Lambda, ScalarFn::Lambda2],
        )
        .unwrap();
        let lam = C64::new(-0.3, 0.8);
        let dense = nep.evaluate(lam).norm();
        assert!((nep.frobenius_at(lam) - dense).abs() < 1e-12 * dense);
        // banded + Woodbury solve agrees with the dense operator
        let fac = nep.factor(lam).unwrap();
        assert!(matches!(fac, Factorization::Banded { .. }));
        let b = rand_cmat(&mut rng, n, 1).column(0).into_owned();
        let x = fac.solve(&b);
        assert!((nep.evaluate(lam) * x - &b).norm() < 1e-10 * b.norm());
    }

    #[test]
    fn residual_bundle_basic_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let nep = random_nep(&mut rng, 6);
        let lambdas = vec![C64::new(0.5, 0.1), C64::new(-0.2, 0.3)];
        let pairs = EigenpairSet::new(lambdas.clone(), rand_cmat(&mut rng, 6, 2)).unwrap();
        let b = residual_bundle(&nep, &pairs).unwrap();
        for (i, lam) in lambdas.iter().enumerate() {
            let col = nep.evaluate(*lam) * pairs.v().column(i);
            assert!((b.r.column(i) - col).norm() < 1e-13);
        }
        assert!((b.r_norm - b.r.norm()).abs() < 1e-15);
        // Wᵀ equals the Khatri–Rao transpose product of G and Vᵀ
        let m = khatri_rao_t(&b.g, &pairs.v().transpose()).unwrap();
        assert!((m - b.w.transpose()).norm() < 1e-14);
        // linearity in the coefficients
        let scaled = nep
            .with_coeffs(nep.coeffs().iter().map(|c| c.scaled(C64::new(3.0, 0.0))).collect())
            .unwrap();
        let b3 = residual_bundle(&scaled, &pairs).unwrap();
        assert!((b3.r - &b.r * C64::new(3.0, 0.0)).norm() < 1e-13 * b.r_norm);
        let bad = EigenpairSet::new(lambdas, rand_cmat(&mut rng, 5, 2)).unwrap();
        assert!(residual_bundle(&nep, &bad).is_err());
    }

    #[test]
    fn invariant_residual_reduces_to_eigenpairs_for_diagonal_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let nep = random_nep(&mut rng, 5);
        let lambdas = vec![C64::new(0.5, 0.1), C64::new(-0.2, 0.3), C64::new(1.0, 0.0)];
        let v = rand_cmat(&mut rng, 5, 3);
        let pairs = EigenpairSet::new(lambdas.clone(), v.clone()).unwrap();
        let m = CMat::from_diagonal(&CVec::from_vec(lambdas));
        let inv = invariant_residual(&nep, &InvariantPair::new(v.clone(), m).unwrap()).unwrap();
        let b = residual_bundle(&nep, &pairs).unwrap();
        assert!((inv.r - &b.r).norm() < 1e-12 * b.r_norm);
        let zero = invariant_residual(&nep, &InvariantPair::new(CMat::zeros(5, 3), CMat::identity(3, 3)).unwrap())
            .unwrap();
        assert_eq!(zero.r_norm, 0.0);
    }

    #[test]
    fn invariant_residual_similarity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let nep = random_nep(&mut rng, 6);
        let v = rand_cmat(&mut rng, 6, 3);
        let m = rand_cmat(&mut rng, 3, 3);
        let x = CMat::identity(3, 3) + rand_cmat(&mut rng, 3, 3) * C64::new(0.3, 0.0);
        let xinv = x.clone().try_inverse().unwrap();
        let a = invariant_residual(&nep, &InvariantPair::new(v.clone(), m.clone()).unwrap()).unwrap();
        let b = invariant_residual(&nep, &InvariantPair::new(&v * &x, &xinv * &m * &x).unwrap()).unwrap();
        assert!((&a.r * &x - &b.r).norm() <= 1e-10 * a.r_norm.max(1.0));
    }

    #[test]
    fn real_invariant_pair_with_conjugate_eigenvalues_gives_real_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let n = 5;
        let real = |rng: &mut ChaCha8Rng| CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        let nep = SplitNep::new(
            vec![Coefficient::Dense(real(&mut rng)), Coefficient::Dense(real(&mut rng))],
            vec![ScalarFn::One, ScalarFn::ExpNeg],
        )
        .unwrap();
        // rotation-like block: eigenvalues 0.3 ± 0.8i
        let m = CMat::from_row_slice(2, 2, &[C64::new(0.3, 0.0), C64::new(0.8, 0.0), C64::new(-0.8, 0.0), C64::new(0.3, 0.0)]);
        let v = CMat::from_fn(n, 2, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        let inv = invariant_residual(&nep, &InvariantPair::new(v.clone(), m).unwrap()).unwrap();
        assert!(inv.r.iter().all(|z| z.im.abs() < 1e-12 * inv.r_norm));
        // complex diagonal route: M = X D X⁻¹ with eigenvalues 0.3 ± 0.8i
        let d = [C64::new(0.3, -0.8), C64::new(0.3, 0.8)];
        let x = CMat::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0)]);
        let pairs = EigenpairSet::new(d.to_vec(), &v * &x).unwrap();
        let rb = residual_bundle(&nep, &pairs).unwrap();
        let xinv = x.try_inverse().unwrap();
        assert!((rb.r * xinv - &inv.r).norm() < 1e-12 * inv.r_norm);
    }
}
