//! Penalized objective `f(X) = ‖Σⱼ Xⱼ Wⱼ‖²_F + μ Σⱼ ‖Xⱼ − Fⱼ‖²_F` on a
//! product of coefficient manifolds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ambient::{Ambient, Pattern};
use super::manifold::{Manifold, Point, Tangent};
use crate::error::{Error, Result};
use crate::linalg::{svd_real, CMat, RMat};
use crate::nep::{Coefficient, ResidualBundle, SplitNep};
use crate::structured::StructureSpec;

/// Whether the Riemannian Hessian keeps the curvature term of the
/// fixed-rank manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    #[default]
    Full,
    GaussNewton,
}

#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    manifolds: Vec<Manifold>,
    reference: Vec<Point>,
    /// Real blocks `Wⱼ`, `n × q`.
    w: Vec<RMat>,
    pub mu: f64,
    pub hessian: HessianMode,
}

pub type ProductPoint = Vec<Point>;
pub type ProductTangent = Vec<Tangent>;

/// `[Re A, Im A]`, or `Re A` when the imaginary part is exactly zero.
pub fn real_split(a: &CMat) -> RMat {
    let re = a.map(|z| z.re);
    if a.iter().all(|z| z.im == 0.0) {
        return re;
    }
    let im = a.map(|z| z.im);
    super::manifold::hcat(&re, &im)
}

fn real_dense(c: &Coefficient) -> RMat {
    c.to_dense().map(|z| z.re)
}

/// Manifold and point representing coefficient `c` under `spec`.
pub fn manifold_for(spec: &StructureSpec, c: &Coefficient, n: usize) -> Result<(Manifold, Point)> {
    if !c.is_real(0.0) {
        return Err(Error::NotReal(
            "manifold constraints require real coefficients".into(),
        ));
    }
    spec.validate(n)?;
    match spec {
        StructureSpec::Sparsity(entries) => {
            let pattern = Arc::new(Pattern::new(n, entries));
            let values = match c {
                Coefficient::Sparse(s) => {
                    let mut v = vec![0.0; entries.len()];
                    for (t, &(i, j)) in entries.iter().enumerate() {
                        v[t] = s.get(i, j).re;
                    }
                    v
                }
                other => {
                    let d = real_dense(other);
                    entries.iter().map(|&(i, j)| d[(i, j)]).collect()
                }
            };
            let point = Point::Sparse(values);
            let m = Manifold::Sparse(pattern);
            check_membership(&m, &point, c)?;
            Ok((m, point))
        }
        StructureSpec::ScaledIdentity => {
            let scale = match c {
                Coefficient::Sparse(s) => (0..n).map(|i| s.get(i, i).re).sum::<f64>() / n as f64,
                other => real_dense(other).trace() / n as f64,
            };
            let point = Point::Scalar(scale);
            let m = Manifold::ScaledIdentity { n };
            check_membership(&m, &point, c)?;
            Ok((m, point))
        }
        StructureSpec::FixedRank(r) => {
            let (left, right) = match c {
                Coefficient::LowRank { left, right } => (left.map(|z| z.re), right.map(|z| z.re)),
                other => {
                    let d = real_dense(other);
                    (d, RMat::identity(n, n))
                }
            };
            let point = fixed_rank_point(&left, &right, *r)?;
            let m = Manifold::FixedRank { n, r: *r };
            check_membership(&m, &point, c)?;
            Ok((m, point))
        }
        StructureSpec::Unstructured => Ok((Manifold::Euclidean { n }, Point::Dense(real_dense(c)))),
        StructureSpec::Symmetric => {
            let d = real_dense(c);
            if (&d - d.transpose()).norm() > 1e-12 * d.norm().max(1.0) {
                return Err(Error::NotSymmetric("reference coefficient is not symmetric".into()));
            }
            Ok((Manifold::Symmetric { n }, Point::Dense(d)))
        }
        StructureSpec::Subspace(_) => Err(Error::Structure(
            "explicit subspaces have no manifold representation; use the linear structured solver".into(),
        )),
    }
}

fn check_membership(m: &Manifold, x: &Point, c: &Coefficient) -> Result<()> {
    let norm = c.frobenius_norm();
    let n = m.n();
    let diff = if n <= 400 {
        (m.point_to_dense(x) - real_dense(c)).norm()
    } else {
        // probe with a few columns instead of forming the dense matrices
        let probe = RMat::from_fn(n, 4, |i, j| (((i * 7 + j * 13) % 11) as f64) - 5.0);
        let cp = c.mul_mat(&crate::linalg::to_complex(&probe)).map(|z| z.re);
        (m.point_mul(x, &probe) - cp).norm() / probe.norm() * (n as f64).sqrt()
    };
    if diff > 1e-10 * norm.max(1.0) {
        return Err(Error::Infeasible(format!(
            "reference coefficient does not lie on the {} manifold (distance {diff:.3e})",
            m.name()
        )));
    }
    Ok(())
}

/// Truncated SVD `U S Vᵀ` of `left · rightᵀ` at rank `r`.
pub fn fixed_rank_point(left: &RMat, right: &RMat, r: usize) -> Result<Point> {
    let ql = left.clone().qr();
    let qr = right.clone().qr();
    let core = ql.r() * qr.r().transpose();
    let (cu, sig, cvt) = svd_real(&core);
    if sig.len() < r {
        return Err(Error::RankCollapse { sigma_r: 0.0 });
    }
    let sigma_r = sig[r - 1];
    if !(sigma_r > 1e-14 * sig[0]) {
        return Err(Error::RankCollapse { sigma_r });
    }
    let u = ql.q() * cu.columns(0, r);
    let v = qr.q() * cvt.rows(0, r).transpose();
    let s = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&sig[..r]));
    Ok(Point::FixedRank { u, s, v })
}

impl PenaltyProblem {
    pub fn new(manifolds: Vec<Manifold>, reference: Vec<Point>, w: Vec<RMat>, mu: f64) -> Result<Self> {
        if manifolds.len() != reference.len() || manifolds.len() != w.len() {
            return Err(Error::Dimension(format!(
                "{} manifolds, {} reference points, {} blocks",
                manifolds.len(),
                reference.len(),
                w.len()
            )));
        }
        if !(mu > 0.0) {
            return Err(Error::Config(format!("penalty weight must be positive, got {mu}")));
        }
        Ok(PenaltyProblem {
            manifolds,
            reference,
            w,
            mu,
            hessian: HessianMode::Full,
        })
    }

    /// Builds the problem from the coefficients of `nep`, the residual data
    /// of the approximate pairs and one structure per coefficient.
    pub fn from_nep(nep: &SplitNep, bundle: &ResidualBundle, specs: &[StructureSpec], mu: f64) -> Result<Self> {
        if specs.len() != nep.k() {
            return Err(Error::Dimension(format!(
                "{} structures for {} coefficients",
                specs.len(),
                nep.k()
            )));
        }
        let n = nep.n();
        let mut manifolds = Vec::with_capacity(nep.k());
        let mut reference = Vec::with_capacity(nep.k());
        for (spec, c) in specs.iter().zip(nep.coeffs()) {
            let (m, x) = manifold_for(spec, c, n)?;
            manifolds.push(m);
            reference.push(x);
        }
        let wall = real_split(&bundle.w);
        let w = (0..nep.k()).map(|j| wall.rows(j * n, n).into_owned()).collect();
        PenaltyProblem::new(manifolds, reference, w, mu)
    }

    pub fn manifolds(&self) -> &[Manifold] {
        &self.manifolds
    }

    pub fn reference(&self) -> &[Point] {
        &self.reference
    }

    pub fn w(&self) -> &[RMat] {
        &self.w
    }

    pub fn k(&self) -> usize {
        self.manifolds.len()
    }

    /// `Σⱼ Xⱼ Wⱼ`.
    pub fn residual(&self, x: &[Point]) -> RMat {
        let mut r = RMat::zeros(self.w[0].nrows(), self.w[0].ncols());
        for ((m, xj), wj) in self.manifolds.iter().zip(x).zip(&self.w) {
            r += m.point_mul(xj, wj);
        }
        r
    }

    /// `(Σⱼ ‖Xⱼ − Fⱼ‖²)^{1/2}`.
    pub fn distance(&self, x: &[Point]) -> f64 {
        self.manifolds
            .iter()
            .zip(x)
            .zip(&self.reference)
            .map(|((m, a), b)| m.distance(a, b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn objective(&self, x: &[Point]) -> f64 {
        self.residual(x).norm_squared() + self.mu * self.distance(x).powi(2)
    }

    /// Euclidean gradient, block `j` equal to `2 R Wⱼᵀ + 2μ(Xⱼ − Fⱼ)`.
    pub fn egrad(&self, x: &[Point]) -> Vec<Ambient> {
        let r2 = self.residual(x) * 2.0;
        self.egrad_with(x, &r2)
    }

    fn egrad_with(&self, x: &[Point], r2: &RMat) -> Vec<Ambient> {
        self.manifolds
            .iter()
            .zip(x)
            .zip(&self.reference)
            .zip(&self.w)
            .map(|(((m, xj), fj), wj)| {
                let diff = m.point_to_ambient(xj).add(m.point_to_ambient(fj).scale(-1.0));
                Ambient::lowrank(r2.clone(), wj.clone()).add(diff.scale(2.0 * self.mu))
            })
            .collect()
    }

    /// Euclidean Hessian applied to `e`: block `j` equal to
    /// `2 (Σᵢ Eᵢ Wᵢ) Wⱼᵀ + 2μ Eⱼ`.
    pub fn ehess_vec(&self, e: &[Ambient]) -> Vec<Ambient> {
        let mut ew = RMat::zeros(self.w[0].nrows(), self.w[0].ncols());
        for (ej, wj) in e.iter().zip(&self.w) {
            ew += ej.mul(wj);
        }
        ew *= 2.0;
        e.iter()
            .zip(&self.w)
            .map(|(ej, wj)| Ambient::lowrank(ew.clone(), wj.clone()).add(ej.clone().scale(2.0 * self.mu)))
            .collect()
    }

    pub fn rgrad(&self, x: &[Point], egrad: &[Ambient]) -> ProductTangent {
        self.manifolds
            .iter()
            .zip(x)
            .zip(egrad)
            .map(|((m, xj), g)| m.proj(xj, g))
            .collect()
    }

    /// Riemannian Hessian: projected Euclidean Hessian plus, in
    /// [`HessianMode::Full`], the curvature term of curved factors.
    pub fn rhess(&self, x: &[Point], egrad: &[Ambient], xi: &[Tangent]) -> ProductTangent {
        let e: Vec<Ambient> = self
            .manifolds
            .iter()
            .zip(x)
            .zip(xi)
            .map(|((m, xj), t)| m.tangent_to_ambient(xj, t))
            .collect();
        let he = self.ehess_vec(&e);
        self.manifolds
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let mut h = m.proj(&x[j], &he[j]);
                if self.hessian == HessianMode::Full {
                    if let Some(c) = m.weingarten(&x[j], &egrad[j], &xi[j]) {
                        h.axpy(1.0, &c);
                    }
                }
                h
            })
            .collect()
    }

    pub fn inner(&self, a: &[Tangent], b: &[Tangent]) -> f64 {
        self.manifolds.iter().zip(a).zip(b).map(|((m, s), t)| m.inner(s, t)).sum()
    }

    pub fn retract(&self, x: &[Point], t: &[Tangent]) -> Result<ProductPoint> {
        self.manifolds.iter().zip(x).zip(t).map(|((m, p), v)| m.retract(p, v)).collect()
    }

    /// Perturbations `Xⱼ − Fⱼ` as coefficients.
    pub fn perturbations(&self, x: &[Point]) -> Vec<Coefficient> {
        self.manifolds
            .iter()
            .zip(x)
            .zip(&self.reference)
            .map(|((m, a), b)| point_difference(m, a, b))
            .collect()
    }
}

fn point_difference(m: &Manifold, a: &Point, b: &Point) -> Coefficient {
    use crate::linalg::{to_complex, SparseMatrix};
    match (m, a, b) {
        (Manifold::Sparse(p), Point::Sparse(x), Point::Sparse(y)) => {
            let trip: Vec<(usize, usize, crate::linalg::C64)> = p
                .entries()
                .zip(x.iter().zip(y))
                .map(|((i, j), (u, v))| (i, j, crate::linalg::c64(u - v, 0.0)))
                .collect();
            Coefficient::Sparse(SparseMatrix::from_triplets(p.n(), p.n(), &trip))
        }
        (_, Point::Scalar(x), Point::Scalar(y)) => Coefficient::Sparse(SparseMatrix::identity(m.n()).scaled(crate::linalg::c64(x - y, 0.0))),
        (_, Point::FixedRank { u, s, v }, Point::FixedRank { u: u2, s: s2, v: v2 }) => Coefficient::LowRank {
            left: to_complex(&super::manifold::hcat(&(u * s), &(u2 * s2 * -1.0))),
            right: to_complex(&super::manifold::hcat(v, v2)),
        },
        (_, Point::Dense(x), Point::Dense(y)) => Coefficient::Dense(to_complex(&(x - y))),
        _ => panic!("points from different manifolds"),
    }
}
