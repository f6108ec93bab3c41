//! Embedded submanifolds of `ℝⁿˣⁿ` used as coefficient constraints.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::ambient::{Ambient, Pattern};
use crate::error::{Error, Result};
use crate::linalg::{svd_real, RMat};

#[derive(Debug, Clone)]
pub enum Manifold {
    /// Matrices supported on a fixed pattern.
    Sparse(Arc<Pattern>),
    /// `{cI : c ∈ ℝ}`.
    ScaledIdentity { n: usize },
    /// Matrices of rank exactly `r`, stored as `U S Vᵀ`.
    FixedRank { n: usize, r: usize },
    /// All of `ℝⁿˣⁿ`, stored densely.
    Euclidean { n: usize },
    /// Symmetric matrices, stored densely.
    Symmetric { n: usize },
}

#[derive(Debug, Clone)]
pub enum Point {
    Sparse(Vec<f64>),
    Scalar(f64),
    /// `U S Vᵀ` with orthonormal `U`, `V` and invertible `S`.
    FixedRank { u: RMat, s: RMat, v: RMat },
    Dense(RMat),
}

#[derive(Debug, Clone)]
pub enum Tangent {
    Sparse(Vec<f64>),
    Scalar(f64),
    /// `U M Vᵀ + Up Vᵀ + U Vpᵀ` with `UᵀUp = 0`, `VᵀVp = 0`.
    FixedRank { m: RMat, up: RMat, vp: RMat },
    Dense(RMat),
}

impl Tangent {
    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tangent) {
        match (self, other) {
            (Tangent::Sparse(a), Tangent::Sparse(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += alpha * y),
            (Tangent::Scalar(a), Tangent::Scalar(b)) => *a += alpha * b,
            (Tangent::FixedRank { m, up, vp }, Tangent::FixedRank { m: m2, up: up2, vp: vp2 }) => {
                *m += m2 * alpha;
                *up += up2 * alpha;
                *vp += vp2 * alpha;
            }
            (Tangent::Dense(a), Tangent::Dense(b)) => *a += b * alpha,
            _ => panic!("tangent vectors from different manifolds"),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Tangent {
        let mut t = self.zeroed();
        t.axpy(alpha, self);
        t
    }

    pub fn zeroed(&self) -> Tangent {
        match self {
            Tangent::Sparse(a) => Tangent::Sparse(vec![0.0; a.len()]),
            Tangent::Scalar(_) => Tangent::Scalar(0.0),
            Tangent::FixedRank { m, up, vp } => Tangent::FixedRank {
                m: RMat::zeros(m.nrows(), m.ncols()),
                up: RMat::zeros(up.nrows(), up.ncols()),
                vp: RMat::zeros(vp.nrows(), vp.ncols()),
            },
            Tangent::Dense(a) => Tangent::Dense(RMat::zeros(a.nrows(), a.ncols())),
        }
    }
}

fn sym(a: RMat) -> RMat {
    (&a + a.transpose()) * 0.5
}

impl Manifold {
    pub fn n(&self) -> usize {
        match self {
            Manifold::Sparse(p) => p.n(),
            Manifold::ScaledIdentity { n }
            | Manifold::FixedRank { n, .. }
            | Manifold::Euclidean { n }
            | Manifold::Symmetric { n } => *n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Manifold::Sparse(_) => "sparse",
            Manifold::ScaledIdentity { .. } => "scaled-identity",
            Manifold::FixedRank { .. } => "fixed-rank",
            Manifold::Euclidean { .. } => "euclidean",
            Manifold::Symmetric { .. } => "symmetric",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Manifold::Sparse(p) => p.len(),
            Manifold::ScaledIdentity { .. } => 1,
            Manifold::FixedRank { n, r } => (2 * n - r) * r,
            Manifold::Euclidean { n } => n * n,
            Manifold::Symmetric { n } => n * (n + 1) / 2,
        }
    }

    /// Frobenius inner product of two tangent vectors.
    pub fn inner(&self, a: &Tangent, b: &Tangent) -> f64 {
        match (a, b) {
            (Tangent::Sparse(x), Tangent::Sparse(y)) => x.iter().zip(y).map(|(p, q)| p * q).sum(),
            (Tangent::Scalar(x), Tangent::Scalar(y)) => self.n() as f64 * x * y,
            (Tangent::FixedRank { m, up, vp }, Tangent::FixedRank { m: m2, up: up2, vp: vp2 }) => {
                m.dot(m2) + up.dot(up2) + vp.dot(vp2)
            }
            (Tangent::Dense(x), Tangent::Dense(y)) => x.dot(y),
            _ => panic!("tangent vectors from different manifolds"),
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x`.
    pub fn proj(&self, x: &Point, z: &Ambient) -> Tangent {
        match (self, x) {
            (Manifold::Sparse(p), _) => Tangent::Sparse(z.sample(p)),
            (Manifold::ScaledIdentity { n }, _) => Tangent::Scalar(z.trace() / *n as f64),
            (Manifold::FixedRank { .. }, Point::FixedRank { u, v, .. }) => {
                let zv = z.mul(v);
                let ztu = z.mul_t(u);
                let m = u.transpose() * &zv;
                let up = zv - u * &m;
                let vp = ztu - v * m.transpose();
                Tangent::FixedRank { m, up, vp }
            }
            (Manifold::Euclidean { .. }, _) => Tangent::Dense(z.to_dense()),
            (Manifold::Symmetric { .. }, _) => Tangent::Dense(sym(z.to_dense())),
            _ => panic!("point does not belong to {}", self.name()),
        }
    }

    /// The tangent vector as an ambient matrix.
    pub fn tangent_to_ambient(&self, x: &Point, t: &Tangent) -> Ambient {
        match (self, x, t) {
            (Manifold::Sparse(p), _, Tangent::Sparse(v)) => Ambient::sparse(p.clone(), v.clone()),
            (_, _, Tangent::Scalar(c)) => Ambient::identity(self.n(), *c),
            (_, Point::FixedRank { u, v, .. }, Tangent::FixedRank { m, up, vp }) => {
                Ambient::lowrank(u * m + up, v.clone()).add(Ambient::lowrank(u.clone(), vp.clone()))
            }
            (_, _, Tangent::Dense(d)) => Ambient::dense(d.clone()),
            _ => panic!("tangent vector does not belong to {}", self.name()),
        }
    }

    pub fn point_to_ambient(&self, x: &Point) -> Ambient {
        match (self, x) {
            (Manifold::Sparse(p), Point::Sparse(v)) => Ambient::sparse(p.clone(), v.clone()),
            (_, Point::Scalar(c)) => Ambient::identity(self.n(), *c),
            (_, Point::FixedRank { u, s, v }) => Ambient::lowrank(u * s, v.clone()),
            (_, Point::Dense(d)) => Ambient::dense(d.clone()),
            _ => panic!("point does not belong to {}", self.name()),
        }
    }

    /// `X W` for a thin `W`.
    pub fn point_mul(&self, x: &Point, w: &RMat) -> RMat {
        match (self, x) {
            (Manifold::Sparse(p), Point::Sparse(v)) => p.mul(v, w),
            (_, Point::Scalar(c)) => w * *c,
            (_, Point::FixedRank { u, s, v }) => u * (s * (v.transpose() * w)),
            (_, Point::Dense(d)) => d * w,
            _ => panic!("point does not belong to {}", self.name()),
        }
    }

    /// Curvature term of the Riemannian Hessian, `𝒲_x(ξ, P⊥ egrad)`;
    /// zero on flat manifolds.
    pub fn weingarten(&self, x: &Point, egrad: &Ambient, t: &Tangent) -> Option<Tangent> {
        match (self, x, t) {
            (Manifold::FixedRank { .. }, Point::FixedRank { u, s, v }, Tangent::FixedRank { m, up, vp }) => {
                let sinv = s.clone().try_inverse()?;
                let a = egrad.mul(vp) * &sinv;
                let up_c = &a - u * (u.transpose() * &a);
                let b = egrad.mul_t(up) * sinv.transpose();
                let vp_c = &b - v * (v.transpose() * &b);
                Some(Tangent::FixedRank {
                    m: RMat::zeros(m.nrows(), m.ncols()),
                    up: up_c,
                    vp: vp_c,
                })
            }
            _ => None,
        }
    }

    /// Moves from `x` along `t`: exact addition on flat manifolds, rank-`r`
    /// truncated SVD of `x + t` on the fixed-rank manifold.
    pub fn retract(&self, x: &Point, t: &Tangent) -> Result<Point> {
        match (self, x, t) {
            (Manifold::Sparse(_), Point::Sparse(v), Tangent::Sparse(d)) => {
                Ok(Point::Sparse(v.iter().zip(d).map(|(a, b)| a + b).collect()))
            }
            (_, Point::Scalar(c), Tangent::Scalar(d)) => Ok(Point::Scalar(c + d)),
            (Manifold::FixedRank { r, .. }, Point::FixedRank { u, s, v }, Tangent::FixedRank { m, up, vp }) => {
                match fixed_rank_retract(*r, u, s, v, m, up, vp, 0.0) {
                    Ok(p) => Ok(p),
                    Err(_) => {
                        let bump = 1e-14 * s.norm();
                        fixed_rank_retract(*r, u, s, v, m, up, vp, bump)
                    }
                }
            }
            (_, Point::Dense(a), Tangent::Dense(d)) => Ok(Point::Dense(a + d)),
            _ => Err(Error::Infeasible(format!("retraction on {} with mismatched data", self.name()))),
        }
    }

    pub fn zero_tangent(&self, x: &Point) -> Tangent {
        match x {
            Point::Sparse(v) => Tangent::Sparse(vec![0.0; v.len()]),
            Point::Scalar(_) => Tangent::Scalar(0.0),
            Point::FixedRank { u, s, v } => Tangent::FixedRank {
                m: RMat::zeros(s.nrows(), s.ncols()),
                up: RMat::zeros(u.nrows(), u.ncols()),
                vp: RMat::zeros(v.nrows(), v.ncols()),
            },
            Point::Dense(d) => Tangent::Dense(RMat::zeros(d.nrows(), d.ncols())),
        }
    }

    /// Gaussian ambient matrix projected onto `T_x`; dense, for tests and
    /// derivative checks.
    pub fn random_tangent<R: Rng>(&self, x: &Point, rng: &mut R) -> Tangent {
        let n = self.n();
        let z = RMat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        self.proj(x, &Ambient::dense(z))
    }

    /// `‖X‖_F`.
    pub fn point_norm(&self, x: &Point) -> f64 {
        match x {
            Point::Sparse(v) => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
            Point::Scalar(c) => c.abs() * (self.n() as f64).sqrt(),
            Point::FixedRank { s, .. } => s.norm(),
            Point::Dense(d) => d.norm(),
        }
    }

    /// `‖X − Y‖_F` between two points.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        match (x, y) {
            (Point::Sparse(a), Point::Sparse(b)) => a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt(),
            (Point::Scalar(a), Point::Scalar(b)) => (a - b).abs() * (self.n() as f64).sqrt(),
            (Point::FixedRank { u, s, v }, Point::FixedRank { u: u2, s: s2, v: v2 }) => {
                let left = hcat(&(u * s), &(u2 * s2 * -1.0));
                let right = hcat(v, v2);
                lowrank_norm(&left, &right)
            }
            (Point::Dense(a), Point::Dense(b)) => (a - b).norm(),
            _ => panic!("points from different manifolds"),
        }
    }

    /// Dense matrix of a point, for tests and small problems.
    pub fn point_to_dense(&self, x: &Point) -> RMat {
        self.point_to_ambient(x).to_dense()
    }
}

pub(crate) fn hcat(a: &RMat, b: &RMat) -> RMat {
    let mut out = RMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `‖A Bᵀ‖_F` through the triangular factors of thin QRs.
pub(crate) fn lowrank_norm(a: &RMat, b: &RMat) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let ra = a.clone().qr().r();
    let rb = b.clone().qr().r();
    (ra * rb.transpose()).norm()
}

#[allow(clippy::too_many_arguments)]
fn fixed_rank_retract(r: usize, u: &RMat, s: &RMat, v: &RMat, m: &RMat, up: &RMat, vp: &RMat, bump: f64) -> Result<Point> {
    // fold any drift of Up, Vp into span(U), span(V) back into M so the
    // stacked bases stay orthonormal
    let a = u.transpose() * up;
    let b = v.transpose() * vp;
    let up = up - u * &a;
    let vp = vp - v * &b;
    let m = m + a + b.transpose();
    let qu = up.qr();
    let qv = vp.qr();
    let (qu_q, ru) = (qu.q(), qu.r());
    let (qv_q, rv) = (qv.q(), qv.r());
    let mut core = RMat::zeros(2 * r, 2 * r);
    let mut top = s + &m;
    for i in 0..r {
        top[(i, i)] += bump;
    }
    core.view_mut((0, 0), (r, r)).copy_from(&top);
    core.view_mut((0, r), (r, r)).copy_from(&rv.transpose());
    core.view_mut((r, 0), (r, r)).copy_from(&ru);
    let (cu, sig, cvt) = svd_real(&core);
    let sigma_r = sig[r - 1];
    if !(sigma_r > 1e-15 * s.norm()) {
        return Err(Error::RankCollapse { sigma_r });
    }
    let ucore = cu.columns(0, r).into_owned();
    let vcore = cvt.rows(0, r).transpose();
    let u_new = hcat(u, &qu_q) * ucore;
    let v_new = hcat(v, &qv_q) * vcore;
    let s_new = RMat::from_diagonal(&nalgebra::DVector::from_vec(sig[..r].to_vec()));
    Ok(Point::FixedRank { u: u_new, s: s_new, v: v_new })
}
