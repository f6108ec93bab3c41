//! Preconditioner for the inner conjugate gradient solver.
//!
//! Applies `μ (μI + AᵀA)⁻¹` on the factors that enter the residual linearly
//! through rows (sparse, dense, symmetric) and scaled identities, where `A`
//! maps those coefficients to the residual `Σⱼ Xⱼ Wⱼ`. The row-coupled part
//! splits into one small system per row of the residual; scaled identities
//! couple every row and are eliminated through a Schur complement with one
//! unknown per factor. Fixed-rank factors are left unpreconditioned.
//! Symmetric factors are treated as dense and the result symmetrized, which
//! keeps the operator positive definite on their tangent space.

use nalgebra::{Cholesky, Dyn};

use super::manifold::{Manifold, Tangent};
use super::problem::{PenaltyProblem, ProductTangent};
use crate::linalg::RMat;

type RVec = nalgebra::DVector<f64>;

/// Row `a` of the row-coupled unknowns: `(factor, position)` pairs and the
/// Cholesky factor of `μI + B_a B_aᵀ`, with the rows of `B_a` taken from the
/// `Wⱼ`.
#[derive(Debug, Clone)]
struct RowSystem {
    slots: Vec<(usize, usize, usize)>,
    chol: Option<Cholesky<f64, Dyn>>,
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    mu: f64,
    /// `(μI_q + B_aᵀ B_a)⁻¹` for every residual row.
    residual_rows: Vec<RMat>,
    /// Exact per-row solves; `None` when dense factors make the rows too
    /// wide and the Woodbury form is used instead.
    rows: Option<Vec<RowSystem>>,
    /// Indices of the scaled-identity factors and the inverse of their
    /// Schur complement.
    scalars: Vec<usize>,
    schur_inv: RMat,
}

fn inverse_spd(c: RMat) -> RMat {
    let q = c.nrows();
    let scale = (0..q).map(|i| c[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    c.cholesky().map(|ch| ch.inverse()).unwrap_or_else(|| RMat::identity(q, q) / scale)
}

impl Preconditioner {
    pub fn new(p: &PenaltyProblem) -> Self {
        let mu = p.mu;
        let w = p.w();
        let n = w[0].nrows();
        let q = w[0].ncols();
        let ms = p.manifolds();
        let mut gram = vec![RMat::zeros(q, q); n];
        let mut dense = RMat::zeros(q, q);
        let mut slots: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); n];
        let mut any_dense = false;
        for (j, (m, wj)) in ms.iter().zip(w).enumerate() {
            match m {
                Manifold::Sparse(pat) => {
                    for (t, (a, b)) in pat.entries().enumerate() {
                        let wb = wj.row(b);
                        gram[a] += wb.transpose() * wb;
                        slots[a].push((j, t, b));
                    }
                }
                Manifold::Euclidean { .. } | Manifold::Symmetric { .. } => {
                    dense += wj.transpose() * wj;
                    any_dense = true;
                }
                _ => {}
            }
        }
        let residual_rows: Vec<RMat> = gram
            .into_iter()
            .map(|mut c| {
                c += &dense;
                for i in 0..q {
                    c[(i, i)] += mu;
                }
                inverse_spd(c)
            })
            .collect();
        let rows = (!any_dense).then(|| {
            slots
                .into_iter()
                .map(|slots| {
                    let m = slots.len();
                    let mut k = RMat::from_fn(m, m, |s, t| {
                        let (j1, _, b1) = slots[s];
                        let (j2, _, b2) = slots[t];
                        w[j1].row(b1).dot(&w[j2].row(b2))
                    });
                    for i in 0..m {
                        k[(i, i)] += mu;
                    }
                    RowSystem {
                        chol: k.cholesky(),
                        slots,
                    }
                })
                .collect()
        });
        let scalars: Vec<usize> = ms
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m, Manifold::ScaledIdentity { .. }))
            .map(|(j, _)| j)
            .collect();
        // S = μ diag(n) + μ W̄ᵀ (μI + AAᵀ)⁻¹ W̄, assembled row by row
        let s = scalars.len();
        let mut schur = RMat::zeros(s, s);
        for (a, c) in residual_rows.iter().enumerate() {
            let cw: Vec<RVec> = scalars.iter().map(|&i| c * w[i].row(a).transpose()).collect();
            for (x, &i) in scalars.iter().enumerate() {
                for y in 0..s {
                    schur[(x, y)] += mu * w[i].row(a).transpose().dot(&cw[y]);
                }
            }
        }
        for x in 0..s {
            schur[(x, x)] += mu * n as f64;
        }
        Preconditioner {
            mu,
            residual_rows,
            rows,
            scalars,
            schur_inv: inverse_spd(schur),
        }
    }

    /// `Σⱼ Tⱼ Wⱼ` over the row-coupled factors.
    fn forward(p: &PenaltyProblem, r: &[Tangent]) -> RMat {
        let w = p.w();
        let mut acc = RMat::zeros(w[0].nrows(), w[0].ncols());
        for ((m, t), wj) in p.manifolds().iter().zip(r).zip(w) {
            match (m, t) {
                (Manifold::Sparse(pat), Tangent::Sparse(v)) => acc += pat.mul(v, wj),
                (Manifold::Euclidean { .. } | Manifold::Symmetric { .. }, Tangent::Dense(d)) => acc += d * wj,
                _ => {}
            }
        }
        acc
    }

    /// `T ← T + scale · Aᵀ E` on the row-coupled factors.
    fn adjoint_add(p: &PenaltyProblem, e: &RMat, scale: f64, out: &mut [Tangent]) {
        for ((m, t), wj) in p.manifolds().iter().zip(out.iter_mut()).zip(p.w()) {
            match (m, t) {
                (Manifold::Sparse(pat), Tangent::Sparse(v)) => pat.sample_lowrank(e, wj, v, scale),
                (Manifold::Euclidean { .. }, Tangent::Dense(d)) => *d += e * wj.transpose() * scale,
                (Manifold::Symmetric { .. }, Tangent::Dense(d)) => {
                    let ew = e * wj.transpose();
                    *d += (&ew + ew.transpose()) * (0.5 * scale);
                }
                _ => {}
            }
        }
    }

    fn rowwise(&self, y: &mut RMat) {
        for (a, c) in self.residual_rows.iter().enumerate() {
            let row = y.row(a) * c;
            y.row_mut(a).copy_from(&row);
        }
    }

    /// `μ (μI + AᵀA)⁻¹ v` on the row-coupled factors, in place.
    fn solve_rows(&self, p: &PenaltyProblem, v: &mut [Tangent]) {
        match &self.rows {
            Some(rows) => {
                for sys in rows {
                    let Some(chol) = &sys.chol else { continue };
                    let rhs = RVec::from_iterator(
                        sys.slots.len(),
                        sys.slots.iter().map(|&(j, t, _)| match &v[j] {
                            Tangent::Sparse(x) => x[t],
                            _ => 0.0,
                        }),
                    );
                    let z = chol.solve(&rhs) * self.mu;
                    for (s, &(j, t, _)) in sys.slots.iter().enumerate() {
                        if let Tangent::Sparse(x) = &mut v[j] {
                            x[t] = z[s];
                        }
                    }
                }
            }
            None => {
                // Woodbury: μ(μI + AᵀA)⁻¹ = I − Aᵀ(μI + AAᵀ)⁻¹A
                let mut y = Self::forward(p, v);
                self.rowwise(&mut y);
                Self::adjoint_add(p, &y, -1.0, v);
            }
        }
    }

    pub fn apply(&self, p: &PenaltyProblem, r: &ProductTangent) -> ProductTangent {
        let w = p.w();
        let ms = p.manifolds();
        let mut out: ProductTangent = r.clone();
        if self.scalars.is_empty() {
            self.solve_rows(p, &mut out);
            return out;
        }
        // scalar unknowns from the Schur complement
        let mut y = Self::forward(p, r);
        self.rowwise(&mut y);
        let rhs = RVec::from_iterator(
            self.scalars.len(),
            self.scalars.iter().map(|&i| {
                let gc = match &r[i] {
                    Tangent::Scalar(c) => *c,
                    _ => 0.0,
                };
                ms[i].n() as f64 * gc - w[i].dot(&y)
            }),
        );
        let zc = &self.schur_inv * rhs;
        // row unknowns from the remaining right-hand side
        let mut e = RMat::zeros(w[0].nrows(), w[0].ncols());
        for (x, &i) in self.scalars.iter().enumerate() {
            e += &w[i] * zc[x];
        }
        Self::adjoint_add(p, &e, -1.0, &mut out);
        self.solve_rows(p, &mut out);
        for (x, &i) in self.scalars.iter().enumerate() {
            out[i] = Tangent::Scalar(self.mu * zc[x]);
        }
        out
    }
}
