//! Structured backward error when each coefficient perturbation is confined
//! to a linear subspace `𝒮ⱼ = span{P⁽ⁱ'ʲ⁾}`.
//!
//! The constrained equations `Σⱼ δFⱼ Wⱼ = −R` are solved in minimum norm over
//! the coordinates `δ` of `δFⱼ = Σᵢ δᵢʲ P⁽ⁱ'ʲ⁾`. Unstructured and sparsity
//! terms touch one row of `R` per unknown, so they are eliminated row by row;
//! the few coupled unknowns (scaled identity, symmetric, explicit bases) are
//! handled on top of that through a reduced least-squares problem.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{full_svd, min_norm_solve, pinv, svd, CMat, CVec, SparseMatrix, C64, DEFAULT_RANK_TOL};
use crate::nep::{invariant_residual, residual_bundle, Coefficient, EigenpairSet, InvariantPair, ResidualBundle, SplitNep};
use crate::perturbation::{perturbed_residual, PerturbationForm, PerturbationSet};

/// Relative threshold of the consistency test `‖AA†r − r‖ ≤ tol·‖r‖`.
pub const CONSISTENCY_TOL: f64 = 1e-10;

const STAGE_RANK_TOL: f64 = 1e-11;

/// Frobenius-orthonormal basis of a subspace of `ℂⁿˣⁿ`.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    n: usize,
    elements: Vec<Coefficient>,
    orthonormal: bool,
}

fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

impl SubspaceBasis {
    /// Orthonormalizes `elements` by modified Gram–Schmidt in the Frobenius
    /// inner product. Elements that are numerically dependent on earlier ones
    /// are dropped.
    pub fn new(n: usize, elements: Vec<Coefficient>) -> Result<Self> {
        for e in &elements {
            if e.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "basis element is {:?}, expected {n}x{n}",
                    e.shape()
                )));
            }
        }
        let scale = elements.iter().map(|e| e.frobenius_norm()).fold(0.0, f64::max);
        let mut out: Vec<CMat> = Vec::with_capacity(elements.len());
        for e in &elements {
            let mut x = e.to_dense();
            for q in &out {
                let c = frob_inner(q, &x);
                x -= q * c;
            }
            // second pass keeps orthogonality at working precision
            for q in &out {
                let c = frob_inner(q, &x);
                x -= q * c;
            }
            let nx = x.norm();
            if nx > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                out.push(x.unscale(nx));
            }
        }
        Ok(SubspaceBasis {
            n,
            elements: out.into_iter().map(sparse_if_cheaper).collect(),
            orthonormal: true,
        })
    }

    /// Wraps elements already known to be orthonormal.
    pub(crate) fn from_orthonormal(n: usize, elements: Vec<Coefficient>) -> Self {
        SubspaceBasis {
            n,
            elements,
            orthonormal: true,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Coefficient] {
        &self.elements
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Gram matrix `[⟨Pₐ, P_b⟩_F]`.
    pub fn gram(&self) -> CMat {
        let dense: Vec<CMat> = self.elements.iter().map(|e| e.to_dense()).collect();
        CMat::from_fn(self.dim(), self.dim(), |a, b| frob_inner(&dense[a], &dense[b]))
    }

    /// Orthogonal projection `Σᵢ ⟨Pᵢ, X⟩ Pᵢ`.
    pub fn project(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for e in &self.elements {
            let d = e.to_dense();
            out += &d * frob_inner(&d, x);
        }
        out
    }
}

fn sparse_if_cheaper(a: CMat) -> Coefficient {
    let n = a.nrows();
    let nnz = a.iter().filter(|z| z.norm() != 0.0).count();
    if nnz * 4 < n * n {
        Coefficient::Sparse(SparseMatrix::from_dense(&a, 0.0))
    } else {
        Coefficient::Dense(a)
    }
}

/// Admissible set for the perturbation of one coefficient.
#[derive(Debug, Clone)]
pub enum StructureSpec {
    Unstructured,
    Subspace(SubspaceBasis),
    /// Real or complex symmetric (`δF = δFᵀ`).
    Symmetric,
    /// Perturbation supported on the given `(row, col)` positions.
    Sparsity(Vec<(usize, usize)>),
    ScaledIdentity,
    /// Rank at most `r`; not a linear subspace.
    FixedRank(usize),
}

impl StructureSpec {
    pub fn is_linear(&self) -> bool {
        !matches!(self, StructureSpec::FixedRank(_))
    }

    pub fn name(&self) -> String {
        match self {
            StructureSpec::Unstructured => "unstructured".into(),
            StructureSpec::Subspace(b) => format!("subspace(dim={})", b.dim()),
            StructureSpec::Symmetric => "symmetric".into(),
            StructureSpec::Sparsity(j) => format!("sparsity(nnz={})", j.len()),
            StructureSpec::ScaledIdentity => "scaled-identity".into(),
            StructureSpec::FixedRank(r) => format!("fixed-rank({r})"),
        }
    }

    /// Sparsity pattern of an existing coefficient.
    pub fn pattern_of(c: &Coefficient) -> StructureSpec {
        let pattern = match c {
            Coefficient::Sparse(s) => s.pattern(),
            other => {
                let d = other.to_dense();
                let mut pat = Vec::new();
                for j in 0..d.ncols() {
                    for i in 0..d.nrows() {
                        if d[(i, j)].norm() != 0.0 {
                            pat.push((i, j));
                        }
                    }
                }
                pat
            }
        };
        StructureSpec::Sparsity(pattern)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            StructureSpec::Sparsity(pat) => {
                if let Some((a, b)) = pat.iter().find(|(a, b)| *a >= n || *b >= n) {
                    return Err(Error::Structure(format!("pattern index ({a}, {b}) outside {n}x{n}")));
                }
                let mut sorted = pat.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != pat.len() {
                    return Err(Error::Structure("sparsity pattern has duplicate positions".into()));
                }
            }
            StructureSpec::FixedRank(r) if *r > n || *r == 0 => {
                return Err(Error::Structure(format!("fixed rank {r} not in 1..={n}")));
            }
            StructureSpec::Subspace(b) if b.n() != n => {
                return Err(Error::Dimension(format!("subspace basis is for n={}, problem has n={n}", b.n())));
            }
            _ => {}
        }
        Ok(())
    }

    /// Closest admissible matrix in the Frobenius norm (truncated SVD for
    /// fixed rank).
    pub fn project(&self, x: &CMat) -> CMat {
        match self {
            StructureSpec::Unstructured => x.clone(),
            StructureSpec::Subspace(b) => b.project(x),
            StructureSpec::Symmetric => (x + x.transpose()).unscale(2.0),
            StructureSpec::Sparsity(pat) => {
                let mut out = CMat::zeros(x.nrows(), x.ncols());
                for &(a, b) in pat {
                    out[(a, b)] = x[(a, b)];
                }
                out
            }
            StructureSpec::ScaledIdentity => {
                let n = x.nrows();
                CMat::identity(n, n) * (x.trace() / n as f64)
            }
            StructureSpec::FixedRank(r) => {
                let f = svd(x);
                let mut out = CMat::zeros(x.nrows(), x.ncols());
                for i in 0..(*r).min(f.s.len()) {
                    out += f.u.column(i) * f.vt.row(i) * C64::new(f.s[i], 0.0);
                }
                out
            }
        }
    }
}

/// Orthonormal basis of a linear structure.
pub fn canonical_basis(spec: &StructureSpec, n: usize) -> Result<SubspaceBasis> {
    spec.validate(n)?;
    let one = C64::new(1.0, 0.0);
    let unit = |a: usize, b: usize| Coefficient::Sparse(SparseMatrix::from_triplets(n, n, &[(a, b, one)]));
    let elements = match spec {
        StructureSpec::Unstructured => (0..n)
            .flat_map(|b| (0..n).map(move |a| (a, b)))
            .map(|(a, b)| unit(a, b))
            .collect(),
        StructureSpec::Sparsity(pat) => pat.iter().map(|&(a, b)| unit(a, b)).collect(),
        StructureSpec::ScaledIdentity => {
            vec![Coefficient::Sparse(SparseMatrix::identity(n).scaled(C64::new(1.0 / (n as f64).sqrt(), 0.0)))]
        }
        StructureSpec::Symmetric => {
            let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let mut out = Vec::with_capacity(n * (n + 1) / 2);
            for a in 0..n {
                out.push(unit(a, a));
                for b in a + 1..n {
                    out.push(Coefficient::Sparse(SparseMatrix::from_triplets(n, n, &[(a, b, h), (b, a, h)])));
                }
            }
            out
        }
        StructureSpec::Subspace(b) => return Ok(b.clone()),
        StructureSpec::FixedRank(_) => {
            return Err(Error::Structure("fixed-rank structure is not a linear subspace".into()))
        }
    };
    Ok(SubspaceBasis::from_orthonormal(n, elements))
}

/// Result of the constrained least-squares problem before the consistency
/// verdict is applied.
#[derive(Debug, Clone)]
pub struct StructuredSolution {
    pub perturbation: PerturbationSet,
    /// `‖AA†r − r‖ / ‖r‖` (0 when `r = 0`).
    pub consistency: f64,
    /// Total number of structure coordinates `Σⱼ dⱼ`.
    pub dim: usize,
}

impl StructuredSolution {
    pub fn is_consistent(&self) -> bool {
        self.consistency <= CONSISTENCY_TOL
    }

    pub fn into_result(self) -> Result<PerturbationSet> {
        if self.is_consistent() {
            Ok(self.perturbation)
        } else {
            Err(Error::Infeasible(format!(
                "structured system is inconsistent: relative least-squares residual {:.3e}",
                self.consistency
            )))
        }
    }
}

/// Unknowns and coefficient block for one row of `δFⱼ` across row-decoupled terms.
struct RowBlock {
    /// `(term, column)` of each unknown.
    unknowns: Vec<(usize, usize)>,
    /// `pinv(A_a)`, `u × p`.
    pinv: CMat,
    /// `A_a`, `p × u`.
    a: CMat,
}

struct Layout {
    n: usize,
    p: usize,
    rows: Vec<RowBlock>,
    offsets: Vec<usize>,
    /// `(term, basis element)` of each coupled unknown.
    coupled: Vec<(usize, Coefficient)>,
    /// `np × m` coefficient columns of the coupled unknowns.
    ac: CMat,
}

impl Layout {
    fn build(bundle: &ResidualBundle, specs: &[StructureSpec]) -> Result<Layout> {
        let (n, p) = bundle.r.shape();
        let k = bundle.w.nrows() / n;
        if specs.len() != k {
            return Err(Error::Dimension(format!("{} structure specs for {k} terms", specs.len())));
        }
        let mut per_row: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut coupled = Vec::new();
        for (j, spec) in specs.iter().enumerate() {
            spec.validate(n)?;
            match spec {
                StructureSpec::Unstructured => {
                    for (a, row) in per_row.iter_mut().enumerate() {
                        let _ = a;
                        row.extend((0..n).map(|b| (j, b)));
                    }
                }
                StructureSpec::Sparsity(pat) => {
                    for &(a, b) in pat {
                        per_row[a].push((j, b));
                    }
                }
                StructureSpec::FixedRank(_) => {
                    return Err(Error::Structure(format!(
                        "term {j} has a fixed-rank structure; use the Riemannian solver"
                    )))
                }
                other => {
                    for e in canonical_basis(other, n)?.elements {
                        coupled.push((j, e));
                    }
                }
            }
        }
        let wblocks: Vec<CMat> = (0..k).map(|j| bundle.w_block(j)).collect();
        let rows: Vec<RowBlock> = per_row
            .into_par_iter()
            .map(|unknowns| {
                let a = CMat::from_fn(p, unknowns.len(), |c, t| {
                    let (j, b) = unknowns[t];
                    wblocks[j][(b, c)]
                });
                let pinv = if unknowns.is_empty() {
                    CMat::zeros(0, p)
                } else {
                    pinv(&a, DEFAULT_RANK_TOL)
                };
                RowBlock { unknowns, pinv, a }
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for r in &rows {
            offsets.push(offsets.last().unwrap() + r.unknowns.len());
        }
        let mut ac = CMat::zeros(n * p, coupled.len());
        for (col, (j, e)) in coupled.iter().enumerate() {
            let pw = e.mul_mat(&wblocks[*j]);
            for c in 0..p {
                for a in 0..n {
                    ac[(a + n * c, col)] = pw[(a, c)];
                }
            }
        }
        Ok(Layout {
            n,
            p,
            rows,
            offsets,
            coupled,
            ac,
        })
    }

    fn row_slice(&self, y: &CVec, a: usize) -> CVec {
        CVec::from_fn(self.p, |c, _| y[a + self.n * c])
    }

    /// `A_s† y`, stacked over rows.
    fn apply_pinv(&self, y: &CVec) -> CVec {
        let mut x = CVec::zeros(*self.offsets.last().unwrap());
        for (a, blk) in self.rows.iter().enumerate() {
            if blk.unknowns.is_empty() {
                continue;
            }
            let xa = &blk.pinv * self.row_slice(y, a);
            x.rows_mut(self.offsets[a], xa.len()).copy_from(&xa);
        }
        x
    }

    /// `A_s x` for stacked row unknowns.
    fn apply_rows(&self, x: &CVec) -> CVec {
        let mut y = CVec::zeros(self.n * self.p);
        for (a, blk) in self.rows.iter().enumerate() {
            if blk.unknowns.is_empty() {
                continue;
            }
            let ya = &blk.a * x.rows(self.offsets[a], blk.unknowns.len());
            for c in 0..self.p {
                y[a + self.n * c] = ya[c];
            }
        }
        y
    }

    /// `(I − A_s A_s†) y`.
    fn apply_perp(&self, y: &CVec) -> CVec {
        y - self.apply_rows(&self.apply_pinv(y))
    }

    /// Gram matrix `A Aᴴ` of the full structured operator.
    fn gram(&self) -> CMat {
        let np = self.n * self.p;
        let mut g = &self.ac * self.ac.adjoint();
        for (a, blk) in self.rows.iter().enumerate() {
            if blk.unknowns.is_empty() {
                continue;
            }
            let ga = &blk.a * blk.a.adjoint();
            for c in 0..self.p {
                for d in 0..self.p {
                    g[(a + self.n * c, a + self.n * d)] += ga[(c, d)];
                }
            }
        }
        debug_assert_eq!(g.nrows(), np);
        g
    }
}

/// Minimum-norm least-squares solution of the structured system
/// `Σⱼ δFⱼ Wⱼ = −R` with `δFⱼ ∈ 𝒮ⱼ`, for any residual bundle.
pub fn structured_least_squares(bundle: &ResidualBundle, specs: &[StructureSpec]) -> Result<StructuredSolution> {
    let layout = Layout::build(bundle, specs)?;
    let (n, p) = (layout.n, layout.p);
    let k = specs.len();
    let b = CVec::from_fn(n * p, |i, _| -bundle.r[(i % n, i / n)]);
    let m = layout.coupled.len();

    let xc = if m == 0 {
        CVec::zeros(0)
    } else {
        // stage 1: coupled coordinates minimizing the residual left after row elimination
        let mut pc = CMat::zeros(n * p, m);
        for i in 0..m {
            pc.set_column(i, &layout.apply_perp(&layout.ac.column(i).into_owned()));
        }
        let pb = layout.apply_perp(&b);
        let f = svd(&pc);
        // pc is a projection of A_c, so its rank is judged on the scale of the
        // full operator rather than on its own (possibly roundoff-sized) σ₁
        let scale = layout.ac.norm().max(bundle.w.norm());
        let rank = f.s.iter().filter(|&&s| s > STAGE_RANK_TOL * scale).count();
        let mut x0 = CVec::zeros(m);
        for i in 0..rank {
            let coef = f.u.column(i).dotc(&pb) / f.s[i];
            x0 += f.vt.row(i).adjoint() * coef;
        }
        // stage 2: minimum total norm over the remaining freedom x0 + N z
        let vt = full_svd(&pc).vt;
        let null: Vec<CVec> = (rank..m).map(|i| vt.row(i).adjoint()).collect();
        if null.is_empty() {
            x0
        } else {
            let nmat = CMat::from_columns(&null);
            let ac_n = &layout.ac * &nmat;
            let s_acn: Vec<CVec> = (0..nmat.ncols()).map(|i| layout.apply_pinv(&ac_n.column(i).into_owned())).collect();
            let top = CMat::from_columns(&s_acn);
            let t_top = layout.apply_pinv(&(&b - &layout.ac * &x0));
            let rows_b = top.nrows() + m;
            let mut bm = CMat::zeros(rows_b, nmat.ncols());
            bm.rows_mut(0, top.nrows()).copy_from(&top);
            bm.rows_mut(top.nrows(), m).copy_from(&(-&nmat));
            let mut t = CVec::zeros(rows_b);
            t.rows_mut(0, top.nrows()).copy_from(&t_top);
            t.rows_mut(top.nrows(), m).copy_from(&x0);
            let z = min_norm_solve(&bm, &t, DEFAULT_RANK_TOL)?.x;
            x0 + nmat * z
        }
    };

    let rhs_rows = if m == 0 { b.clone() } else { &b - &layout.ac * &xc };
    let xs = layout.apply_pinv(&rhs_rows);
    let lsq = rhs_rows - layout.apply_rows(&xs);
    let bn = b.norm();
    let consistency = if bn == 0.0 { 0.0 } else { lsq.norm() / bn };

    // assemble the coefficient perturbations
    let mut triplets: Vec<Vec<(usize, usize, C64)>> = vec![Vec::new(); k];
    for (a, blk) in layout.rows.iter().enumerate() {
        for (t, &(j, col)) in blk.unknowns.iter().enumerate() {
            triplets[j].push((a, col, xs[layout.offsets[a] + t]));
        }
    }
    let mut dense_part: Vec<Option<CMat>> = vec![None; k];
    for ((j, e), x) in layout.coupled.iter().zip(xc.iter()) {
        match e {
            Coefficient::Sparse(s) => triplets[*j].extend(s.iter().map(|(a, b, v)| (a, b, v * x))),
            other => {
                let d = dense_part[*j].get_or_insert_with(|| CMat::zeros(n, n));
                *d += other.to_dense() * *x;
            }
        }
    }
    let terms: Vec<Coefficient> = (0..k)
        .map(|j| {
            let sparse = SparseMatrix::from_triplets(n, n, &triplets[j]);
            match (&specs[j], dense_part[j].take()) {
                (_, Some(d)) => Coefficient::Dense(d + sparse.to_dense()),
                (StructureSpec::Unstructured | StructureSpec::Symmetric, None) => {
                    Coefficient::Dense(sparse.to_dense())
                }
                (_, None) => Coefficient::Sparse(sparse),
            }
        })
        .collect();
    let eta = (xs.norm_squared() + xc.norm_squared()).sqrt();
    let mut set = PerturbationSet {
        form: PerturbationForm::Terms(terms),
        eta,
        residual_norm: 0.0,
    };
    set.residual_norm = perturbed_residual(bundle, &set).norm();
    Ok(StructuredSolution {
        perturbation: set,
        consistency,
        dim: xs.len() + m,
    })
}

/// Structured backward error of an eigenpair set. Fails with
/// [`Error::Infeasible`] when no admissible perturbation makes the pairs exact.
pub fn structured_backward_error(
    nep: &SplitNep,
    pairs: &EigenpairSet,
    specs: &[StructureSpec],
) -> Result<PerturbationSet> {
    let bundle = residual_bundle(nep, pairs)?;
    structured_least_squares(&bundle, specs)?.into_result()
}

/// Structured backward error of an invariant pair `(V, M)`.
pub fn structured_backward_error_invariant(
    nep: &SplitNep,
    pair: &InvariantPair,
    specs: &[StructureSpec],
) -> Result<PerturbationSet> {
    let bundle = invariant_residual(nep, pair)?;
    structured_least_squares(&bundle, specs)?.into_result()
}

/// `σ_min(((G ⊙ᵀ Vᵀ) ⊗ Iₙ) P)⁻¹ ‖R‖_F`, with `σ_min` the smallest nonzero
/// singular value. Forms the `np × np` Gram matrix.
pub fn structured_upper_bound(bundle: &ResidualBundle, specs: &[StructureSpec]) -> Result<f64> {
    if bundle.r_norm == 0.0 {
        return Ok(0.0);
    }
    let layout = Layout::build(bundle, specs)?;
    let eig = layout.gram().symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let smin2 = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|e| *e > DEFAULT_RANK_TOL * DEFAULT_RANK_TOL * top * 1e4)
        .fold(f64::INFINITY, f64::min);
    if !smin2.is_finite() || smin2 <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(bundle.r_norm / smin2.sqrt())
}
