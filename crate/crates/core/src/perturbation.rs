use crate::linalg::{CMat, C64};
use crate::nep::{lowrank_frobenius, Coefficient, ResidualBundle, SplitNep};

/// Storage of the coefficient perturbations `δF₁ … δF_k`.
#[derive(Debug, Clone)]
pub enum PerturbationForm {
    /// `δFⱼ = left · rightsⱼᵀ` with a left factor shared by every term.
    Factored { left: CMat, rights: Vec<CMat> },
    /// One independently stored matrix per term.
    Terms(Vec<Coefficient>),
}

#[derive(Debug, Clone)]
pub struct PerturbationSet {
    pub form: PerturbationForm,
    /// `‖[δF₁ ⋯ δF_k]‖_F`
    pub eta: f64,
    /// `‖Σⱼ (Fⱼ + δFⱼ) V fⱼ(Λ)‖_F` for the pairs the set was computed for.
    pub residual_norm: f64,
}

impl PerturbationSet {
    pub fn zero(n: usize, k: usize) -> Self {
        PerturbationSet {
            form: PerturbationForm::Terms(vec![Coefficient::Dense(CMat::zeros(n, n)); k]),
            eta: 0.0,
            residual_norm: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        match &self.form {
            PerturbationForm::Factored { rights, .. } => rights.len(),
            PerturbationForm::Terms(t) => t.len(),
        }
    }

    pub fn term(&self, j: usize) -> Coefficient {
        match &self.form {
            PerturbationForm::Factored { left, rights } => Coefficient::LowRank {
                left: left.clone(),
                right: rights[j].clone(),
            },
            PerturbationForm::Terms(t) => t[j].clone(),
        }
    }

    pub fn dense(&self, j: usize) -> CMat {
        self.term(j).to_dense()
    }

    pub fn term_norms(&self) -> Vec<f64> {
        match &self.form {
            PerturbationForm::Factored { left, rights } => {
                rights.iter().map(|m| lowrank_frobenius(left, m)).collect()
            }
            PerturbationForm::Terms(t) => t.iter().map(|c| c.frobenius_norm()).collect(),
        }
    }

    /// `Σⱼ δFⱼ X_j` for blocks `X_j` stacked like `W`.
    pub fn apply_stacked(&self, w: &CMat) -> CMat {
        let k = self.k();
        let n = w.nrows() / k;
        let mut out = CMat::zeros(n, w.ncols());
        for j in 0..k {
            out += self.term(j).mul_mat(&w.rows(j * n, n).into_owned());
        }
        out
    }

    /// Problem with coefficients `Fⱼ + δFⱼ`.
    pub fn apply_to(&self, nep: &SplitNep) -> crate::Result<SplitNep> {
        let coeffs = nep
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, c)| add_coefficients(c, &self.term(j)))
            .collect();
        nep.with_coeffs(coeffs)
    }
}

/// Residual `R + Σⱼ δFⱼ V fⱼ(Λ)` of the perturbed problem.
pub(crate) fn perturbed_residual(bundle: &ResidualBundle, form: &PerturbationSet) -> CMat {
    &bundle.r + form.apply_stacked(&bundle.w)
}

fn add_coefficients(a: &Coefficient, b: &Coefficient) -> Coefficient {
    use Coefficient::*;
    match (a, b) {
        (Sparse(x), Sparse(y)) => Sparse(x.add_scaled(y, C64::new(1.0, 0.0))),
        (LowRank { left: l1, right: r1 }, LowRank { left: l2, right: r2 }) => LowRank {
            left: crate::nep::hstack(l1, l2),
            right: crate::nep::hstack(r1, r2),
        },
        _ => Dense(a.to_dense() + b.to_dense()),
    }
}
