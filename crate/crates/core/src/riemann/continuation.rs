//! Penalty continuation: minimize the penalized objective for decreasing
//! `μ`, warm-starting every stage from the previous minimizer.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::manifold::{Manifold, Point};
use super::problem::{HessianMode, PenaltyProblem};
use super::trust_region::{trust_region_minimize, TrOptions, TrStop};
use crate::error::{Error, Result};
use crate::nep::{residual_bundle, EigenpairSet, ResidualBundle, SplitNep};
use crate::perturbation::{PerturbationForm, PerturbationSet};
use crate::structured::StructureSpec;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RiemannOptions {
    /// Factor applied to `μ` after every stage.
    pub rho: f64,
    /// Stop once `√μ ≤ eps`.
    pub eps: f64,
    pub mu0: f64,
    pub hessian: HessianMode,
    pub tr: TrOptions,
}

impl Default for RiemannOptions {
    fn default() -> Self {
        RiemannOptions {
            rho: 0.1,
            eps: 1e-8,
            mu0: 1.0,
            hessian: HessianMode::Full,
            tr: TrOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageLog {
    pub mu: f64,
    pub eta: f64,
    pub residual: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub stop: TrStop,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub perturbation: PerturbationSet,
    /// `‖[F̃₁ − F₁ ⋯ F̃_k − F_k]‖_F`
    pub eta: f64,
    /// `‖Σⱼ F̃ⱼ V fⱼ(Λ)‖_F`
    pub residual: f64,
    pub stages: Vec<StageLog>,
    pub manifolds: Vec<Manifold>,
    pub points: Vec<Point>,
    /// Every stage stopped on the gradient tolerance or at machine precision.
    pub converged: bool,
    pub seconds: f64,
}

impl RiemannOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.eps > 0.0) || !(self.mu0 > 0.0) {
            return Err(Error::Config("eps and mu0 must be positive".into()));
        }
        Ok(())
    }
}

pub fn penalty_continuation(
    nep: &SplitNep,
    pairs: &EigenpairSet,
    specs: &[StructureSpec],
    opts: &RiemannOptions,
) -> Result<ContinuationReport> {
    let bundle = residual_bundle(nep, pairs)?;
    penalty_continuation_bundle(nep, &bundle, specs, opts)
}

/// Same as [`penalty_continuation`] for precomputed residual data, e.g. of
/// an invariant pair.
pub fn penalty_continuation_bundle(
    nep: &SplitNep,
    bundle: &ResidualBundle,
    specs: &[StructureSpec],
    opts: &RiemannOptions,
) -> Result<ContinuationReport> {
    opts.validate()?;
    let start = Instant::now();
    let mut problem = PenaltyProblem::from_nep(nep, bundle, specs, opts.mu0)?;
    problem.hessian = opts.hessian;
    let mut x: Vec<Point> = problem.reference().to_vec();
    let mut stages = Vec::new();
    let mut mu = opts.mu0;
    let mut converged = true;
    while mu.sqrt() > opts.eps {
        let t0 = Instant::now();
        problem.mu = mu;
        let (xn, rep) = trust_region_minimize(&problem, x, &opts.tr)?;
        x = xn;
        let log = StageLog {
            mu,
            eta: problem.distance(&x),
            residual: problem.residual(&x).norm(),
            objective: rep.objective,
            grad_norm: rep.grad_norm,
            iterations: rep.iterations,
            inner_iterations: rep.inner_iterations,
            stop: rep.stop,
            seconds: t0.elapsed().as_secs_f64(),
        };
        info!(
            "mu={:.1e} eta={:.6e} residual={:.3e} iters={} stop={:?}",
            log.mu, log.eta, log.residual, log.iterations, log.stop
        );
        converged &= rep.converged();
        stages.push(log);
        mu *= opts.rho;
    }
    let residual = problem.residual(&x).norm();
    let eta = problem.distance(&x);
    let perturbation = PerturbationSet {
        form: PerturbationForm::Terms(problem.perturbations(&x)),
        eta,
        residual_norm: residual,
    };
    Ok(ContinuationReport {
        perturbation,
        eta,
        residual,
        stages,
        manifolds: problem.manifolds().to_vec(),
        points: x,
        converged,
        seconds: start.elapsed().as_secs_f64(),
    })
}
