//! Riemannian trust region with a truncated conjugate gradient inner solver.

use log::debug;
use serde::{Deserialize, Serialize};

use super::ambient::Ambient;
use super::precond::Preconditioner;
use super::problem::{PenaltyProblem, ProductPoint, ProductTangent};
use crate::error::Result;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrOptions {
    pub max_iter: usize,
    pub max_inner: usize,
    /// Relative gradient tolerance, scaled by the initial gradient norm.
    pub gtol: f64,
    /// Absolute gradient tolerance.
    pub gtol_abs: f64,
    pub theta: f64,
    pub kappa: f64,
    /// Maximum radius; `None` picks one from the problem scale.
    pub max_radius: Option<f64>,
    /// Stop once the objective fell by less than `progress_tol` (relative)
    /// over the last `progress_window` accepted steps; 0 disables.
    pub progress_window: usize,
    pub progress_tol: f64,
    /// Precondition the inner solver.
    pub precondition: bool,
}

impl Default for TrOptions {
    fn default() -> Self {
        TrOptions {
            max_iter: 500,
            max_inner: 1000,
            gtol: 1e-8,
            gtol_abs: 0.0,
            theta: 1.0,
            kappa: 0.1,
            max_radius: None,
            progress_window: 10,
            progress_tol: 1e-3,
            precondition: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrStop {
    GradientTolerance,
    MaxIterations,
    /// The radius or the predicted decrease reached machine precision.
    Stagnation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrReport {
    pub iterations: usize,
    pub accepted: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub stop: TrStop,
    /// Gradient norm after every accepted step.
    pub grad_history: Vec<f64>,
}

impl TrReport {
    pub fn converged(&self) -> bool {
        self.stop != TrStop::MaxIterations
    }
}

fn axpy(y: &mut ProductTangent, a: f64, x: &ProductTangent) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.axpy(a, xi);
    }
}

fn scaled(x: &ProductTangent, a: f64) -> ProductTangent {
    x.iter().map(|t| t.scaled(a)).collect()
}

struct Tcg {
    eta: ProductTangent,
    heta: ProductTangent,
    /// Step length in the trust-region norm.
    norm: f64,
    iterations: usize,
}

/// Steihaug–Toint truncated CG on the trust-region model. With a
/// preconditioner `P` the trust region is measured in the norm of `P⁻¹`.
fn tcg(
    p: &PenaltyProblem,
    x: &ProductPoint,
    egrad: &[Ambient],
    grad: &ProductTangent,
    radius: f64,
    g0: f64,
    prec: Option<&Preconditioner>,
    opts: &TrOptions,
) -> Tcg {
    let precondition = |r: &ProductTangent| match prec {
        Some(m) => m.apply(p, r),
        None => r.clone(),
    };
    let zero: ProductTangent = grad.iter().map(|t| t.zeroed()).collect();
    let mut eta = zero.clone();
    let mut heta = zero;
    let mut r = grad.clone();
    let norm_r0 = p.inner(&r, &r).sqrt();
    let mut z = precondition(&r);
    let mut z_r = p.inner(&z, &r);
    let mut delta = scaled(&z, -1.0);
    let (mut e_pe, mut e_pd, mut d_pd) = (0.0, 0.0, z_r);
    // the θ term is measured against the initial gradient so the stopping
    // rule does not depend on the units of the objective
    let target = norm_r0 * (norm_r0 / g0).powf(opts.theta).min(opts.kappa);
    let mut iterations = 0;
    for _ in 0..opts.max_inner {
        iterations += 1;
        let hdelta = p.rhess(x, egrad, &delta);
        let d_hd = p.inner(&delta, &hdelta);
        let alpha = z_r / d_hd;
        let e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha * alpha * d_pd;
        if d_hd <= 0.0 || e_pe_new >= radius * radius || !alpha.is_finite() {
            let tau = (-e_pd + (e_pd * e_pd + d_pd * (radius * radius - e_pe)).max(0.0).sqrt()) / d_pd;
            axpy(&mut eta, tau, &delta);
            axpy(&mut heta, tau, &hdelta);
            e_pe = radius * radius;
            break;
        }
        e_pe = e_pe_new;
        axpy(&mut eta, alpha, &delta);
        axpy(&mut heta, alpha, &hdelta);
        axpy(&mut r, alpha, &hdelta);
        if p.inner(&r, &r).sqrt() <= target {
            break;
        }
        z = precondition(&r);
        let z_r_new = p.inner(&z, &r);
        let beta = z_r_new / z_r;
        z_r = z_r_new;
        let mut d = scaled(&z, -1.0);
        axpy(&mut d, beta, &delta);
        delta = d;
        e_pd = beta * (e_pd + alpha * d_pd);
        d_pd = z_r + beta * beta * d_pd;
    }
    Tcg {
        eta,
        heta,
        norm: e_pe.sqrt(),
        iterations,
    }
}

/// Minimizes the penalized objective starting from `start`.
pub fn trust_region_minimize(p: &PenaltyProblem, start: ProductPoint, opts: &TrOptions) -> Result<(ProductPoint, TrReport)> {
    let mut x = start;
    let mut fx = p.objective(&x);
    let mut egrad = p.egrad(&x);
    let mut grad = p.rgrad(&x, &egrad);
    let mut gnorm = p.inner(&grad, &grad).sqrt();
    let g0 = gnorm;
    let max_radius = opts.max_radius.unwrap_or_else(|| {
        let scale: f64 = p
            .manifolds()
            .iter()
            .zip(p.reference())
            .map(|(m, f)| m.point_norm(f))
            .sum::<f64>();
        scale + 1.0
    });
    let mut radius = max_radius / 8.0;
    let gtol = (opts.gtol * g0).max(opts.gtol_abs);
    let mut report = TrReport {
        iterations: 0,
        accepted: 0,
        inner_iterations: 0,
        objective: fx,
        grad_norm: gnorm,
        initial_grad_norm: g0,
        stop: TrStop::MaxIterations,
        grad_history: vec![gnorm],
    };
    let prec = opts.precondition.then(|| Preconditioner::new(p));
    let mut flat = 0;
    let mut history = vec![fx];
    for _ in 0..opts.max_iter {
        if gnorm <= gtol || gnorm == 0.0 {
            report.stop = TrStop::GradientTolerance;
            break;
        }
        report.iterations += 1;
        let step = tcg(p, &x, &egrad, &grad, radius, g0.max(f64::MIN_POSITIVE), prec.as_ref(), opts);
        report.inner_iterations += step.iterations;
        let model = p.inner(&grad, &step.eta) + 0.5 * p.inner(&step.eta, &step.heta);
        let eta_norm = step.norm;
        // relative offset: objectives shrink with μ and an absolute floor would
        // accept any step once f is tiny
        let reg = fx.abs() * f64::EPSILON * 1e3;
        let candidate = p.retract(&x, &step.eta);
        let (rho, fnew, xnew) = match candidate {
            Ok(xn) => {
                let fnew = p.objective(&xn);
                let num = fx - fnew + reg;
                let den = -model + reg;
                let rho = if model <= 0.0 { num / den } else { -1.0 };
                (rho, fnew, Some(xn))
            }
            Err(e) => {
                debug!("retraction failed: {e}");
                (-1.0, f64::INFINITY, None)
            }
        };
        if rho < 0.25 {
            radius /= 4.0;
        } else if rho > 0.75 && (eta_norm - radius).abs() <= 1e-8 * radius.max(eta_norm) {
            radius = (2.0 * radius).min(max_radius);
        }
        if rho > 0.1 {
            if let Some(xn) = xnew {
                x = xn;
                fx = fnew;
                egrad = p.egrad(&x);
                grad = p.rgrad(&x, &egrad);
                gnorm = p.inner(&grad, &grad).sqrt();
                report.accepted += 1;
                report.grad_history.push(gnorm);
                history.push(fx);
            }
        }
        debug!(
            "tr iter {} f={fx:.6e} |g|={gnorm:.3e} rho={rho:.3} radius={radius:.3e} inner={}",
            report.iterations, step.iterations
        );
        // predicted decrease below the rounding level of f
        flat = if -model <= reg { flat + 1 } else { 0 };
        // linear convergence too slow to reach the gradient tolerance
        let window = opts.progress_window;
        let slow = window > 0
            && history.len() > window
            && history[history.len() - 1 - window] - fx <= opts.progress_tol * fx.abs();
        if radius < 1e-15 * max_radius || flat >= 3 || slow || -model <= 1e-15 * fx.abs() && rho <= 0.1 {
            report.stop = TrStop::Stagnation;
            break;
        }
    }
    if gnorm <= gtol {
        report.stop = TrStop::GradientTolerance;
    }
    report.objective = fx;
    report.grad_norm = gnorm;
    Ok((x, report))
}
