//! Approximate eigenpairs by Newton's method on the bordered system
//! `[F(λ)v; cᵀv − 1] = 0`.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMat, CVec, C64};
use crate::nep::{EigenpairSet, SplitNep};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Stop once `‖F(λ)v‖₂ ≤ tol · ‖F(λ)‖_F` for unit `v`.
    pub tol: f64,
    /// Normalization vector; all ones scaled to unit norm when absent.
    #[serde(skip)]
    pub c: Option<CVec>,
    /// Relative separation below which two eigenvalues count as one.
    pub dedup_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 50,
            tol: 1e-12,
            c: None,
            dedup_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub lambda: C64,
    /// Unit-norm eigenvector approximation.
    pub v: CVec,
    /// Relative residual `‖F(λ)v‖₂ / ‖F(λ)‖_F` at every iterate.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl NewtonResult {
    pub fn residual(&self) -> f64 {
        *self.history.last().unwrap_or(&f64::INFINITY)
    }

    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

fn relative_residual(nep: &SplitNep, lambda: C64, v: &CVec) -> f64 {
    let u = v / c64(v.norm(), 0.0);
    let r = nep.apply(lambda, &CMat::from_columns(&[u]));
    r.norm() / nep.frobenius_at(lambda)
}

/// Newton iteration from `(λ₀, v₀)`. Non-convergence is reported through
/// [`NewtonResult::converged`]; a singular `F(λ)` at an unconverged iterate is
/// an error.
pub fn newton_eigenpair(nep: &SplitNep, lambda0: C64, v0: &CVec, opts: &NewtonOptions) -> Result<NewtonResult> {
    let n = nep.n();
    if v0.len() != n {
        return Err(Error::Dimension(format!("start vector has length {}, expected {n}", v0.len())));
    }
    let c = opts
        .c
        .clone()
        .unwrap_or_else(|| CVec::from_element(n, c64(1.0 / (n as f64).sqrt(), 0.0)));
    let mut lambda = lambda0;
    let cv = c.transpose() * v0;
    let mut v = if cv[(0, 0)].norm() > 0.0 { v0 / cv[(0, 0)] } else { v0.clone() };
    let mut history = Vec::new();
    let mut converged = false;
    for it in 0..=opts.max_iter {
        let res = relative_residual(nep, lambda, &v);
        history.push(res);
        if res <= opts.tol {
            converged = true;
            break;
        }
        if it == opts.max_iter || !res.is_finite() {
            break;
        }
        let fact = nep.factor(lambda)?;
        let dv = nep.apply_derivative(lambda, &CMat::from_columns(&[v.clone()])).column(0).into_owned();
        let a = fact.solve(&dv);
        let denom = (c.transpose() * &a)[(0, 0)];
        if denom.norm() == 0.0 || !denom.norm().is_finite() {
            return Err(Error::Singular(format!("bordered Jacobian at lambda = {lambda}")));
        }
        lambda -= C64::new(1.0, 0.0) / denom;
        v = a / denom;
    }
    let nrm = v.norm();
    Ok(NewtonResult {
        lambda,
        v: v / c64(nrm, 0.0),
        history,
        converged,
    })
}

/// Points sampled uniformly from the disk `|z − center| ≤ radius`, with
/// real starts when `real` is set.
pub fn random_starts(count: usize, center: C64, radius: f64, real: bool, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            if real {
                center + c64(rng.random_range(-radius..=radius), 0.0)
            } else {
                let r = radius * rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                center + c64(r * t.cos(), r * t.sin())
            }
        })
        .collect()
}

#[derive(Debug)]
pub struct Collected {
    pub pairs: Option<EigenpairSet>,
    /// One entry per start, in start order.
    pub runs: Vec<Result<NewtonResult>>,
    pub requested: usize,
}

/// Runs Newton from every start concurrently and keeps the first `p`
/// distinct converged eigenvalues, in start order. Fewer than `p` yields a
/// partial set and a warning.
pub fn collect_pairs(nep: &SplitNep, starts: &[C64], p: usize, seed: u64, opts: &NewtonOptions) -> Result<Collected> {
    let n = nep.n();
    let real = starts.iter().all(|z| z.im == 0.0) && nep.funcs().iter().all(|f| f.is_real());
    let v0s: Vec<CVec> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        starts
            .iter()
            .map(|_| CVec::from_fn(n, |_, _| c64(rng.random_range(-1.0..1.0), if real { 0.0 } else { rng.random_range(-1.0..1.0) })))
            .collect()
    };
    let runs: Vec<Result<NewtonResult>> = starts
        .par_iter()
        .zip(v0s.par_iter())
        .map(|(&l0, v0)| newton_eigenpair(nep, l0, v0, opts))
        .collect();
    let mut kept: Vec<&NewtonResult> = Vec::new();
    for run in runs.iter().flatten() {
        if !run.converged || kept.len() == p {
            continue;
        }
        let scale = kept.iter().map(|r| r.lambda.norm()).fold(run.lambda.norm(), f64::max).max(1.0);
        if kept.iter().all(|r| (r.lambda - run.lambda).norm() > opts.dedup_tol * scale) {
            kept.push(run);
        }
    }
    if kept.len() < p {
        warn!("requested {p} eigenpairs, found {} distinct", kept.len());
    }
    let pairs = if kept.is_empty() {
        None
    } else {
        let lambdas = kept.iter().map(|r| r.lambda).collect();
        let cols: Vec<CVec> = kept.iter().map(|r| r.v.clone()).collect();
        Some(EigenpairSet::new(lambdas, CMat::from_columns(&cols))?)
    };
    Ok(Collected { pairs, runs, requested: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use crate::nep::{Coefficient, ScalarFn};

    fn diagonal_pencil(d: &[f64]) -> SplitNep {
        let n = d.len();
        let trip: Vec<_> = d.iter().enumerate().map(|(i, &x)| (i, i, x)).collect();
        SplitNep::new(
            vec![
                Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &trip)),
                Coefficient::identity(n).scaled(c64(-1.0, 0.0)),
            ],
            vec![ScalarFn::One, ScalarFn::Lambda],
        )
        .unwrap()
    }

    #[test]
    fn linear_pencil_converges_quadratically() {
        let d = [1.0, 2.5, -3.0, 4.0, 7.0];
        let nep = diagonal_pencil(&d);
        let v0 = CVec::from_fn(5, |i, _| c64(if i == 1 { 1.0 } else { 0.05 * (i as f64 + 1.0) }, 0.0));
        let res = newton_eigenpair(&nep, c64(2.3, 0.0), &v0, &NewtonOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.lambda - c64(2.5, 0.0)).norm() < 1e-12);
        assert!((res.v.norm() - 1.0).abs() < 1e-14);
        // quadratic tail: each residual roughly the square of the previous
        let h = &res.history;
        let tail: Vec<f64> = h.iter().copied().filter(|&r| r > 1e-14 && r < 1e-2).collect();
        for w in tail.windows(2) {
            assert!(w[1] <= 10.0 * w[0] * w[0], "{h:?}");
        }
    }

    #[test]
    fn start_at_eigenpair_takes_no_steps() {
        let nep = diagonal_pencil(&[1.0, 2.0, 3.0]);
        let v0 = CVec::from_fn(3, |i, _| c64(if i == 2 { 1.0 } else { 0.0 }, 0.0));
        let opts = NewtonOptions {
            c: Some(v0.clone()),
            ..NewtonOptions::default()
        };
        let res = newton_eigenpair(&nep, c64(3.0, 0.0), &v0, &opts).unwrap();
        assert!(res.converged);
        assert!(res.iterations() <= 1);
    }

    #[test]
    fn duplicates_are_merged() {
        let nep = diagonal_pencil(&[1.0, 2.0, 3.0, 10.0]);
        let starts = [c64(1.1, 0.0), c64(0.9, 0.0), c64(2.9, 0.0)];
        let got = collect_pairs(&nep, &starts, 3, 5, &NewtonOptions::default()).unwrap();
        let pairs = got.pairs.unwrap();
        let mut l: Vec<f64> = pairs.lambdas().iter().map(|z| z.re).collect();
        l.sort_by(f64::total_cmp);
        // both of the first two starts should land on λ = 1
        assert!(l.len() <= 3);
        for w in l.windows(2) {
            assert!(w[1] - w[0] > 1e-8);
        }
        let single = collect_pairs(&nep, &starts[..1], 1, 5, &NewtonOptions::default()).unwrap();
        assert_eq!(single.pairs.unwrap().p(), 1);
    }

    #[test]
    fn starts_are_deterministic_and_inside_disk() {
        let a = random_starts(10, c64(1.0, 1.0), 2.0, false, 3);
        assert_eq!(a, random_starts(10, c64(1.0, 1.0), 2.0, false, 3));
        assert!(a.iter().all(|z| (z - c64(1.0, 1.0)).norm() <= 2.0));
        assert!(random_starts(5, c64(0.0, 0.0), 1.0, true, 3).iter().all(|z| z.im == 0.0));
    }
}
