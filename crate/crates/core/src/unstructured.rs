//! Unstructured backward error of a set of approximate eigenpairs: the exact
//! minimal perturbation (kept in rank-`p` factored form), the bounds that go
//! with it, and the bounds available when only eigenvalues are known.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{cond2, khatri_rao_t, sigma, svd, CMat, CVec, C64, DEFAULT_RANK_TOL};
use crate::nep::{lowrank_frobenius, residual_bundle, EigenpairSet, ResidualBundle, SplitNep};
use crate::perturbation::{perturbed_residual, PerturbationForm, PerturbationSet};

/// Exact unstructured backward error from a residual bundle.
///
/// With `W = (G ⊙ᵀ Vᵀ)ᵀ` the stacked blocks `V fⱼ(Λ)`, the minimal
/// perturbation is `[δF₁ ⋯ δF_k] = −R W†`, so `δFⱼ = −R Mⱼᵀ` where `Mⱼᵀ` is
/// the `j`-th column block of `W†`.
pub fn backward_error_from_bundle(bundle: &ResidualBundle) -> PerturbationSet {
    let (n, p) = bundle.r.shape();
    let k = bundle.w.nrows() / n;
    let f = svd(&bundle.w);
    let rank = f.rank(DEFAULT_RANK_TOL);
    // W† = Vtᴴ S⁻¹ Uᴴ restricted to the numerical rank
    let mut wdag = CMat::zeros(p, k * n);
    for i in 0..rank {
        let v = f.vt.row(i).adjoint();
        let u = f.u.column(i).adjoint();
        wdag += (v * u).unscale(f.s[i]);
    }
    let rights: Vec<CMat> = (0..k)
        .map(|j| wdag.columns(j * n, n).transpose())
        .collect();
    let left = -&bundle.r;
    let eta = rights
        .iter()
        .map(|m| lowrank_frobenius(&left, m).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut set = PerturbationSet {
        form: PerturbationForm::Factored { left, rights },
        eta,
        residual_norm: 0.0,
    };
    set.residual_norm = perturbed_residual(bundle, &set).norm();
    set
}

/// Minimal-norm unstructured perturbation making every `(λ̂ᵢ, v̂ᵢ)` an exact
/// eigenpair.
pub fn backward_error_exact(nep: &SplitNep, pairs: &EigenpairSet) -> Result<PerturbationSet> {
    let bundle = residual_bundle(nep, pairs)?;
    Ok(backward_error_from_bundle(&bundle))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub eta_exact: Option<f64>,
    /// `σ_p̂(G ⊙ᵀ Vᵀ)⁻¹ ‖R‖_F` (with eigenvectors), or
    /// `σ_p̂(G ⊙ᵀ Vᵀ)⁻¹ √p maxᵢ σ̂ᵢ` (eigenvalues only).
    pub upper_krt: f64,
    /// `σ_p(G)⁻¹ κ₂(V) ‖R‖_F`, present when `p ≤ kn`.
    pub upper_g_kappa: Option<f64>,
    /// `σ_p(G)⁻¹ ‖R‖_F`, present when `p ≤ k`.
    pub upper_g: Option<f64>,
    /// `maxᵢ σ̂ᵢ / ‖G[i, :]‖₂` (eigenvalues only).
    pub lower_sv: Option<f64>,
    pub sigma_hats: Vec<f64>,
    pub r_norm: f64,
    /// Numerical rank of `G ⊙ᵀ Vᵀ`.
    pub rank_krt: usize,
    /// Eigenvector columns were rescaled to unit norm.
    pub rescaled: bool,
}

/// `c / s` with `0 / 0 = 0` and `c / 0 = ∞`.
fn ratio(c: f64, s: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else if s > 0.0 {
        c / s
    } else {
        f64::INFINITY
    }
}

fn krt_sigma(g: &CMat, v: &CMat) -> (f64, usize) {
    let m = khatri_rao_t(g, &v.transpose()).expect("G and V from the same pair set");
    let f = svd(&m);
    let rank = f.rank(DEFAULT_RANK_TOL);
    let s = if rank == 0 { 0.0 } else { f.s[rank - 1] };
    (s, rank)
}

/// Exact error together with the explicit upper bounds that only need
/// `G`, `V` and `‖R‖_F`. Columns of `V` are normalized first.
pub fn bounds_with_eigenvectors(nep: &SplitNep, pairs: &EigenpairSet) -> Result<BoundsReport> {
    let rescaled = !pairs.is_normalized();
    let (unit, _) = pairs.normalize();
    let bundle = residual_bundle(nep, &unit)?;
    let mut report = bounds_from_bundle(&bundle, unit.v());
    report.rescaled = rescaled;
    Ok(report)
}

/// [`bounds_with_eigenvectors`] for precomputed residual data; `v` must have
/// unit columns.
pub fn bounds_from_bundle(bundle: &ResidualBundle, v: &CMat) -> BoundsReport {
    let exact = backward_error_from_bundle(bundle);
    let (p, k, n) = (v.ncols(), bundle.g.ncols(), v.nrows());
    let r = bundle.r_norm;
    let (s_krt, rank) = krt_sigma(&bundle.g, v);
    let sigma_p_g = sigma(&bundle.g, p);
    let upper_g_kappa = (p <= k * n).then(|| {
        let kappa = cond2(v);
        if r == 0.0 {
            0.0
        } else {
            ratio(r, sigma_p_g) * kappa
        }
    });
    let upper_g = (p <= k).then(|| ratio(r, sigma_p_g));
    BoundsReport {
        eta_exact: Some(exact.eta),
        upper_krt: ratio(r, s_krt),
        upper_g_kappa,
        upper_g,
        lower_sv: None,
        sigma_hats: Vec::new(),
        r_norm: r,
        rank_krt: rank,
        rescaled: false,
    }
}

/// Smallest singular value of `F(λ)` and its right singular vector.
pub fn smallest_singular_triple(nep: &SplitNep, lambda: C64) -> (f64, CVec) {
    let f = svd(&nep.evaluate(lambda));
    let last = f.s.len() - 1;
    let v = f.vt.row(last).adjoint();
    (f.s[last], v)
}

/// Bounds on the eigenvalue-only backward error. Also returns the pair set
/// built from the right singular vectors `v̂ᵢ` the bounds are evaluated at.
pub fn bounds_eigenvalues_only(nep: &SplitNep, lambdas: &[C64]) -> Result<(BoundsReport, EigenpairSet)> {
    let triples: Vec<(f64, CVec)> = lambdas
        .par_iter()
        .map(|&l| smallest_singular_triple(nep, l))
        .collect();
    let n = nep.n();
    let p = lambdas.len();
    let mut v = CMat::zeros(n, p);
    for (i, (_, vi)) in triples.iter().enumerate() {
        v.set_column(i, vi);
    }
    let sigma_hats: Vec<f64> = triples.iter().map(|t| t.0).collect();
    let pairs = EigenpairSet::new(lambdas.to_vec(), v)?;
    let g = CMat::from_fn(p, nep.k(), |i, j| nep.funcs()[j].eval(lambdas[i]));
    let lower = sigma_hats
        .iter()
        .enumerate()
        .map(|(i, s)| ratio(*s, g.row(i).norm()))
        .fold(0.0, f64::max);
    let max_sigma = sigma_hats.iter().copied().fold(0.0, f64::max);
    let (s_krt, rank) = krt_sigma(&g, pairs.v());
    let upper = ratio((p as f64).sqrt() * max_sigma, s_krt);
    let eta_exact = (p == 1).then(|| lower);
    let r_norm = sigma_hats.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok((
        BoundsReport {
            eta_exact,
            upper_krt: upper,
            upper_g_kappa: None,
            upper_g: None,
            lower_sv: Some(lower),
            sigma_hats,
            r_norm,
            rank_krt: rank,
            rescaled: false,
        },
        pairs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, min_norm_solve, singular_values, vec, SparseMatrix};
    use crate::nep::{Coefficient, ScalarFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_cmat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMat {
        CMat::from_fn(m, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize, p: usize) -> (SplitNep, EigenpairSet) {
        let funcs = [ScalarFn::One, ScalarFn::Lambda, ScalarFn::ExpNeg, ScalarFn::Lambda2];
        let nep = SplitNep::new(
            (0..k).map(|_| Coefficient::Dense(rand_cmat(rng, n, n))).collect(),
            funcs[..k].to_vec(),
        )
        .unwrap();
        let lambdas = (0..p)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let pairs = EigenpairSet::new(lambdas, rand_cmat(rng, n, p)).unwrap();
        (nep, pairs)
    }

    /// Dense stacked system `((G ⊙ᵀ Vᵀ) ⊗ Iₙ) vec[δF] = −vec(R)`.
    fn stacked_system(nep: &SplitNep, pairs: &EigenpairSet) -> (CMat, CVec) {
        let b = residual_bundle(nep, pairs).unwrap();
        let m = khatri_rao_t(&b.g, &pairs.v().transpose()).unwrap();
        let a = kron(&m, &CMat::identity(nep.n(), nep.n()));
        (a, -vec(&b.r))
    }

    #[test]
    fn exact_eigenpairs_have_zero_backward_error() {
        let n = 5;
        let diag = [1.0, -2.0, 3.5, 0.25, -1.0];
        let a = SparseMatrix::from_real_triplets(n, n, &diag.iter().enumerate().map(|(i, d)| (i, i, *d)).collect::<Vec<_>>());
        let nep = SplitNep::new(
            vec![Coefficient::Sparse(a), Coefficient::identity(n)],
            vec![ScalarFn::One, ScalarFn::Polynomial(vec![C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])],
        )
        .unwrap();
        let v = CMat::from_fn(n, 2, |i, j| C64::new(if i == j + 1 { 1.0 } else { 0.0 }, 0.0));
        let pairs = EigenpairSet::new(vec![C64::new(-2.0, 0.0), C64::new(3.5, 0.0)], v).unwrap();
        let d = backward_error_exact(&nep, &pairs).unwrap();
        assert_eq!(d.eta, 0.0);
        assert!((0..2).all(|j| d.dense(j).norm() == 0.0));
    }

    #[test]
    fn single_pair_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let (nep, _) = random_instance(&mut rng, 10, 3, 1);
        let lam = C64::new(0.3, -0.4);
        let (s, v) = smallest_singular_triple(&nep, lam);
        let pairs = EigenpairSet::new(vec![lam], CMat::from_columns(&[v])).unwrap();
        let eta = backward_error_exact(&nep, &pairs).unwrap().eta;
        let g: f64 = nep.f_values(lam).iter().map(|f| f.norm_sqr()).sum::<f64>().sqrt();
        assert!((eta - s / g).abs() <= 1e-10 * eta);
    }

    #[test]
    fn matches_dense_min_norm_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (nep, pairs) = random_instance(&mut rng, 12, 3, 2);
        let (a, rhs) = stacked_system(&nep, &pairs);
        let oracle = min_norm_solve(&a, &rhs, DEFAULT_RANK_TOL).unwrap();
        let d = backward_error_exact(&nep, &pairs).unwrap();
        assert!((d.eta - oracle.x.norm()).abs() <= 1e-10 * d.eta);
        // the factored perturbation equals the oracle entrywise
        let n = nep.n();
        for j in 0..3 {
            let block = oracle.x.rows(j * n * n, n * n).into_owned();
            assert!((vec(&d.dense(j)) - block).norm() <= 1e-10 * d.eta);
        }
    }

    #[test]
    fn feasibility_minimality_and_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (nep, pairs) = random_instance(&mut rng, 8, 3, 3);
        let d = backward_error_exact(&nep, &pairs).unwrap();
        let b = residual_bundle(&nep, &pairs).unwrap();
        let scale = b.r_norm + d.eta * b.w.norm();
        assert!(d.residual_norm <= 1e-10 * scale);
        let perturbed = d.apply_to(&nep).unwrap();
        for (i, l) in pairs.lambdas().iter().enumerate() {
            let r = perturbed.evaluate(*l) * pairs.v().column(i);
            assert!(r.norm() <= 1e-10 * scale);
        }
        // every δFⱼ and every combination has rank ≤ p
        for j in 0..3 {
            let s = singular_values(&d.dense(j));
            assert!(s[3] <= 1e-12 * s[0]);
        }
        let combo = (0..3).fold(CMat::zeros(8, 8), |acc, j| acc + d.dense(j) * C64::new(rng.random_range(-1.0..1.0), 0.5));
        let s = singular_values(&combo);
        assert!(s[3] <= 1e-12 * s[0]);
        // sampled feasible perturbations are never smaller
        let (a, rhs) = stacked_system(&nep, &pairs);
        let full = crate::linalg::svd(&a);
        let vt = full.vt;
        let rank = full.s.iter().filter(|s| **s > 1e-12).count();
        let particular = min_norm_solve(&a, &rhs, DEFAULT_RANK_TOL).unwrap().x;
        // null-space directions: random vectors projected onto ker(A)
        for _ in 0..100 {
            let z = rand_cmat(&mut rng, a.ncols(), 1).column(0).into_owned();
            let mut proj = z.clone();
            for i in 0..rank {
                let row = vt.row(i).adjoint();
                let c = row.dotc(&z);
                proj -= row * c;
            }
            let x = &particular + proj * C64::new(0.1, 0.0);
            assert!((&a * &x - &rhs).norm() <= 1e-9 * rhs.norm());
            assert!(d.eta <= x.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn scaling_coefficients_scales_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (nep, pairs) = random_instance(&mut rng, 6, 2, 2);
        let eta = backward_error_exact(&nep, &pairs).unwrap().eta;
        let scaled = nep
            .with_coeffs(nep.coeffs().iter().map(|c| c.scaled(C64::new(4.0, 0.0))).collect())
            .unwrap();
        let eta4 = backward_error_exact(&scaled, &pairs).unwrap().eta;
        assert!((eta4 - 4.0 * eta).abs() <= 1e-12 * eta4);
    }

    #[test]
    fn orthonormal_v_collapses_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (nep, pairs) = random_instance(&mut rng, 10, 3, 2);
        let q = pairs.v().clone().qr().q();
        let pairs = EigenpairSet::new(pairs.lambdas().to_vec(), q).unwrap();
        let rep = bounds_with_eigenvectors(&nep, &pairs).unwrap();
        assert!(!rep.rescaled);
        let (ug, ugk) = (rep.upper_g.unwrap(), rep.upper_g_kappa.unwrap());
        assert!((ug - ugk).abs() <= 1e-10 * ug);
        let e = rep.eta_exact.unwrap();
        assert!(e <= rep.upper_krt * (1.0 + 1e-10) && rep.upper_krt <= ugk * (1.0 + 1e-10));
    }

    #[test]
    fn repeated_eigenvalues_give_infinite_g_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let (nep, pairs) = random_instance(&mut rng, 6, 2, 3);
        let l = C64::new(0.2, 0.1);
        let pairs = EigenpairSet::new(vec![l, l, l], pairs.v().clone()).unwrap();
        let rep = bounds_with_eigenvectors(&nep, &pairs).unwrap();
        assert!(rep.rescaled);
        assert_eq!(rep.upper_g_kappa, Some(f64::INFINITY));
        assert!(rep.upper_g.is_none());
        assert!(rep.upper_krt.is_finite());
    }

    #[test]
    fn eigenvalue_only_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..10 {
            let (nep, pairs) = random_instance(&mut rng, 12, 3, 2);
            let (rep, at_sv) = bounds_eigenvalues_only(&nep, pairs.lambdas()).unwrap();
            let eta = backward_error_exact(&nep, &at_sv).unwrap().eta;
            let lower = rep.lower_sv.unwrap();
            assert!(lower <= eta * (1.0 + 1e-10));
            assert!(eta <= rep.upper_krt * (1.0 + 1e-10));
        }
    }

    #[test]
    fn eigenvalue_only_single_pair_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (nep, _) = random_instance(&mut rng, 9, 3, 1);
        let lam = C64::new(-0.5, 0.2);
        let (rep, _) = bounds_eigenvalues_only(&nep, &[lam]).unwrap();
        let g: f64 = nep.f_values(lam).iter().map(|f| f.norm_sqr()).sum::<f64>().sqrt();
        let want = rep.sigma_hats[0] / g;
        assert!((rep.lower_sv.unwrap() - want).abs() <= 1e-12 * want);
        assert!((rep.upper_krt - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn eigenvalue_only_exact_eigenvalue_gives_zero() {
        let n = 4;
        let a = SparseMatrix::from_real_triplets(n, n, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (3, 3, 4.0)]);
        let nep = SplitNep::new(
            vec![Coefficient::Sparse(a), Coefficient::identity(n)],
            vec![ScalarFn::One, ScalarFn::Polynomial(vec![C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])],
        )
        .unwrap();
        let (rep, _) = bounds_eigenvalues_only(&nep, &[C64::new(2.0, 0.0), C64::new(4.0, 0.0)]).unwrap();
        assert!(rep.lower_sv.unwrap() < 1e-15);
        assert!(rep.upper_krt < 1e-15);
    }
}
