//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Reference values come from dense constructions written here, not from
//! the library: stacked Kronecker systems solved through their normal
//! equations, pseudo-inverses from nalgebra, singular vectors of `F(λ)`.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nepbe::bench::{beam_perturbation_magnitude, riemannian_run, BenchConfig};
use nepbe::gallery::{build_beam, build_quadratic_lowrank, build_random_split, by_name, ensemble_member, EnsembleOptions};
use nepbe::linalg::{c64, to_complex, CMat, CVec, RMat, SparseMatrix, C64};
use nepbe::nep::{residual_bundle, Coefficient, EigenpairSet, ScalarFn, SplitNep};
use nepbe::riemann::{penalty_continuation, PenaltyProblem, Point, RiemannOptions, Tangent};
use nepbe::solve::{collect_pairs, random_starts, NewtonOptions};
use nepbe::structured::{structured_backward_error, StructureSpec};
use nepbe::symmetric::{symmetric_backward_error, symmetric_bound};
use nepbe::unstructured::{backward_error_exact, bounds_eigenvalues_only, bounds_with_eigenvectors};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- oracles

/// Scalar functions used by the random instances, evaluated directly.
#[derive(Clone, Copy)]
enum Kind {
    One,
    Lambda,
    ExpNeg,
    Lambda2,
}

const KINDS: [Kind; 4] = [Kind::One, Kind::Lambda, Kind::ExpNeg, Kind::Lambda2];

impl Kind {
    fn eval(self, z: C64) -> C64 {
        match self {
            Kind::One => c64(1.0, 0.0),
            Kind::Lambda => z,
            Kind::ExpNeg => (-z).exp(),
            Kind::Lambda2 => z * z,
        }
    }

    fn scalar_fn(self) -> ScalarFn {
        match self {
            Kind::One => ScalarFn::One,
            Kind::Lambda => ScalarFn::Lambda,
            Kind::ExpNeg => ScalarFn::ExpNeg,
            Kind::Lambda2 => ScalarFn::Lambda2,
        }
    }
}

/// Dense instance kept alongside the library object.
struct Dense {
    coeffs: Vec<CMat>,
    kinds: Vec<Kind>,
    lambdas: Vec<C64>,
    v: CMat,
}

impl Dense {
    fn nep(&self) -> SplitNep {
        SplitNep::new(
            self.coeffs.iter().cloned().map(Coefficient::Dense).collect(),
            self.kinds.iter().map(|k| k.scalar_fn()).collect(),
        )
        .unwrap()
    }

    fn pairs(&self) -> EigenpairSet {
        EigenpairSet::new(self.lambdas.clone(), self.v.clone()).unwrap()
    }

    fn f_at(&self, z: C64) -> CMat {
        let n = self.v.nrows();
        self.coeffs
            .iter()
            .zip(&self.kinds)
            .fold(CMat::zeros(n, n), |acc, (c, k)| acc + c * k.eval(z))
    }

    /// `R = [F(λ₁)v₁ ⋯ F(λ_p)v_p]`.
    fn residual(&self) -> CMat {
        let cols: Vec<CVec> = self
            .lambdas
            .iter()
            .enumerate()
            .map(|(i, l)| self.f_at(*l) * self.v.column(i))
            .collect();
        CMat::from_columns(&cols)
    }

    /// `W` with blocks `Wⱼ = V diag(fⱼ(λ₁), …, fⱼ(λ_p))`, so that
    /// `[δF₁ ⋯ δF_k] W = −R` is the feasibility condition.
    fn w(&self) -> CMat {
        let (n, p) = self.v.shape();
        let k = self.coeffs.len();
        let mut w = CMat::zeros(k * n, p);
        for (j, kind) in self.kinds.iter().enumerate() {
            for i in 0..p {
                let f = kind.eval(self.lambdas[i]);
                for a in 0..n {
                    w[(j * n + a, i)] = self.v[(a, i)] * f;
                }
            }
        }
        w
    }
}

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn rand_cmat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| rand_c(rng))
}

fn random_dense(rng: &mut ChaCha8Rng, n: usize, k: usize, p: usize) -> Dense {
    Dense {
        coeffs: (0..k).map(|_| rand_cmat(rng, n, n)).collect(),
        kinds: KINDS[..k].to_vec(),
        lambdas: (0..p).map(|_| rand_c(rng)).collect(),
        v: rand_cmat(rng, n, p),
    }
}

/// Minimum-norm solution of an underdetermined system with full row rank.
fn min_norm(a: &CMat, b: &CVec) -> CVec {
    let gram = a * a.adjoint();
    let y = gram.lu().solve(b).expect("full row rank");
    a.adjoint() * y
}

fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Stacked system `Σⱼ (Wⱼᵀ ⊗ Iₙ) vec(δFⱼ) = −vec(R)`.
fn stacked(d: &Dense) -> (CMat, CVec) {
    let (n, p) = d.v.shape();
    let k = d.coeffs.len();
    let w = d.w();
    let mut a = CMat::zeros(n * p, k * n * n);
    for j in 0..k {
        let wj = w.rows(j * n, n);
        for i in 0..p {
            for b in 0..n {
                for r in 0..n {
                    // column index of entry (r, b) of δFⱼ in vec order
                    a[(i * n + r, j * n * n + b * n + r)] = wj[(b, i)];
                }
            }
        }
    }
    (a, -vec_of(&d.residual()))
}

fn sigma_min(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.min()
}

fn smallest_right_singular_vector(m: &CMat) -> (f64, CVec) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let (i, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    (*s, vt.row(i).adjoint())
}

/// `‖R W⁺‖_F`, the unstructured backward error when `W` has full column
/// rank.
fn eta_oracle(r: &CMat, w: &CMat) -> f64 {
    let pinv = w.clone().pseudo_inverse(0.0).unwrap();
    (r * pinv).norm()
}

fn gauss(rng: &mut ChaCha8Rng, m: usize, n: usize) -> RMat {
    RMat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_real_pairs(rng: &mut ChaCha8Rng, n: usize, p: usize) -> EigenpairSet {
    let lambdas = (0..p).map(|_| c64(rng.random_range(-1.0..1.0), 0.0)).collect();
    EigenpairSet::new(lambdas, to_complex(&gauss(rng, n, p))).unwrap().normalize().0
}

fn random_complex_pairs(rng: &mut ChaCha8Rng, n: usize, p: usize) -> EigenpairSet {
    let lambdas = (0..p).map(|_| rand_c(rng)).collect();
    EigenpairSet::new(lambdas, rand_cmat(rng, n, p)).unwrap().normalize().0
}

// ---------------------------------------------------------------- criteria

fn oracle_unstructured() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_eta, mut worst_res) = (0.0f64, 0.0f64);
    for t in 0..50 {
        let n = rng.random_range(3..=12);
        let k = rng.random_range(1..=4);
        let p = rng.random_range(1..=3);
        let d = random_dense(&mut rng, n, k, p);
        let (a, b) = stacked(&d);
        let want = min_norm(&a, &b).norm();
        let got = backward_error_exact(&d.nep(), &d.pairs()).map_err(|e| e.to_string())?;
        let e = rel(got.eta, want);
        worst_eta = worst_eta.max(e);
        ensure(e <= 1e-10, || format!("instance {t} (n={n}, k={k}, p={p}): eta {} vs oracle {want}, rel {e:.2e}", got.eta))?;
        // residual of the perturbed problem, evaluated on dense matrices
        let perturbed = Dense {
            coeffs: d.coeffs.iter().enumerate().map(|(j, c)| c + got.dense(j)).collect(),
            kinds: d.kinds.clone(),
            lambdas: d.lambdas.clone(),
            v: d.v.clone(),
        };
        let scale = d.residual().norm() + got.eta * d.w().norm();
        let res = perturbed.residual().norm() / scale;
        worst_res = worst_res.max(res);
        ensure(res <= 1e-10, || format!("instance {t}: perturbed residual {res:.2e} x scale"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max rel err {worst_eta:.1e}, max residual {worst_res:.1e}·scale, {secs:.2}s"))
}

fn closed_form_single_pair() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for t in 0..100 {
        let mut d = random_dense(&mut rng, 20, 3, 1);
        let lam = d.lambdas[0];
        let (s, v) = smallest_right_singular_vector(&d.f_at(lam));
        d.v = CMat::from_columns(&[v]);
        let g: f64 = d.kinds.iter().map(|k| k.eval(lam).norm_sqr()).sum::<f64>().sqrt();
        let want = s / g;
        let got = backward_error_exact(&d.nep(), &d.pairs()).map_err(|e| e.to_string())?.eta;
        let e = rel(got, want);
        worst = worst.max(e);
        ensure(e <= 1e-10, || format!("instance {t}: {got} vs {want}, rel {e:.2e}"))?;
    }
    Ok(format!("max rel err {worst:.1e}"))
}

fn bound_ordering() -> Outcome {
    let g = build_random_split(64, 7, false);
    let pairs = g.eigenpairs(3, 12, 7).map_err(|e| e.to_string())?.normalize().0;
    let opts = EnsembleOptions {
        count: 200,
        range: (1e-12, 1e-1),
        seed: 7,
        structured: false,
    };
    let (mut violations, mut with_g) = (0, 0);
    let slack = 1.0 + 1e-10;
    let mut first = None;
    for i in 0..opts.count {
        let member = ensemble_member(&g, &opts, i).map_err(|e| e.to_string())?;
        let nep = member.apply(&g.nep).map_err(|e| e.to_string())?;
        let rep = bounds_with_eigenvectors(&nep, &pairs).map_err(|e| e.to_string())?;
        let eta = rep.eta_exact.ok_or("no exact eta")?;
        let kappa = rep.upper_g_kappa.ok_or("no kappa bound")?;
        // the cheapest bound, recomputed from G⊙ᵀVᵀ built here
        let b = residual_bundle(&nep, &pairs).map_err(|e| e.to_string())?;
        let (p, k, n) = (pairs.p(), nep.k(), nep.n());
        let krt = CMat::from_fn(p, k * n, |i, c| b.g[(i, c / n)] * pairs.v()[(c % n, i)]);
        let upper_krt = b.r.norm() / sigma_min(&krt);
        let mut bad = rel(rep.upper_krt, upper_krt) > 1e-8 || eta > rep.upper_krt * slack || rep.upper_krt > kappa * slack;
        if let Some(ug) = rep.upper_g {
            with_g += 1;
            bad |= eta > ug * slack;
        }
        if bad {
            violations += 1;
            first.get_or_insert(format!("member {i}: eta {eta:e}, krt {:e} (here {upper_krt:e}), kappa {kappa:e}, G {:?}", rep.upper_krt, rep.upper_g));
        }
    }
    ensure(with_g == opts.count, || format!("G bound present for {with_g} of {} members", opts.count))?;
    ensure(violations == 0, || format!("{violations} violations; {}", first.unwrap()))?;
    Ok(format!("{} members, 0 violations", opts.count))
}

fn eigenvalue_only_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut violations = 0;
    let mut first = None;
    for t in 0..100 {
        let n = rng.random_range(4..=12);
        let p = rng.random_range(1..=3);
        let mut d = random_dense(&mut rng, n, 3, p);
        let cols: Vec<CVec> = d.lambdas.iter().map(|l| smallest_right_singular_vector(&d.f_at(*l)).1).collect();
        d.v = CMat::from_columns(&cols);
        let eta = eta_oracle(&d.residual(), &d.w());
        let (rep, _) = bounds_eigenvalues_only(&d.nep(), &d.lambdas).map_err(|e| e.to_string())?;
        let lower = rep.lower_sv.ok_or("no lower bound")?;
        let slack = 1e-10 * rep.upper_krt.max(eta);
        if lower > eta + slack || eta > rep.upper_krt + slack {
            violations += 1;
            first.get_or_insert(format!("instance {t}: {lower:e} <= {eta:e} <= {:e} fails", rep.upper_krt));
        }
    }
    ensure(violations == 0, || format!("{violations} violations; {}", first.unwrap()))?;
    Ok("100 instances, 0 violations".into())
}

fn random_pattern(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize)> {
    let mut pat = Vec::new();
    for b in 0..n {
        for a in 0..n {
            if a == b || rng.random::<f64>() < density {
                pat.push((a, b));
            }
        }
    }
    pat
}

fn structured_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for t in 0..50 {
        let n = rng.random_range(4..=16);
        let p = rng.random_range(1..=3);
        let d = random_dense(&mut rng, n, 3, p);
        let patterns: Vec<_> = (0..3).map(|_| random_pattern(&mut rng, n, 0.3)).collect();
        // one column per pattern entry: δFⱼ = e_a e_bᵀ contributes row b of
        // Wⱼ to row a of the residual
        let w = d.w();
        let cols: usize = patterns.iter().map(Vec::len).sum();
        let mut a = CMat::zeros(n * p, cols);
        let mut c = 0;
        for (j, pat) in patterns.iter().enumerate() {
            for &(r, b) in pat {
                for i in 0..p {
                    a[(i * n + r, c)] = w[(j * n + b, i)];
                }
                c += 1;
            }
        }
        let want = min_norm(&a, &-vec_of(&d.residual())).norm();
        let specs: Vec<_> = patterns.into_iter().map(StructureSpec::Sparsity).collect();
        let got = structured_backward_error(&d.nep(), &d.pairs(), &specs).map_err(|e| e.to_string())?.eta;
        let e = rel(got, want);
        worst = worst.max(e);
        ensure(e <= 1e-8, || format!("instance {t} (n={n}, p={p}): {got} vs {want}, rel {e:.2e}"))?;
        let eta = backward_error_exact(&d.nep(), &d.pairs()).map_err(|e| e.to_string())?.eta;
        ensure(got >= eta * (1.0 - 1e-10), || format!("instance {t}: eta_S {got} < eta {eta}"))?;
    }
    Ok(format!("max rel err {worst:.1e}, eta_S >= eta throughout"))
}

fn symmetric_cross_validation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut worst, mut worst_sym) = (0.0f64, 0.0f64);
    for t in 0..50 {
        let n = rng.random_range(4..=32);
        let p = rng.random_range(1..=3);
        let coeffs: Vec<CMat> = (0..3)
            .map(|_| {
                let a = gauss(&mut rng, n, n);
                to_complex(&(&a + a.transpose()))
            })
            .collect();
        let nep = SplitNep::new(
            coeffs.into_iter().map(Coefficient::Dense).collect(),
            vec![ScalarFn::One, ScalarFn::Lambda, ScalarFn::ExpNeg],
        )
        .unwrap();
        let pairs = random_real_pairs(&mut rng, n, p);
        let sym = symmetric_backward_error(&nep, &pairs).map_err(|e| e.to_string())?;
        let lin = structured_backward_error(&nep, &pairs, &[StructureSpec::Symmetric, StructureSpec::Symmetric, StructureSpec::Symmetric])
            .map_err(|e| e.to_string())?;
        let e = rel(sym.eta, lin.eta);
        worst = worst.max(e);
        ensure(e <= 1e-8, || format!("instance {t} (n={n}, p={p}): {} vs {}, rel {e:.2e}", sym.eta, lin.eta))?;
        for j in 0..3 {
            let dj = sym.dense(j);
            let asym = (&dj - dj.transpose()).norm() / dj.norm().max(f64::MIN_POSITIVE);
            worst_sym = worst_sym.max(asym);
            ensure(asym <= 1e-12, || format!("instance {t}: dF{j} asymmetry {asym:.2e}"))?;
        }
        let bound = symmetric_bound(&nep, &pairs).map_err(|e| e.to_string())?.bound;
        ensure(sym.eta <= bound * (1.0 + 1e-10), || format!("instance {t}: bound {bound} < eta_S {}", sym.eta))?;
    }
    Ok(format!("max rel err {worst:.1e}, max asymmetry {worst_sym:.1e}, 0 bound violations"))
}

fn tridiagonal_pattern(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i.saturating_sub(1)..(i + 2).min(n)).map(move |j| (i, j)))
        .collect()
}

fn random_sparse(rng: &mut ChaCha8Rng, n: usize, pattern: &[(usize, usize)]) -> Coefficient {
    let trip: Vec<_> = pattern.iter().map(|&(i, j)| (i, j, rng.random_range(-1.0..1.0))).collect();
    Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &trip))
}

fn riemannian_flat() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (mut worst, mut worst_res) = (0.0f64, 0.0f64);
    for t in 0..20 {
        let n = 8 + (t * 56) / 19;
        let pat = tridiagonal_pattern(n);
        let wide = random_pattern(&mut rng, n, 0.1);
        let nep = SplitNep::new(
            vec![random_sparse(&mut rng, n, &pat), random_sparse(&mut rng, n, &wide), Coefficient::identity(n)],
            vec![ScalarFn::One, ScalarFn::Lambda, ScalarFn::ExpNeg],
        )
        .unwrap();
        let specs = vec![StructureSpec::Sparsity(pat), StructureSpec::Sparsity(wide), StructureSpec::ScaledIdentity];
        // real pairs: the optimum over complex perturbations is then real,
        // so the linear solver is a valid reference
        let pairs = random_real_pairs(&mut rng, n, 1 + t % 3);
        let exact = structured_backward_error(&nep, &pairs, &specs).map_err(|e| e.to_string())?.eta;
        let rep = penalty_continuation(&nep, &pairs, &specs, &RiemannOptions::default()).map_err(|e| e.to_string())?;
        let e = rel(rep.eta, exact);
        worst = worst.max(e);
        ensure(e <= 0.05, || format!("instance {t} (n={n}): {} vs {exact}", rep.eta))?;
        let res = rep.residual / nep.coeff_frobenius();
        worst_res = worst_res.max(res);
        ensure(res <= 1e-8, || format!("instance {t}: residual {res:.2e}·scale"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max rel diff {worst:.1e}, max residual {worst_res:.1e}·scale, {secs:.1}s"))
}

fn riemannian_fixed_rank() -> Outcome {
    let g = build_quadratic_lowrank(500, 1).map_err(|e| e.to_string())?;
    let pairs = g.eigenpairs(2, 20, 1).map_err(|e| e.to_string())?;
    let rel_size = nepbe::bench::QUADRATIC_RELATIVE_PERTURBATION;
    let opts = EnsembleOptions {
        count: 1,
        range: (rel_size, rel_size),
        seed: 1,
        structured: true,
    };
    let member = ensemble_member(&g, &opts, 0).map_err(|e| e.to_string())?;
    let perturbed = member.apply(&g.nep).map_err(|e| e.to_string())?;
    let rep = penalty_continuation(&perturbed, &pairs, &g.specs, &RiemannOptions::default()).map_err(|e| e.to_string())?;
    let Point::FixedRank { s, .. } = &rep.points[1] else {
        return Err("second coefficient is not on the fixed-rank manifold".into());
    };
    let sv = s.clone().svd(false, false).singular_values;
    ensure(sv.len() == 2 && sv.min() > 1e-12 * sv.max(), || format!("core singular values {sv:?}"))?;
    // independent residual of the returned coefficients
    let coeffs = perturbed
        .coeffs()
        .iter()
        .zip(0..)
        .map(|(c, j)| Coefficient::Dense(c.to_dense() + rep.perturbation.dense(j)))
        .collect();
    let fin = perturbed.with_coeffs(coeffs).map_err(|e| e.to_string())?;
    let f1 = fin.coeffs()[1].to_dense();
    let s1 = f1.svd(false, false).singular_values;
    let mut s1: Vec<f64> = s1.iter().copied().collect();
    s1.sort_by(|a, b| b.total_cmp(a));
    ensure(s1[2] <= 1e-12 * s1[0], || format!("third singular value {:e} of {:e}", s1[2], s1[0]))?;
    let res = residual_bundle(&fin, &pairs).map_err(|e| e.to_string())?.r_norm;
    let scale = perturbed.coeff_frobenius();
    ensure(res <= 1e-7 * scale, || format!("residual {res:.2e} > 1e-7·{scale:.2e}"))?;
    let delta = member.frobenius_norm();
    let ratio = rep.eta / delta;
    ensure(rep.eta <= delta, || format!("eta_S {} > |dD| {delta}", rep.eta))?;
    ensure((0.5..=1.0).contains(&ratio), || format!("eta_S / |dD| = {ratio:.3}"))?;
    Ok(format!(
        "eta_S {:.6e}, |dD| {delta:.6e}, ratio {ratio:.3}, residual {res:.1e}, {:.1}s",
        rep.eta, rep.seconds
    ))
}

fn beam_scaling() -> Outcome {
    let cfg = BenchConfig::default();
    let mut runs = Vec::new();
    for n in [1000, 2000] {
        let g = build_beam(n).map_err(|e| e.to_string())?;
        let mag = beam_perturbation_magnitude(n);
        let run = riemannian_run(&g, 3, mag, &cfg).map_err(|e| e.to_string())?;
        ensure(run.eta_s <= run.delta_norm, || format!("n={n}: eta_S {} > |dD| {}", run.eta_s, run.delta_norm))?;
        ensure(run.residual <= 1e-7, || format!("n={n}: residual {:.2e}", run.residual))?;
        runs.push(run);
    }
    let (a, b) = (&runs[0], &runs[1]);
    let linear = a.seconds * b.n as f64 / a.n as f64;
    ensure(b.seconds <= 10.0 * linear, || format!("t({}) = {:.1}s exceeds 10x the linear extrapolation {linear:.1}s", b.n, b.seconds))?;
    Ok(runs
        .iter()
        .map(|r| format!("n={} eta_S {:.3e} |dD| {:.3e} res {:.1e} {:.1}s", r.n, r.eta_s, r.delta_norm, r.residual, r.seconds))
        .collect::<Vec<_>>()
        .join("; "))
}

fn derivative_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut combos = Vec::new();
    for name in ["beam", "random", "random-symmetric", "sparse-random", "quadratic"] {
        let g = by_name(name, 9, 3).map_err(|e| e.to_string())?;
        let n = g.nep.n();
        let mut sets = vec![random_real_pairs(&mut rng, n, 2)];
        if !name.contains("symmetric") {
            sets.push(random_complex_pairs(&mut rng, n, 2));
        }
        for pairs in sets {
            let b = residual_bundle(&g.nep, &pairs).map_err(|e| e.to_string())?;
            let p = PenaltyProblem::from_nep(&g.nep, &b, &g.specs, 0.37).map_err(|e| e.to_string())?;
            combos.push(p.manifolds().iter().map(|m| m.name()).collect::<Vec<_>>().join("×"));
            // move off the reference point so nothing vanishes by symmetry
            let x: Vec<Point> = p
                .manifolds()
                .iter()
                .zip(p.reference())
                .map(|(m, x)| m.retract(x, &m.random_tangent(x, &mut rng).scaled(0.3)).unwrap())
                .collect();
            let eg = p.egrad(&x);
            let grad = p.rgrad(&x, &eg);
            for _ in 0..20 {
                let v: Vec<Tangent> = p.manifolds().iter().zip(&x).map(|(m, xj)| m.random_tangent(xj, &mut rng)).collect();
                let along = |h: f64| -> Vec<Point> {
                    let t: Vec<Tangent> = v.iter().map(|t| t.scaled(h)).collect();
                    p.retract(&x, &t).unwrap()
                };
                let h = 1e-5;
                let fd = (p.objective(&along(h)) - p.objective(&along(-h))) / (2.0 * h);
                let an = p.inner(&grad, &v);
                let e = (fd - an).abs() / (p.inner(&grad, &grad) * p.inner(&v, &v)).sqrt();
                worst_g = worst_g.max(e);
                ensure(e <= 1e-5, || format!("{name}: gradient fd {fd} analytic {an}"))?;
                // egrad is affine in the ambient point; the central
                // difference along the retraction curve cancels its curvature
                let h = 1e-4;
                let (gp, gm) = (p.egrad(&along(h)), p.egrad(&along(-h)));
                let dirs: Vec<_> = p
                    .manifolds()
                    .iter()
                    .zip(&x)
                    .zip(&v)
                    .map(|((m, xj), t)| m.tangent_to_ambient(xj, t))
                    .collect();
                let hv = p.ehess_vec(&dirs);
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..hv.len() {
                    let fdj = (gp[j].to_dense() - gm[j].to_dense()) / (2.0 * h);
                    let anj = hv[j].to_dense();
                    num += (&fdj - &anj).norm_squared();
                    den += anj.norm_squared();
                }
                let e = (num / den.max(f64::MIN_POSITIVE)).sqrt();
                worst_h = worst_h.max(e);
                ensure(e <= 1e-4, || format!("{name}: ehess_vec rel err {e:.2e}"))?;
            }
        }
    }
    combos.sort();
    combos.dedup();
    Ok(format!(
        "{} manifold combinations, max gradient err {worst_g:.1e}, max Hessian err {worst_h:.1e}",
        combos.len()
    ))
}

fn newton_beam() -> Outcome {
    let g = build_beam(1000).map_err(|e| e.to_string())?;
    let (center, radius) = g.start_disk;
    let starts = random_starts(20, center, radius, g.real_starts, 11);
    let got = collect_pairs(&g.nep, &starts, 20, 11, &NewtonOptions::default()).map_err(|e| e.to_string())?;
    let pairs = got.pairs.ok_or("no converged start")?;
    let mut good: Vec<C64> = Vec::new();
    for (i, l) in pairs.lambdas().iter().enumerate() {
        let v = pairs.v().column(i).into_owned();
        let f = g.nep.evaluate(*l);
        let res = (&f * &v).norm() / (v.norm() * f.norm());
        if res <= 1e-12 && good.iter().all(|m| (m - l).norm() > 1e-8 * l.norm().max(1.0)) {
            good.push(*l);
        }
    }
    ensure(good.len() >= 3, || format!("only {} distinct eigenpairs with residual <= 1e-12", good.len()))?;
    Ok(format!("{} distinct eigenpairs from 20 starts", good.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("unstructured oracle equivalence", oracle_unstructured),
        ("single-pair closed form", closed_form_single_pair),
        ("bound ordering sweep", bound_ordering),
        ("eigenvalue-only sandwich", eigenvalue_only_sandwich),
        ("structured linear oracle", structured_oracle),
        ("symmetric cross-validation", symmetric_cross_validation),
        ("riemannian vs exact on flat manifolds", riemannian_flat),
        ("riemannian fixed-rank feasibility", riemannian_fixed_rank),
        ("beam scaling", beam_scaling),
        ("gradient and hessian checks", derivative_checks),
        ("newton on the beam", newton_beam),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!("PASS {name}: {detail} [{secs:.1}s]\n"),
            Err(why) => format!("FAIL {name}: {why} [{secs:.1}s]\n"),
        };
        // bypass output capture so the summary lands in the test log
        let _ = std::io::stderr().write_all(line.as_bytes());
        if outcome.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[allow(dead_code)]
fn _assert_dmatrix_is_cmat(_: DMatrix<C64>) {}
