//! Test problems and perturbation ensembles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, to_complex, CMat, RMat, SparseMatrix, C64};
use crate::nep::{Coefficient, EigenpairSet, ScalarFn, SplitNep};
use crate::solve::{collect_pairs, random_starts, NewtonOptions};
use crate::structured::StructureSpec;

#[derive(Debug, Clone)]
pub struct GalleryProblem {
    pub name: String,
    pub nep: SplitNep,
    pub specs: Vec<StructureSpec>,
    pub seed: u64,
    /// Disk `(center, radius)` Newton starts are drawn from.
    pub start_disk: (C64, f64),
    /// Whether real starts suffice (real eigenvalues are sought).
    pub real_starts: bool,
}

fn gauss(rng: &mut ChaCha8Rng, m: usize, n: usize) -> RMat {
    RMat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn tridiagonal(n: usize, sub: f64, diag: f64, sup: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, sub));
        }
        t.push((i, i, diag));
        if i + 1 < n {
            t.push((i, i + 1, sup));
        }
    }
    t
}

fn pattern(t: &[(usize, usize, f64)]) -> Vec<(usize, usize)> {
    t.iter().map(|&(i, j, _)| (i, j)).collect()
}

fn beam_stiffness_triplets(n: usize) -> Vec<(usize, usize, f64)> {
    let mut a0 = tridiagonal(n - 1, 1.0, -2.0, 1.0);
    a0.push((n - 2, n - 1, -1.0));
    a0.push((n - 1, n - 2, -(n as f64)));
    a0.push((n - 1, n - 1, n as f64));
    a0
}

/// The coefficient `A₀` of the beam problem, `n ≥ 2`.
pub fn beam_stiffness(n: usize) -> SparseMatrix {
    SparseMatrix::from_real_triplets(n, n, &beam_stiffness_triplets(n))
}

/// Beam with delayed feedback, `D(λ) = −λI + A₀ + e^{−λ} eₙeₙᵀ`.
pub fn build_beam(n: usize) -> Result<GalleryProblem> {
    if n < 2 {
        return Err(Error::Dimension(format!("beam needs n >= 2, got {n}")));
    }
    let a0 = beam_stiffness_triplets(n);
    let a1 = [(n - 1, n - 1, 1.0)];
    let nep = SplitNep::new(
        vec![
            Coefficient::identity(n),
            Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &a0)),
            Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &a1)),
        ],
        vec![ScalarFn::Polynomial(vec![c64(0.0, 0.0), c64(-1.0, 0.0)]), ScalarFn::One, ScalarFn::ExpNeg],
    )?;
    let specs = vec![
        StructureSpec::ScaledIdentity,
        StructureSpec::Sparsity(pattern(&a0)),
        StructureSpec::Sparsity(pattern(&a1)),
    ];
    Ok(GalleryProblem {
        name: format!("beam-{n}"),
        nep,
        specs,
        seed: 0,
        start_disk: (c64(-1.0, 0.0), 1.0),
        real_starts: true,
    })
}

const RANDOM_FUNCS: fn() -> Vec<ScalarFn> =
    || vec![ScalarFn::One, ScalarFn::Lambda, ScalarFn::Lambda2, ScalarFn::ExpNeg, ScalarFn::ExpNeg2];

/// `A₀ + λA₁ + λ²I + e^{−λ}E₁ + e^{−2λ}E₂` with standard normal `A₀, A₁, E₁,
/// E₂`, symmetrized as `(X + Xᵀ)/√2` when requested.
pub fn build_random_split(n: usize, seed: u64, symmetric: bool) -> GalleryProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let x = gauss(&mut rng, n, n);
        let x = if symmetric { (&x + x.transpose()) / 2f64.sqrt() } else { x };
        Coefficient::Dense(to_complex(&x))
    };
    let coeffs = vec![draw(), draw(), Coefficient::identity(n), draw(), draw()];
    let nep = SplitNep::new(coeffs, RANDOM_FUNCS()).expect("consistent sizes");
    let specs = if symmetric {
        vec![StructureSpec::Symmetric; 5]
    } else {
        vec![StructureSpec::Unstructured; 5]
    };
    GalleryProblem {
        name: format!("random{}-{n}", if symmetric { "-symmetric" } else { "" }),
        nep,
        specs,
        seed,
        start_disk: if symmetric { (c64(0.0, 0.0), 2.0) } else { (c64(0.0, 0.0), 1.5) },
        real_starts: symmetric,
    }
}

/// Random-1 family with a different random sparsity pattern per coefficient
/// (the identity keeps its diagonal).
pub fn build_sparse_random(n: usize, seed: u64, density: f64) -> GalleryProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = Vec::new();
    let mut specs = Vec::new();
    for j in 0..5 {
        if j == 2 {
            coeffs.push(Coefficient::identity(n));
            specs.push(StructureSpec::Sparsity((0..n).map(|i| (i, i)).collect()));
            continue;
        }
        let mut trip = Vec::new();
        for col in 0..n {
            for row in 0..n {
                // keep the diagonal so F(λ) stays generically nonsingular
                if row == col || rng.random::<f64>() < density {
                    trip.push((row, col, rng.sample::<f64, _>(StandardNormal)));
                }
            }
        }
        specs.push(StructureSpec::Sparsity(pattern(&trip)));
        coeffs.push(Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &trip)));
    }
    let nep = SplitNep::new(coeffs, RANDOM_FUNCS()).expect("consistent sizes");
    GalleryProblem {
        name: format!("sparse-random-{n}"),
        nep,
        specs,
        seed,
        start_disk: (c64(0.0, 0.0), 1.5),
        real_starts: false,
    }
}

/// `A₀ + λA₁ + λ²I` with `A₀ = tridiag(1, −2, 1)` and `A₁ = −UUᵀ`, `U` an
/// `n × 2` standard normal matrix.
pub fn build_quadratic_lowrank(n: usize, seed: u64) -> Result<GalleryProblem> {
    if n < 2 {
        return Err(Error::Dimension(format!("quadratic problem needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = tridiagonal(n, 1.0, -2.0, 1.0);
    let u = to_complex(&gauss(&mut rng, n, 2));
    let nep = SplitNep::new(
        vec![
            Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &a0)),
            Coefficient::LowRank {
                left: -&u,
                right: u,
            },
            Coefficient::identity(n),
        ],
        vec![ScalarFn::One, ScalarFn::Lambda, ScalarFn::Lambda2],
    )?;
    Ok(GalleryProblem {
        name: format!("quadratic-{n}"),
        nep,
        specs: vec![StructureSpec::Sparsity(pattern(&a0)), StructureSpec::FixedRank(2), StructureSpec::ScaledIdentity],
        seed,
        start_disk: (c64(0.0, 0.0), 1.0),
        real_starts: true,
    })
}

/// Problem by name: `beam`, `random`, `random-symmetric`, `sparse-random`,
/// `quadratic`.
pub fn by_name(name: &str, n: usize, seed: u64) -> Result<GalleryProblem> {
    match name {
        "beam" => build_beam(n),
        "random" => Ok(build_random_split(n, seed, false)),
        "random-symmetric" => Ok(build_random_split(n, seed, true)),
        "sparse-random" => Ok(build_sparse_random(n, seed, 0.1)),
        "quadratic" => build_quadratic_lowrank(n, seed),
        other => Err(Error::Config(format!("unknown gallery problem '{other}'"))),
    }
}

impl GalleryProblem {
    /// `p` distinct eigenpairs from Newton runs started in `start_disk`.
    pub fn eigenpairs(&self, p: usize, starts: usize, seed: u64) -> Result<EigenpairSet> {
        let (center, radius) = self.start_disk;
        let z0 = random_starts(starts, center, radius, self.real_starts, seed);
        let got = collect_pairs(&self.nep, &z0, p, seed, &NewtonOptions::default())?;
        match got.pairs {
            Some(pairs) if pairs.p() == p => Ok(pairs),
            Some(pairs) => Err(Error::NoConvergence {
                iterations: starts,
                residual: pairs.p() as f64,
            }),
            None => Err(Error::NoConvergence {
                iterations: starts,
                residual: f64::INFINITY,
            }),
        }
    }
}

/// Perturbation `[ΔF₁ ⋯ ΔF_k]` of one ensemble member.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub index: usize,
    /// Target `‖[ΔF₁ ⋯ ΔF_k]‖_F`.
    pub magnitude: f64,
    pub delta: Vec<Coefficient>,
}

impl EnsembleMember {
    pub fn apply(&self, nep: &SplitNep) -> Result<SplitNep> {
        let coeffs = nep
            .coeffs()
            .iter()
            .zip(&self.delta)
            .map(|(c, d)| add(c, d))
            .collect();
        nep.with_coeffs(coeffs)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.delta.iter().map(|d| d.frobenius_norm().powi(2)).sum::<f64>().sqrt()
    }
}

fn add(a: &Coefficient, b: &Coefficient) -> Coefficient {
    match (a, b) {
        (Coefficient::Sparse(x), Coefficient::Sparse(y)) => Coefficient::Sparse(x.add_scaled(y, c64(1.0, 0.0))),
        (Coefficient::LowRank { left, right }, Coefficient::LowRank { left: l2, right: r2 }) => Coefficient::LowRank {
            left: crate::nep::hstack(left, l2),
            right: crate::nep::hstack(right, r2),
        },
        _ => Coefficient::Dense(a.to_dense() + b.to_dense()),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub count: usize,
    /// Magnitudes relative to `‖[F₁ ⋯ F_k]‖_F`, sampled log-uniformly.
    pub range: (f64, f64),
    pub seed: u64,
    /// Respect the structures of the problem; otherwise dense Gaussian.
    pub structured: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            count: 1000,
            range: (1e-12, 1e-1),
            seed: 1,
            structured: false,
        }
    }
}

/// Member `index` of the ensemble; members are independent so they can be
/// generated in any order or concurrently.
pub fn ensemble_member(problem: &GalleryProblem, opts: &EnsembleOptions, index: usize) -> Result<EnsembleMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64));
    let (lo, hi) = opts.range;
    let rel = if lo == hi {
        lo
    } else {
        (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
    };
    let magnitude = rel * problem.nep.coeff_frobenius();
    let n = problem.nep.n();
    let mut raw = Vec::with_capacity(problem.nep.k());
    for (spec, c) in problem.specs.iter().zip(problem.nep.coeffs()) {
        let d = if opts.structured {
            structured_direction(&mut rng, spec, c, n)?
        } else {
            Direction::Linear(Coefficient::Dense(to_complex(&gauss(&mut rng, n, n))))
        };
        raw.push(d);
    }
    let norm = raw.iter().map(|d| d.first_order_norm().powi(2)).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { magnitude / norm } else { 0.0 };
    let delta = raw.into_iter().map(|d| d.at_scale(scale)).collect();
    Ok(EnsembleMember { index, magnitude, delta })
}

enum Direction {
    Linear(Coefficient),
    /// `(L + tL̃)(R + tR̃)ᵀ − LRᵀ`, with `‖L̃Rᵀ + LR̃ᵀ‖_F = 1`.
    Factors { left: CMat, right: CMat, lt: CMat, rt: CMat },
}

impl Direction {
    fn first_order_norm(&self) -> f64 {
        match self {
            Direction::Linear(c) => c.frobenius_norm(),
            Direction::Factors { .. } => 1.0,
        }
    }

    fn at_scale(self, t: f64) -> Coefficient {
        match self {
            Direction::Linear(c) => c.scaled(c64(t, 0.0)),
            Direction::Factors { left, right, lt, rt } => {
                let l1 = &left + lt * c64(t, 0.0);
                let r1 = &right + rt * c64(t, 0.0);
                Coefficient::LowRank {
                    left: crate::nep::hstack(&l1, &left),
                    right: crate::nep::hstack(&r1, &(-right)),
                }
            }
        }
    }
}

/// Random direction inside the structure of `c`. Fixed-rank coefficients
/// get their factors perturbed, which keeps the rank exact; a symmetric
/// factorization `−UUᵀ` stays symmetric.
fn structured_direction(rng: &mut ChaCha8Rng, spec: &StructureSpec, c: &Coefficient, n: usize) -> Result<Direction> {
    let linear = match spec {
        StructureSpec::Unstructured => Coefficient::Dense(to_complex(&gauss(rng, n, n))),
        StructureSpec::Symmetric => {
            let x = gauss(rng, n, n);
            Coefficient::Dense(to_complex(&((&x + x.transpose()) / 2f64.sqrt())))
        }
        StructureSpec::Sparsity(pat) => {
            let trip: Vec<_> = pat.iter().map(|&(i, j)| (i, j, rng.sample::<f64, _>(StandardNormal))).collect();
            Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &trip))
        }
        StructureSpec::ScaledIdentity => Coefficient::identity(n).scaled(c64(rng.sample::<f64, _>(StandardNormal), 0.0)),
        StructureSpec::Subspace(basis) => {
            let mut acc = CMat::zeros(n, n);
            for e in basis.elements() {
                acc += e.to_dense() * c64(rng.sample::<f64, _>(StandardNormal), 0.0);
            }
            Coefficient::Dense(acc)
        }
        StructureSpec::FixedRank(r) => {
            let (left, right) = match c {
                Coefficient::LowRank { left, right } => (left.clone(), right.clone()),
                _ => return Err(Error::Structure("fixed-rank perturbations need a low-rank coefficient".into())),
            };
            if left.ncols() != *r {
                return Err(Error::Structure(format!("coefficient has {} factors, rank {r} requested", left.ncols())));
            }
            let lt = to_complex(&gauss(rng, n, *r));
            let rt = if left == right.map(|z| -z) { -&lt } else { to_complex(&gauss(rng, n, *r)) };
            let lin = (&lt * right.transpose() + &left * rt.transpose()).norm().max(f64::MIN_POSITIVE);
            return Ok(Direction::Factors {
                left,
                right,
                lt: lt / c64(lin, 0.0),
                rt: rt / c64(lin, 0.0),
            });
        }
    };
    Ok(Direction::Linear(linear))
}
