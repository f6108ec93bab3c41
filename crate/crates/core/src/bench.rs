//! Benchmark sweeps over perturbation ensembles, written as whitespace
//! separated `.dat` figure data and CSV tables.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::{build_beam, build_quadratic_lowrank, build_random_split, build_sparse_random, ensemble_member, EnsembleOptions, GalleryProblem};
use crate::linalg::{real_part, CMat, RMat, C64};
use crate::nep::{residual_bundle, EigenpairSet, ResidualBundle};
use crate::riemann::{penalty_continuation, RiemannOptions};
use crate::structured::{structured_least_squares, structured_upper_bound};
use crate::symmetric::{symmetric_bound_from_residual, symmetric_from_residual};
use crate::unstructured::bounds_from_bundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    UnstructuredRandom,
    BeamP3,
    BeamP10,
    SparseStructured,
    Symmetric64,
    Symmetric128,
    Symmetric2048,
    RiemannianBeamScaling,
    RiemannianQuadratic,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::UnstructuredRandom,
        Suite::BeamP3,
        Suite::BeamP10,
        Suite::SparseStructured,
        Suite::Symmetric64,
        Suite::Symmetric128,
        Suite::Symmetric2048,
        Suite::RiemannianBeamScaling,
        Suite::RiemannianQuadratic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::UnstructuredRandom => "unstructured-random",
            Suite::BeamP3 => "beam-p3",
            Suite::BeamP10 => "beam-p10",
            Suite::SparseStructured => "sparse-structured",
            Suite::Symmetric64 => "symmetric-64",
            Suite::Symmetric128 => "symmetric-128",
            Suite::Symmetric2048 => "symmetric-2048",
            Suite::RiemannianBeamScaling => "riemannian-beam-scaling",
            Suite::RiemannianQuadratic => "riemannian-quadratic",
        }
    }

    /// Suites too expensive for routine test runs.
    pub fn is_slow(&self) -> bool {
        matches!(self, Suite::Symmetric2048)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Ensemble size of the scatter suites.
    pub count: usize,
    pub seed: u64,
    /// Relative perturbation magnitudes, log-uniform.
    pub range: (f64, f64),
    /// Sizes for `riemannian-beam-scaling`.
    pub beam_sizes: Vec<usize>,
    /// Size for `riemannian-quadratic`.
    pub quadratic_n: usize,
    pub riemann: RiemannOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            count: 1000,
            seed: 1,
            range: (1e-12, 1e-1),
            beam_sizes: vec![1000, 2000],
            quadratic_n: 500,
            riemann: RiemannOptions::default(),
        }
    }
}

impl BenchConfig {
    /// Problem sizes of the full scaling table.
    pub fn table_beam_sizes() -> Vec<usize> {
        vec![1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableFormat {
    Dat,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub format: TableFormat,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, format: TableFormat, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            format,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn file_name(&self) -> String {
        match self.format {
            TableFormat::Dat => format!("{}.dat", self.name),
            TableFormat::Csv => format!("{}.csv", self.name),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(self.file_name());
        match self.format {
            TableFormat::Dat => {
                let mut out = format!("# {}\n", self.columns.join(" "));
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
                    out.push_str(&cells.join(" "));
                    out.push('\n');
                }
                std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
            }
            TableFormat::Csv => {
                let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
                w.write_record(&self.columns).map_err(|e| csv_error(&path, e))?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|x| format!("{x:.17e}"))).map_err(|e| csv_error(&path, e))?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(path)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub tables: Vec<Table>,
    pub seconds: f64,
}

impl SuiteResult {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes every table to `<out_dir>/<suite>/`.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        let dir = out_dir.join(self.suite.name());
        self.tables.iter().map(|t| t.write(&dir)).collect()
    }
}

/// Runs a suite and writes its tables under `out_dir` when given.
pub fn run_benchmark(suite: Suite, cfg: &BenchConfig, out_dir: Option<&Path>) -> Result<SuiteResult> {
    let start = Instant::now();
    let tables = match suite {
        Suite::UnstructuredRandom => {
            let g = build_random_split(128, cfg.seed, false);
            let mut t = Vec::new();
            for p in [3, 10] {
                let pairs = g.eigenpairs(p, 4 * p, cfg.seed)?;
                t.push(eigenvalue_table(&format!("eigenvalues-p{p}"), &g, &pairs)?);
                t.push(unstructured_sweep(&format!("p{p}"), &g, &pairs, cfg)?);
            }
            t
        }
        Suite::BeamP3 | Suite::BeamP10 => {
            let p = if suite == Suite::BeamP3 { 3 } else { 10 };
            let g = build_beam(1000)?;
            let pairs = g.eigenpairs(p, 20.max(2 * p), cfg.seed)?;
            vec![eigenvalue_table("eigenvalues", &g, &pairs)?, unstructured_sweep("beam", &g, &pairs, cfg)?]
        }
        Suite::SparseStructured => {
            let g = build_sparse_random(64, cfg.seed, 0.1);
            let pairs = g.eigenpairs(3, 12, cfg.seed)?;
            vec![eigenvalue_table("eigenvalues", &g, &pairs)?, sparse_sweep(&g, &pairs, cfg)?]
        }
        Suite::Symmetric64 | Suite::Symmetric128 | Suite::Symmetric2048 => {
            let n = match suite {
                Suite::Symmetric64 => 64,
                Suite::Symmetric128 => 128,
                _ => 2048,
            };
            let g = build_random_split(n, cfg.seed, true);
            let pairs = g.eigenpairs(3, 12, cfg.seed)?;
            vec![eigenvalue_table("eigenvalues", &g, &pairs)?, symmetric_sweep(&g, &pairs, cfg, n <= 64)?]
        }
        Suite::RiemannianBeamScaling => vec![beam_scaling(cfg)?],
        Suite::RiemannianQuadratic => vec![quadratic_run(cfg)?],
    };
    let result = SuiteResult {
        suite,
        tables,
        seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        let files = result.write(dir)?;
        info!("{suite}: wrote {} files in {:.1}s", files.len(), result.seconds);
    }
    Ok(result)
}

fn eigenvalue_table(name: &str, g: &GalleryProblem, pairs: &EigenpairSet) -> Result<Table> {
    let mut t = Table::new(name, TableFormat::Csv, &["index", "re", "im", "relative_residual"]);
    let b = residual_bundle(&g.nep, pairs)?;
    for (i, l) in pairs.lambdas().iter().enumerate() {
        let rel = b.col_norms[i] / g.nep.frobenius_at(*l);
        t.rows.push(vec![i as f64, l.re, l.im, rel]);
    }
    Ok(t)
}

/// Draws `Σⱼ Gⱼ Wⱼ / ‖[G₁ ⋯ G_k]‖_F` for independent standard normal
/// `n × n` matrices `Gⱼ` without forming them: with `[Re W, Im W] = Q T`,
/// each row is distributed as `ξᵀ T` for `ξ ~ N(0, I)`, and the part of
/// `‖G‖²_F` orthogonal to `range(Q)` is an independent chi-square.
struct GaussianResidual {
    t: RMat,
    p: usize,
    complex: bool,
    extra_dof: f64,
}

impl GaussianResidual {
    fn new(bundle: &ResidualBundle) -> Self {
        let (n, p) = bundle.r.shape();
        let kn = bundle.w.nrows();
        let re = real_part(&bundle.w);
        let complex = bundle.w.iter().any(|z| z.im != 0.0);
        let wr = if complex {
            let mut m = RMat::zeros(kn, 2 * p);
            m.columns_mut(0, p).copy_from(&re);
            m.columns_mut(p, p).copy_from(&bundle.w.map(|z| z.im));
            m
        } else {
            re
        };
        let q = wr.ncols();
        let t = wr.qr().r();
        GaussianResidual {
            t,
            p,
            complex,
            extra_dof: (n * (kn.saturating_sub(q))) as f64,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let q = self.t.nrows();
        let xi = RMat::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut norm2 = xi.norm_squared();
        if self.extra_dof > 0.0 {
            norm2 += ChiSquared::new(self.extra_dof).expect("positive dof").sample(rng);
        }
        let z = xi * &self.t / norm2.sqrt();
        let p = self.p;
        CMat::from_fn(n, p, |i, j| C64::new(z[(i, j)], if self.complex { z[(i, j + p)] } else { 0.0 }))
    }
}

fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(index as u64))
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn perturbed_bundle(base: &ResidualBundle, delta_r: CMat) -> ResidualBundle {
    let r = &base.r + delta_r;
    ResidualBundle {
        r_norm: r.norm(),
        col_norms: r.column_iter().map(|c| c.norm()).collect(),
        r,
        g: base.g.clone(),
        w: base.w.clone(),
    }
}

/// Slack for comparisons between a computed error and its bound.
const BOUND_SLACK: f64 = 1e-10;

fn check(suite: &str, value: f64, bound: f64, what: &str) -> Result<()> {
    if value > bound * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE {
        return Err(Error::BoundViolation {
            suite: suite.into(),
            detail: format!("{what}: {value:e} > {bound:e}"),
        });
    }
    Ok(())
}

fn unstructured_sweep(name: &str, g: &GalleryProblem, pairs: &EigenpairSet, cfg: &BenchConfig) -> Result<Table> {
    let base = residual_bundle(&g.nep, pairs)?;
    let sampler = GaussianResidual::new(&base);
    let (n, p, k) = (g.nep.n(), pairs.p(), g.nep.k());
    let scale = g.nep.coeff_frobenius();
    let mut cols = vec!["norm_r", "eta"];
    if p <= k {
        cols.push("upper_g");
    }
    cols.extend(["upper_g_kappa", "upper_krt"]);
    let mut table = Table::new(name, TableFormat::Dat, &cols);
    let rows: Vec<Result<Vec<f64>>> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(cfg.seed, i);
            let mag = log_uniform(&mut rng, cfg.range) * scale;
            let b = perturbed_bundle(&base, sampler.sample(&mut rng, n) * C64::new(mag, 0.0));
            let rep = bounds_from_bundle(&b, pairs.v());
            let eta = rep.eta_exact.unwrap_or(f64::NAN);
            let kappa = rep.upper_g_kappa.unwrap_or(f64::INFINITY);
            check(name, eta, rep.upper_krt, "eta <= krt bound")?;
            check(name, rep.upper_krt, kappa, "krt bound <= kappa bound")?;
            let mut row = vec![rep.r_norm, eta];
            if let Some(ug) = rep.upper_g {
                check(name, eta, ug, "eta <= G bound")?;
                row.push(ug);
            }
            row.extend([kappa, rep.upper_krt]);
            Ok(row)
        })
        .collect();
    table.rows = rows.into_iter().collect::<Result<_>>()?;
    Ok(table)
}

fn explicit_delta_r(g: &GalleryProblem, base: &ResidualBundle, opts: &EnsembleOptions, i: usize) -> Result<CMat> {
    let m = ensemble_member(g, opts, i)?;
    let n = g.nep.n();
    let mut dr = CMat::zeros(n, base.r.ncols());
    for (j, d) in m.delta.iter().enumerate() {
        dr += d.mul_mat(&base.w_block(j));
    }
    Ok(dr)
}

fn sparse_sweep(g: &GalleryProblem, pairs: &EigenpairSet, cfg: &BenchConfig) -> Result<Table> {
    let base = residual_bundle(&g.nep, pairs)?;
    let opts = EnsembleOptions {
        count: cfg.count,
        range: cfg.range,
        seed: cfg.seed,
        structured: true,
    };
    let ub = structured_upper_bound(&base, &g.specs)? / base.r_norm.max(f64::MIN_POSITIVE);
    let mut table = Table::new("sparse", TableFormat::Dat, &["norm_r", "eta_s", "upper_krt", "upper_structured"]);
    let rows: Vec<Result<Vec<f64>>> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let b = perturbed_bundle(&base, explicit_delta_r(g, &base, &opts, i)?);
            let sol = structured_least_squares(&b, &g.specs)?;
            let eta_s = sol.perturbation.eta;
            let krt = bounds_from_bundle(&b, pairs.v()).upper_krt;
            // the structured bound depends on R only through ‖R‖_F
            let upper = ub * b.r_norm;
            check("sparse-structured", eta_s, upper, "eta_S <= structured bound")?;
            Ok(vec![b.r_norm, eta_s, krt, upper])
        })
        .collect();
    table.rows = rows.into_iter().collect::<Result<_>>()?;
    Ok(table)
}

fn symmetric_sweep(g: &GalleryProblem, pairs: &EigenpairSet, cfg: &BenchConfig, with_structured: bool) -> Result<Table> {
    let base = residual_bundle(&g.nep, pairs)?;
    if !pairs.is_real() {
        return Err(Error::NotReal("symmetric suites need real eigenpairs".into()));
    }
    let v = real_part(pairs.v());
    let gr = real_part(&base.g);
    let opts = EnsembleOptions {
        count: cfg.count,
        range: cfg.range,
        seed: cfg.seed,
        structured: true,
    };
    // the symmetric bound depends on R only through ‖R‖_F
    let mut unit = RMat::zeros(v.nrows(), v.ncols());
    unit[(0, 0)] = 1.0;
    let sym_factor = symmetric_bound_from_residual(&unit, &v, &gr)?.bound;
    let struct_factor = if with_structured {
        Some(structured_upper_bound(&base, &g.specs)? / base.r_norm.max(f64::MIN_POSITIVE))
    } else {
        None
    };
    let mut cols = vec!["norm_r", "eta_s", "upper_krt"];
    if with_structured {
        cols.push("upper_structured");
    }
    cols.push("upper_symmetric");
    let mut table = Table::new("symmetric", TableFormat::Dat, &cols);
    let rows: Vec<Result<Vec<f64>>> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let b = perturbed_bundle(&base, explicit_delta_r(g, &base, &opts, i)?);
            let r = real_part(&b.r);
            let parts = symmetric_from_residual(&r, &v, &gr)?;
            let eta_s = parts.eta();
            let krt = bounds_from_bundle(&b, pairs.v()).upper_krt;
            let sym = sym_factor * b.r_norm;
            check("symmetric", eta_s, sym, "eta_S <= symmetric bound")?;
            let mut row = vec![b.r_norm, eta_s, krt];
            if let Some(f) = struct_factor {
                check("symmetric", eta_s, f * b.r_norm, "eta_S <= structured bound")?;
                row.push(f * b.r_norm);
            }
            row.push(sym);
            Ok(row)
        })
        .collect();
    table.rows = rows.into_iter().collect::<Result<_>>()?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiemannianRun {
    pub n: usize,
    pub seconds: f64,
    pub eta_s: f64,
    pub residual: f64,
    pub delta_norm: f64,
    pub converged: bool,
}

/// Perturbs the gallery problem within its structures by an absolute
/// Frobenius magnitude and runs the continuation for pairs of the
/// unperturbed problem.
pub fn riemannian_run(g: &GalleryProblem, p: usize, magnitude: f64, cfg: &BenchConfig) -> Result<RiemannianRun> {
    let pairs = g.eigenpairs(p, 20, cfg.seed)?;
    let rel = magnitude / g.nep.coeff_frobenius();
    let opts = EnsembleOptions {
        count: 1,
        range: (rel, rel),
        seed: cfg.seed,
        structured: true,
    };
    let member = ensemble_member(g, &opts, 0)?;
    let perturbed = member.apply(&g.nep)?;
    let t0 = Instant::now();
    let rep = penalty_continuation(&perturbed, &pairs, &g.specs, &cfg.riemann)?;
    Ok(RiemannianRun {
        n: g.nep.n(),
        seconds: t0.elapsed().as_secs_f64(),
        eta_s: rep.eta,
        residual: rep.residual,
        delta_norm: member.frobenius_norm(),
        converged: rep.converged,
    })
}

/// Perturbation size of the scaling table, which grows like `√n`.
pub fn beam_perturbation_magnitude(n: usize) -> f64 {
    1.78e-4 * (n as f64).sqrt()
}

fn beam_scaling(cfg: &BenchConfig) -> Result<Table> {
    let mut table = Table::new("beam", TableFormat::Csv, &["n", "time", "eta_s", "norm_r", "norm_delta"]);
    for &n in &cfg.beam_sizes {
        let g = build_beam(n)?;
        let run = riemannian_run(&g, 3, beam_perturbation_magnitude(n), cfg)?;
        info!("beam n={n}: eta_S={:.6e} residual={:.3e} {:.1}s", run.eta_s, run.residual, run.seconds);
        table.rows.push(vec![n as f64, run.seconds, run.eta_s, run.residual, run.delta_norm]);
    }
    Ok(table)
}

/// Relative size of the perturbation of the quadratic problem.
pub const QUADRATIC_RELATIVE_PERTURBATION: f64 = 1e-4;

fn quadratic_run(cfg: &BenchConfig) -> Result<Table> {
    let g = build_quadratic_lowrank(cfg.quadratic_n, cfg.seed)?;
    let mag = QUADRATIC_RELATIVE_PERTURBATION * g.nep.coeff_frobenius();
    let run = riemannian_run(&g, 2, mag, cfg)?;
    let mut table = Table::new("quadratic", TableFormat::Csv, &["n", "time", "eta_s", "norm_r", "norm_delta"]);
    table.rows.push(vec![run.n as f64, run.seconds, run.eta_s, run.residual, run.delta_norm]);
    Ok(table)
}
