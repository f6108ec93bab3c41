//! The `nepbe` command line.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench::{run_benchmark, BenchConfig, Suite};
use crate::error::{Error, Result};
use crate::gallery::by_name;
use crate::io::config::{read_lambdas, LoadedProblem, SolveRequest};
use crate::io::{load_problem, read_pairs, write_pairs, write_perturbation, ProblemInfo, Report};
use crate::nep::EigenpairSet;
use crate::perturbation::PerturbationSet;
use crate::riemann::{penalty_continuation, HessianMode, RiemannOptions};
use crate::structured::structured_backward_error;
use crate::symmetric::{symmetric_backward_error, symmetric_bound};
use crate::unstructured::{backward_error_exact, bounds_eigenvalues_only, bounds_with_eigenvectors, BoundsReport};

#[derive(Debug, Parser)]
#[command(name = "nepbe", version, about = "Backward errors of approximate eigenpairs of split-form nonlinear eigenvalue problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unstructured backward error and its minimal perturbation.
    Exact(PairArgs),
    /// Exact unstructured error with its upper bounds.
    Bounds(PairArgs),
    /// Bounds from eigenvalues alone.
    EigvalsOnly(PairArgs),
    /// Structured error for linear structures.
    Structured(PairArgs),
    /// Real symmetric backward error and bound.
    Symmetric(PairArgs),
    /// Structured error by penalty continuation on manifolds.
    Riemannian {
        #[command(flatten)]
        pairs: PairArgs,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = HessianArg::Full)]
        hessian: HessianArg,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Eigenpairs by Newton's method.
    Solve(PairArgs),
    /// Run a benchmark suite.
    Bench {
        suite: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Problem sizes for the beam scaling suite.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HessianArg {
    Full,
    GaussNewton,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// JSON problem config.
    #[arg(long, conflicts_with = "gallery")]
    pub config: Option<PathBuf>,
    /// Gallery problem: beam, random, random-symmetric, sparse-random, quadratic.
    #[arg(long)]
    pub gallery: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Eigenvalue file, one `re [im]` per line.
    #[arg(long)]
    pub lambdas: Option<PathBuf>,
    /// Eigenvectors as a Matrix Market array.
    #[arg(long, requires = "lambdas")]
    pub vectors: Option<PathBuf>,
    /// Number of eigenpairs to compute when no files are given.
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    /// Directory for perturbation factors or computed pairs.
    #[arg(long)]
    pub write: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

impl PairArgs {
    pub fn problem(&self) -> Result<LoadedProblem> {
        match (&self.config, &self.gallery) {
            (Some(c), _) => load_problem(c),
            (None, Some(g)) => Ok(LoadedProblem::from_gallery(by_name(g, self.n, self.seed)?)),
            (None, None) => Err(Error::Config("one of --config or --gallery is required".into())),
        }
    }

    fn request(&self) -> SolveRequest {
        SolveRequest {
            p: self.p,
            seed: self.seed,
            starts: self.starts,
            center: None,
            radius: None,
            real: None,
        }
    }

    /// Pairs from `--lambdas/--vectors`, the config, or Newton runs.
    pub fn pairs(&self, problem: &LoadedProblem) -> Result<EigenpairSet> {
        if let (Some(l), Some(v)) = (&self.lambdas, &self.vectors) {
            return read_pairs(l, v);
        }
        if problem.pairs.is_some() {
            return problem.eigenpairs();
        }
        problem.solve(&self.request())
    }
}

fn info(problem: &LoadedProblem, p: usize) -> ProblemInfo {
    ProblemInfo {
        n: problem.nep.n(),
        k: problem.nep.k(),
        p,
    }
}

fn insert_bounds(r: &mut Report, b: &BoundsReport) {
    r.bounds.insert("upper_krt".into(), b.upper_krt);
    for (name, v) in [("upper_g", b.upper_g), ("upper_g_kappa", b.upper_g_kappa), ("lower_sv", b.lower_sv)] {
        if let Some(v) = v {
            r.bounds.insert(name.into(), v);
        }
    }
    r.extra.insert("rank_krt".into(), json!(b.rank_krt));
    if !b.sigma_hats.is_empty() {
        r.extra.insert("sigma_hats".into(), json!(b.sigma_hats));
    }
}

fn with_perturbation(r: &mut Report, d: &PerturbationSet) {
    r.eta = Some(d.eta);
    r.residual_norm = d.residual_norm;
    r.term_norms = d.term_norms();
}

/// Executes one command and returns its report.
pub fn execute(cmd: &Command) -> Result<Report> {
    let total = Instant::now();
    let mut report = match cmd {
        Command::Exact(a) | Command::Bounds(a) | Command::Structured(a) | Command::Symmetric(a) | Command::Solve(a) => {
            let problem = a.problem()?;
            let t = Instant::now();
            let pairs = a.pairs(&problem)?;
            let t_pairs = t.elapsed().as_secs_f64();
            let mut r = Report::new(command_name(cmd), info(&problem, pairs.p()), pairs.lambdas());
            r.timings.insert("eigenpairs".into(), t_pairs);
            let t = Instant::now();
            match cmd {
                Command::Exact(_) => {
                    let d = backward_error_exact(&problem.nep, &pairs)?;
                    with_perturbation(&mut r, &d);
                    if let Some(dir) = &a.write {
                        write_perturbation(dir, &d)?;
                    }
                }
                Command::Bounds(_) => {
                    let b = bounds_with_eigenvectors(&problem.nep, &pairs)?;
                    r.eta = b.eta_exact;
                    r.residual_norm = b.r_norm;
                    insert_bounds(&mut r, &b);
                }
                Command::Structured(_) => {
                    let d = structured_backward_error(&problem.nep, &pairs, &problem.specs)?;
                    with_perturbation(&mut r, &d);
                    r.extra.insert("structures".into(), json!(problem.specs.iter().map(|s| s.name()).collect::<Vec<_>>()));
                    if let Some(dir) = &a.write {
                        write_perturbation(dir, &d)?;
                    }
                }
                Command::Symmetric(_) => {
                    let d = symmetric_backward_error(&problem.nep, &pairs)?;
                    with_perturbation(&mut r, &d);
                    let b = symmetric_bound(&problem.nep, &pairs)?;
                    r.bounds.insert("upper_symmetric".into(), b.bound);
                    r.bounds.insert("upper_symmetric_pinv".into(), b.pinv_form);
                    r.bounds.insert("upper_symmetric_plain".into(), b.plain_form);
                    if let Some(dir) = &a.write {
                        write_perturbation(dir, &d)?;
                    }
                }
                _ => {
                    let rel: Vec<f64> = pairs
                        .lambdas()
                        .iter()
                        .enumerate()
                        .map(|(i, l)| {
                            let v = pairs.v().columns(i, 1).into_owned();
                            problem.nep.apply(*l, &v).norm() / problem.nep.frobenius_at(*l)
                        })
                        .collect();
                    r.residual_norm = rel.iter().map(|x| x * x).sum::<f64>().sqrt();
                    r.extra.insert("relative_residuals".into(), json!(rel));
                    if let Some(dir) = &a.write {
                        write_pairs(dir, &pairs)?;
                    }
                }
            }
            r.timings.insert("compute".into(), t.elapsed().as_secs_f64());
            r
        }
        Command::EigvalsOnly(a) => {
            let problem = a.problem()?;
            let t = Instant::now();
            let lambdas = match &a.lambdas {
                Some(l) => read_lambdas(l)?,
                None => a.pairs(&problem)?.lambdas().to_vec(),
            };
            let t_pairs = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let (b, _) = bounds_eigenvalues_only(&problem.nep, &lambdas)?;
            let mut r = Report::new("eigvals-only", info(&problem, lambdas.len()), &lambdas);
            r.eta = b.eta_exact;
            r.residual_norm = b.r_norm;
            insert_bounds(&mut r, &b);
            r.timings.insert("eigenpairs".into(), t_pairs);
            r.timings.insert("compute".into(), t.elapsed().as_secs_f64());
            r
        }
        Command::Riemannian {
            pairs: a,
            rho,
            eps,
            hessian,
            max_iter,
        } => {
            let problem = a.problem()?;
            let t = Instant::now();
            let pairs = a.pairs(&problem)?;
            let t_pairs = t.elapsed().as_secs_f64();
            let mut opts = RiemannOptions {
                rho: *rho,
                eps: *eps,
                hessian: match hessian {
                    HessianArg::Full => HessianMode::Full,
                    HessianArg::GaussNewton => HessianMode::GaussNewton,
                },
                ..RiemannOptions::default()
            };
            opts.tr.max_iter = *max_iter;
            let rep = penalty_continuation(&problem.nep, &pairs, &problem.specs, &opts)?;
            let mut r = Report::new("riemannian", info(&problem, pairs.p()), pairs.lambdas());
            with_perturbation(&mut r, &rep.perturbation);
            r.extra.insert("converged".into(), json!(rep.converged));
            r.extra.insert("stages".into(), serde_json::to_value(&rep.stages)?);
            r.timings.insert("eigenpairs".into(), t_pairs);
            r.timings.insert("compute".into(), rep.seconds);
            if let Some(dir) = &a.write {
                write_perturbation(dir, &rep.perturbation)?;
            }
            r
        }
        Command::Bench {
            suite,
            out,
            count,
            seed,
            sizes,
            ..
        } => {
            let suite: Suite = suite.parse()?;
            let mut cfg = BenchConfig {
                count: *count,
                seed: *seed,
                ..BenchConfig::default()
            };
            if let Some(s) = sizes {
                cfg.beam_sizes = s.clone();
            }
            let res = run_benchmark(suite, &cfg, Some(out))?;
            let mut r = Report::new("bench", ProblemInfo { n: 0, k: 0, p: 0 }, &[]);
            r.extra.insert("suite".into(), json!(suite.name()));
            r.extra.insert(
                "files".into(),
                json!(res.tables.iter().map(|t| out.join(suite.name()).join(t.file_name())).collect::<Vec<_>>()),
            );
            r.timings.insert("compute".into(), res.seconds);
            r
        }
    };
    report.timings.insert("total".into(), total.elapsed().as_secs_f64());
    Ok(report)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Exact(_) => "exact",
        Command::Bounds(_) => "bounds",
        Command::EigvalsOnly(_) => "eigvals-only",
        Command::Structured(_) => "structured",
        Command::Symmetric(_) => "symmetric",
        Command::Riemannian { .. } => "riemannian",
        Command::Solve(_) => "solve",
        Command::Bench { .. } => "bench",
    }
}

fn wants_json(cmd: &Command) -> bool {
    match cmd {
        Command::Exact(a)
        | Command::Bounds(a)
        | Command::EigvalsOnly(a)
        | Command::Structured(a)
        | Command::Symmetric(a)
        | Command::Solve(a)
        | Command::Riemannian { pairs: a, .. } => a.json,
        Command::Bench { json, .. } => *json,
    }
}

/// Parses `argv`, runs the command and prints its report. Returns 0 on
/// success, 1 on computational failure and 2 on usage errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(r) => {
            if wants_json(&cli.command) {
                println!("{}", r.to_json());
            } else {
                print!("{}", r.to_table());
            }
            0
        }
        Err(e @ (Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Json(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
