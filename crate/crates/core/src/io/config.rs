//! JSON problem descriptions.
//!
//! ```json
//! {
//!   "dimension": 1000,
//!   "terms": [
//!     { "coefficient": { "builtin": "identity" },
//!       "function": { "polynomial": [[0, 0], [-1, 0]] },
//!       "structure": "scaled_identity" },
//!     { "coefficient": { "builtin": "beam_stiffness" }, "function": "one", "structure": "pattern" },
//!     { "coefficient": { "path": "a1.mtx" }, "function": "exp_neg", "structure": { "sparsity": [[999, 999]] } }
//!   ],
//!   "eigenpairs": { "solve": { "p": 3, "seed": 1, "center": [-1, 0], "radius": 1, "real": true } }
//! }
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mtx::{read_mtx, MtxMatrix};
use crate::error::{Error, Result};
use crate::gallery::{beam_stiffness, by_name, GalleryProblem};
use crate::linalg::{c64, CMat, SparseMatrix, C64};
use crate::nep::{Coefficient, EigenpairSet, ScalarFn, SplitNep};
use crate::solve::{collect_pairs, random_starts, NewtonOptions};
use crate::structured::{StructureSpec, SubspaceBasis};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: Option<usize>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    /// A whole gallery problem instead of `terms`.
    pub gallery: Option<GalleryConfig>,
    pub eigenpairs: Option<PairSource>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalleryConfig {
    pub name: String,
    pub n: usize,
    #[serde(default = "one")]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coefficient: CoefficientSource,
    pub function: FunctionConfig,
    #[serde(default)]
    pub structure: StructureConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSource {
    Path {
        path: PathBuf,
    },
    Builtin {
        builtin: String,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        scale: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionConfig {
    One,
    Lambda,
    Lambda2,
    ExpNeg,
    ExpNeg2,
    /// Coefficients in increasing degree, each `[re, im]`.
    Polynomial(Vec<[f64; 2]>),
    /// `e^{rate·λ}`
    ScaledExp(f64),
}

impl FunctionConfig {
    pub fn to_fn(&self) -> ScalarFn {
        match self {
            FunctionConfig::One => ScalarFn::One,
            FunctionConfig::Lambda => ScalarFn::Lambda,
            FunctionConfig::Lambda2 => ScalarFn::Lambda2,
            FunctionConfig::ExpNeg => ScalarFn::ExpNeg,
            FunctionConfig::ExpNeg2 => ScalarFn::ExpNeg2,
            FunctionConfig::Polynomial(c) => ScalarFn::Polynomial(c.iter().map(|z| c64(z[0], z[1])).collect()),
            FunctionConfig::ScaledExp(r) => ScalarFn::ScaledExp(*r),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureConfig {
    #[default]
    Unstructured,
    Symmetric,
    ScaledIdentity,
    /// Sparsity pattern of the coefficient itself.
    Pattern,
    /// Zero-based `(row, col)` positions.
    Sparsity(Vec<[usize; 2]>),
    FixedRank(usize),
    /// Matrix Market files spanning the subspace.
    Subspace(Vec<PathBuf>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Eigenvalues in a lambdas file, eigenvectors as a Matrix Market array.
    File { lambdas: PathBuf, vectors: PathBuf },
    Solve(SolveRequest),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub p: usize,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Start disk; the gallery default when loading a gallery problem.
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    #[serde(default)]
    pub real: Option<bool>,
}

fn default_starts() -> usize {
    20
}

/// A loaded problem with its structure descriptors.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub nep: SplitNep,
    pub specs: Vec<StructureSpec>,
    pub pairs: Option<PairSourceResolved>,
    /// Default Newton start disk and whether starts are real.
    pub start_disk: (C64, f64, bool),
}

#[derive(Debug, Clone)]
pub enum PairSourceResolved {
    Loaded(EigenpairSet),
    Solve(SolveRequest),
}

impl LoadedProblem {
    pub fn from_gallery(g: GalleryProblem) -> Self {
        LoadedProblem {
            start_disk: (g.start_disk.0, g.start_disk.1, g.real_starts),
            nep: g.nep,
            specs: g.specs,
            pairs: None,
        }
    }

    /// Eigenpairs from the file, or from Newton runs as requested.
    pub fn eigenpairs(&self) -> Result<EigenpairSet> {
        match &self.pairs {
            Some(PairSourceResolved::Loaded(p)) => Ok(p.clone()),
            Some(PairSourceResolved::Solve(req)) => self.solve(req),
            None => Err(Error::Config("no eigenpair source given".into())),
        }
    }

    pub fn solve(&self, req: &SolveRequest) -> Result<EigenpairSet> {
        let (c0, r0, real0) = self.start_disk;
        let center = req.center.map(|c| c64(c[0], c[1])).unwrap_or(c0);
        let starts = random_starts(req.starts, center, req.radius.unwrap_or(r0), req.real.unwrap_or(real0), req.seed);
        collect_pairs(&self.nep, &starts, req.p, req.seed, &NewtonOptions::default())?
            .pairs
            .ok_or_else(|| Error::NoConvergence {
                iterations: NewtonOptions::default().max_iter,
                residual: f64::NAN,
            })
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ProblemConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: format!("column {}: {e}", e.column()),
    })
}

pub fn load_problem(config_path: &Path) -> Result<LoadedProblem> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let cfg = parse_config(&text, config_path)?;
    build_problem(&cfg, config_path.parent().unwrap_or(Path::new(".")))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn term_err(j: usize, e: Error) -> Error {
    Error::Config(format!("term {j}: {e}"))
}

/// Builds the problem described by `cfg`, resolving paths against `base`.
pub fn build_problem(cfg: &ProblemConfig, base: &Path) -> Result<LoadedProblem> {
    let mut loaded = match (&cfg.gallery, cfg.terms.is_empty()) {
        (Some(g), true) => LoadedProblem::from_gallery(by_name(&g.name, g.n, g.seed)?),
        (Some(_), false) => return Err(Error::Config("give either 'gallery' or 'terms', not both".into())),
        (None, true) => return Err(Error::Config("at least one term is required".into())),
        (None, false) => {
            let n = cfg.dimension.ok_or_else(|| Error::Config("'dimension' is required with 'terms'".into()))?;
            let mut coeffs = Vec::new();
            let mut funcs = Vec::new();
            let mut specs = Vec::new();
            for (j, t) in cfg.terms.iter().enumerate() {
                let c = load_coefficient(&t.coefficient, n, base).map_err(|e| term_err(j, e))?;
                if c.shape() != (n, n) {
                    return Err(Error::Dimension(format!("term {j}: coefficient is {:?}, expected {n} x {n}", c.shape())));
                }
                specs.push(structure(&t.structure, &c, n, base).map_err(|e| term_err(j, e))?);
                funcs.push(t.function.to_fn());
                coeffs.push(c);
            }
            LoadedProblem {
                nep: SplitNep::new(coeffs, funcs)?,
                specs,
                pairs: None,
                start_disk: (c64(0.0, 0.0), 1.0, false),
            }
        }
    };
    if let Some(w) = &cfg.weights {
        loaded.nep = loaded.nep.with_weights(w)?;
    }
    loaded.pairs = match &cfg.eigenpairs {
        None => None,
        Some(PairSource::Solve(req)) => Some(PairSourceResolved::Solve(req.clone())),
        Some(PairSource::File { lambdas, vectors }) => {
            Some(PairSourceResolved::Loaded(read_pairs(&resolve(base, lambdas), &resolve(base, vectors))?))
        }
    };
    Ok(loaded)
}

fn load_coefficient(src: &CoefficientSource, n: usize, base: &Path) -> Result<Coefficient> {
    match src {
        CoefficientSource::Path { path } => {
            let path = resolve(base, path);
            if !path.exists() {
                return Err(Error::Config(format!("matrix file {} not found", path.display())));
            }
            Ok(match read_mtx(&path)? {
                MtxMatrix::Coordinate(s) => Coefficient::Sparse(s),
                MtxMatrix::Array(a) => Coefficient::Dense(a),
            })
        }
        CoefficientSource::Builtin { builtin, seed, scale } => {
            let c = builtin_coefficient(builtin, n, *seed)?;
            Ok(match scale {
                Some(s) => c.scaled(c64(*s, 0.0)),
                None => c,
            })
        }
    }
}

/// `identity`, `zero`, `beam_stiffness`, `last_corner` (`eₙeₙᵀ`),
/// `tridiagonal` (`tridiag(1, −2, 1)`), `gaussian` and `gaussian_symmetric`.
pub fn builtin_coefficient(name: &str, n: usize, seed: u64) -> Result<Coefficient> {
    if n == 0 {
        return Err(Error::Dimension("dimension must be positive".into()));
    }
    let gauss = |sym: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = CMat::from_fn(n, n, |_, _| c64(StandardNormal.sample(&mut rng), 0.0));
        if sym {
            (&x + x.transpose()) / c64(2f64.sqrt(), 0.0)
        } else {
            x
        }
    };
    Ok(match name {
        "identity" => Coefficient::identity(n),
        "zero" => Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &[])),
        "beam_stiffness" if n >= 2 => Coefficient::Sparse(beam_stiffness(n)),
        "last_corner" => Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &[(n - 1, n - 1, 1.0)])),
        "tridiagonal" => {
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, -2.0));
                if i + 1 < n {
                    t.push((i, i + 1, 1.0));
                    t.push((i + 1, i, 1.0));
                }
            }
            Coefficient::Sparse(SparseMatrix::from_real_triplets(n, n, &t))
        }
        "gaussian" => Coefficient::Dense(gauss(false)),
        "gaussian_symmetric" => Coefficient::Dense(gauss(true)),
        other => return Err(Error::Config(format!("unknown builtin coefficient '{other}' for n = {n}"))),
    })
}

fn structure(s: &StructureConfig, c: &Coefficient, n: usize, base: &Path) -> Result<StructureSpec> {
    Ok(match s {
        StructureConfig::Unstructured => StructureSpec::Unstructured,
        StructureConfig::Symmetric => StructureSpec::Symmetric,
        StructureConfig::ScaledIdentity => StructureSpec::ScaledIdentity,
        StructureConfig::Pattern => StructureSpec::pattern_of(c),
        StructureConfig::Sparsity(pos) => {
            if let Some(p) = pos.iter().find(|p| p[0] >= n || p[1] >= n) {
                return Err(Error::Structure(format!("position {p:?} outside {n} x {n}")));
            }
            StructureSpec::Sparsity(pos.iter().map(|p| (p[0], p[1])).collect())
        }
        StructureConfig::FixedRank(r) => StructureSpec::FixedRank(*r),
        StructureConfig::Subspace(files) => {
            let elems = files
                .iter()
                .map(|f| {
                    Ok(match read_mtx(&resolve(base, f))? {
                        MtxMatrix::Coordinate(s) => Coefficient::Sparse(s),
                        MtxMatrix::Array(a) => Coefficient::Dense(a),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            StructureSpec::Subspace(SubspaceBasis::new(n, elems)?)
        }
    })
}

/// One eigenvalue per line, `re` or `re im`; `#` starts a comment.
pub fn parse_lambdas(text: &str, path: &Path) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|w| !w.is_empty())
            .map(|w| w.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        match nums.as_slice() {
            [re] => out.push(c64(*re, 0.0)),
            [re, im] => out.push(c64(*re, *im)),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected 're' or 're im'".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn read_lambdas(path: &Path) -> Result<Vec<C64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lambdas(&text, path)
}

pub fn format_lambdas(lambdas: &[C64]) -> String {
    lambdas.iter().map(|z| format!("{:.16e} {:.16e}\n", z.re, z.im)).collect()
}

pub fn read_pairs(lambdas: &Path, vectors: &Path) -> Result<EigenpairSet> {
    let l = read_lambdas(lambdas)?;
    let v = read_mtx(vectors)?.to_dense();
    EigenpairSet::new(l, v)
}

/// Writes `lambdas.txt` and `vectors.mtx` into `dir`.
pub fn write_pairs(dir: &Path, pairs: &EigenpairSet) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lp = dir.join("lambdas.txt");
    let vp = dir.join("vectors.mtx");
    std::fs::write(&lp, format_lambdas(pairs.lambdas())).map_err(|e| Error::io(&lp, e))?;
    super::mtx::write_array(&vp, pairs.v())?;
    Ok((lp, vp))
}
