//! File formats: Matrix Market coefficients, JSON problem configs,
//! eigenvalue lists and JSON reports.

pub mod config;
pub mod mtx;
pub mod report;

pub use config::{build_problem, load_problem, read_lambdas, read_pairs, write_pairs, LoadedProblem, ProblemConfig};
pub use mtx::{read_mtx, write_array, write_coordinate, MtxMatrix};
pub use report::{ProblemInfo, Report};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nep::Coefficient;
use crate::perturbation::{PerturbationForm, PerturbationSet};

/// Writes the perturbation terms to `dir`: a shared left factor as
/// `left.mtx` with `right_<j>.mtx`, or one file per term (`dF_<j>.mtx`,
/// or `dF_<j>_left.mtx` and `dF_<j>_right.mtx` for low-rank terms).
pub fn write_perturbation(dir: &Path, delta: &PerturbationSet) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let mut put = |name: String, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = dir.join(name);
        f(&p)?;
        out.push(p);
        Ok(())
    };
    match &delta.form {
        PerturbationForm::Factored { left, rights } => {
            put("left.mtx".into(), &|p| write_array(p, left))?;
            for (j, r) in rights.iter().enumerate() {
                put(format!("right_{j}.mtx"), &|p| write_array(p, r))?;
            }
        }
        PerturbationForm::Terms(terms) => {
            for (j, t) in terms.iter().enumerate() {
                match t {
                    Coefficient::Dense(a) => put(format!("dF_{j}.mtx"), &|p| write_array(p, a))?,
                    Coefficient::Sparse(s) => put(format!("dF_{j}.mtx"), &|p| write_coordinate(p, s, false))?,
                    Coefficient::LowRank { left, right } => {
                        put(format!("dF_{j}_left.mtx"), &|p| write_array(p, left))?;
                        put(format!("dF_{j}_right.mtx"), &|p| write_array(p, right))?;
                    }
                }
            }
        }
    }
    Ok(out)
}
