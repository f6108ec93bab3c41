//! Structured backward error with sparsity and scaled-identity structure,
//! against the unstructured error and the structured upper bound.

use nepbe::gallery::{build_beam, build_sparse_random};
use nepbe::linalg::c64;
use nepbe::nep::{residual_bundle, EigenpairSet};
use nepbe::structured::{structured_backward_error, structured_upper_bound};
use nepbe::unstructured::backward_error_exact;

fn main() -> nepbe::Result<()> {
    for g in [build_beam(100)?, build_sparse_random(40, 2, 0.1)] {
        let pairs = g.eigenpairs(2, 20, 2)?;
        let l: Vec<_> = pairs.lambdas().iter().map(|z| z + c64(1e-7, 0.0)).collect();
        let approx = EigenpairSet::new(l, pairs.v().clone())?;
        let eta = backward_error_exact(&g.nep, &approx)?.eta;
        let s = structured_backward_error(&g.nep, &approx, &g.specs)?;
        let ub = structured_upper_bound(&residual_bundle(&g.nep, &approx)?, &g.specs)?;
        println!("{}", g.name);
        println!("  eta       {eta:.4e}");
        println!("  eta_S     {:.4e}  (residual {:.1e})", s.eta, s.residual_norm);
        println!("  bound     {ub:.4e}");
        let norms: Vec<String> = s.term_norms().iter().map(|x| format!("{x:.2e}")).collect();
        println!("  per term  {}", norms.join(" "));
    }
    Ok(())
}
