//! Real symmetric backward error of real eigenpairs and its bound.

use nepbe::gallery::build_random_split;
use nepbe::linalg::{asymmetry, c64};
use nepbe::nep::EigenpairSet;
use nepbe::symmetric::{symmetric_backward_error, symmetric_bound};
use nepbe::unstructured::backward_error_exact;

fn main() -> nepbe::Result<()> {
    let g = build_random_split(60, 11, true);
    let pairs = g.eigenpairs(3, 16, 11)?;
    let l: Vec<_> = pairs.lambdas().iter().map(|z| z + c64(1e-6, 0.0)).collect();
    let approx = EigenpairSet::new(l, pairs.v().clone())?;

    let d = symmetric_backward_error(&g.nep, &approx)?;
    let b = symmetric_bound(&g.nep, &approx)?;
    println!("eta (unstructured) {:.4e}", backward_error_exact(&g.nep, &approx)?.eta);
    println!("eta_S              {:.4e}", d.eta);
    println!("bound              {:.4e}", b.bound);
    println!("residual after dF  {:.2e}", d.residual_norm);
    let worst = (0..d.k()).map(|j| asymmetry(&d.dense(j))).fold(0.0, f64::max);
    println!("max asymmetry      {worst:.1e}");
    Ok(())
}
