//! Exact unstructured backward error of three approximate beam eigenpairs
//! and a check that the minimal perturbation makes them exact.

use nepbe::gallery::build_beam;
use nepbe::linalg::c64;
use nepbe::nep::{residual_bundle, EigenpairSet};
use nepbe::unstructured::backward_error_exact;

fn main() -> nepbe::Result<()> {
    let g = build_beam(200)?;
    let pairs = g.eigenpairs(3, 20, 1)?;

    // spoil the pairs a little
    let lambdas: Vec<_> = pairs.lambdas().iter().map(|l| l + c64(1e-6, 0.0)).collect();
    let v = pairs.v().map(|z| z + c64(1e-7, 0.0));
    let approx = EigenpairSet::new(lambdas, v)?;

    let delta = backward_error_exact(&g.nep, &approx)?;
    println!("||R||_F           = {:.6e}", residual_bundle(&g.nep, &approx)?.r_norm);
    println!("eta               = {:.6e}", delta.eta);
    println!("residual after dF = {:.3e}", delta.residual_norm);

    let perturbed = delta.apply_to(&g.nep)?;
    let check = residual_bundle(&perturbed, &approx)?.r_norm;
    println!("recomputed        = {check:.3e}");
    for (j, nrm) in delta.term_norms().iter().enumerate() {
        println!("  ||dF{j}||_F = {nrm:.3e}");
    }
    Ok(())
}
