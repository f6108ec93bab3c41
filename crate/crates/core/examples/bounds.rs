//! Computable upper bounds next to the exact unstructured error for the
//! random split-form family.

use nepbe::gallery::build_random_split;
use nepbe::linalg::c64;
use nepbe::nep::EigenpairSet;
use nepbe::unstructured::bounds_with_eigenvectors;

fn main() -> nepbe::Result<()> {
    let g = build_random_split(64, 7, false);
    for p in [1, 3, 8] {
        let pairs = g.eigenpairs(p, 4 * p + 8, 7)?;
        let l: Vec<_> = pairs.lambdas().iter().map(|z| z + c64(1e-5, -1e-5)).collect();
        let approx = EigenpairSet::new(l, pairs.v().clone())?;
        let b = bounds_with_eigenvectors(&g.nep, &approx)?;
        println!("p = {p}");
        println!("  eta           {:.4e}", b.eta_exact.unwrap_or(f64::NAN));
        println!("  upper_krt     {:.4e}", b.upper_krt);
        match b.upper_g {
            Some(x) => println!("  upper_g       {x:.4e}"),
            None => println!("  upper_g       (p > k)"),
        }
        println!("  upper_g_kappa {:.4e}", b.upper_g_kappa.unwrap_or(f64::INFINITY));
    }
    Ok(())
}
