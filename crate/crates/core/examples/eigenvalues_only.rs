//! Bounds when only eigenvalue approximations are known.

use nepbe::gallery::build_beam;
use nepbe::linalg::c64;
use nepbe::unstructured::bounds_eigenvalues_only;

fn main() -> nepbe::Result<()> {
    let g = build_beam(300)?;
    let pairs = g.eigenpairs(4, 20, 3)?;
    for shift in [1e-10, 1e-6, 1e-2] {
        let l: Vec<_> = pairs.lambdas().iter().map(|z| z + c64(shift, 0.0)).collect();
        let (b, _) = bounds_eigenvalues_only(&g.nep, &l)?;
        println!(
            "shift {shift:.0e}: lower {:.3e}  upper {:.3e}  (rank {})",
            b.lower_sv.unwrap_or(0.0),
            b.upper_krt,
            b.rank_krt
        );
    }
    // a single eigenvalue: the bounds coincide with the exact error
    let (b, _) = bounds_eigenvalues_only(&g.nep, &[pairs.lambdas()[0] + c64(1e-4, 0.0)])?;
    println!("p = 1: eta = {:.6e}", b.eta_exact.unwrap());
    Ok(())
}
