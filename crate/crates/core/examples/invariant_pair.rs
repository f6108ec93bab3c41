//! Structured backward error of an invariant pair `(V, M)` whose `M` is
//! not diagonal.

use nepbe::gallery::build_beam;
use nepbe::linalg::{c64, CMat, CVec};
use nepbe::nep::{invariant_residual, InvariantPair};
use nepbe::structured::structured_backward_error_invariant;
use nepbe::unstructured::backward_error_from_bundle;

fn main() -> nepbe::Result<()> {
    let g = build_beam(80)?;
    let pairs = g.eigenpairs(2, 20, 5)?;
    // mix the two eigenpairs: V S and S⁻¹ Λ S span the same invariant pair
    let s = CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.5, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]);
    let sinv = s.clone().try_inverse().unwrap();
    let lam = CMat::from_diagonal(&CVec::from_vec(pairs.lambdas().to_vec()));
    let v = (pairs.v() * &s).map(|z| z + c64(1e-8, 0.0));
    let m = &sinv * lam * &s;
    let pair = InvariantPair::new(v, m)?;

    let bundle = invariant_residual(&g.nep, &pair)?;
    println!("||R||_F  {:.3e}", bundle.r_norm);
    println!("eta      {:.3e}", backward_error_from_bundle(&bundle).eta);
    let d = structured_backward_error_invariant(&g.nep, &pair, &g.specs)?;
    println!("eta_S    {:.3e}", d.eta);
    Ok(())
}
