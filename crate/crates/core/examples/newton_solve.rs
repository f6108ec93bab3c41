//! Eigenpairs of the beam problem from random starts.

use nepbe::gallery::build_beam;
use nepbe::linalg::c64;
use nepbe::solve::{collect_pairs, random_starts, NewtonOptions};

fn main() -> nepbe::Result<()> {
    let g = build_beam(500)?;
    let starts = random_starts(12, c64(-1.0, 0.0), 1.0, true, 4);
    let got = collect_pairs(&g.nep, &starts, 5, 4, &NewtonOptions::default())?;
    for (z, run) in starts.iter().zip(&got.runs) {
        match run {
            Ok(r) => println!("start {:+.3}: lambda = {:+.12e}  iters {:2}  res {:.1e}", z.re, r.lambda.re, r.iterations(), r.residual()),
            Err(e) => println!("start {:+.3}: {e}", z.re),
        }
    }
    let pairs = got.pairs.expect("at least one eigenpair");
    println!("kept {} of {} requested", pairs.p(), got.requested);
    Ok(())
}
