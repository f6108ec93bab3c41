//! Penalty continuation for a quadratic problem with a tridiagonal, a
//! rank-2 and a scaled-identity coefficient.

use nepbe::gallery::{build_quadratic_lowrank, ensemble_member, EnsembleOptions};
use nepbe::riemann::{penalty_continuation, RiemannOptions};

fn main() -> nepbe::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let g = build_quadratic_lowrank(100, 1)?;
    let pairs = g.eigenpairs(2, 20, 1)?;
    let rel = 1e-4;
    let opts = EnsembleOptions {
        count: 1,
        range: (rel, rel),
        seed: 1,
        structured: true,
    };
    let member = ensemble_member(&g, &opts, 0)?;
    let perturbed = member.apply(&g.nep)?;

    let rep = penalty_continuation(&perturbed, &pairs, &g.specs, &RiemannOptions::default())?;
    println!("||dD||_F   {:.4e}", member.frobenius_norm());
    println!("eta_S      {:.4e}", rep.eta);
    println!("residual   {:.2e}", rep.residual);
    println!("stages     {}", rep.stages.len());
    println!("converged  {}", rep.converged);
    println!("time       {:.2}s", rep.seconds);
    Ok(())
}
