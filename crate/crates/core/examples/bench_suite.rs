//! A small run of the sparse structured benchmark, written to a temporary
//! directory.

use nepbe::bench::{run_benchmark, BenchConfig, Suite};

fn main() -> nepbe::Result<()> {
    let cfg = BenchConfig {
        count: 50,
        ..BenchConfig::default()
    };
    let out = std::env::temp_dir().join("nepbe-bench");
    let res = run_benchmark(Suite::SparseStructured, &cfg, Some(&out))?;
    let t = res.table("sparse").unwrap();
    let ratio: Vec<f64> = t
        .column("eta_s")
        .unwrap()
        .iter()
        .zip(t.column("upper_structured").unwrap())
        .map(|(e, u)| e / u)
        .collect();
    let worst = ratio.iter().copied().fold(0.0, f64::max);
    println!("{} members in {:.1}s, largest eta_S / bound = {worst:.3}", t.rows.len(), res.seconds);
    println!("written to {}", out.join(Suite::SparseStructured.name()).display());
    Ok(())
}
