//! Write a problem to Matrix Market files, describe it with a JSON config,
//! and load it back.

use nepbe::gallery::build_beam;
use nepbe::io::{load_problem, write_coordinate, write_pairs};
use nepbe::nep::Coefficient;
use nepbe::unstructured::backward_error_exact;

fn main() -> nepbe::Result<()> {
    let dir = std::env::temp_dir().join("nepbe-problem-files");
    std::fs::create_dir_all(&dir).unwrap();
    let g = build_beam(40)?;
    for (j, c) in g.nep.coeffs().iter().enumerate() {
        if let Coefficient::Sparse(s) = c {
            write_coordinate(&dir.join(format!("F{j}.mtx")), s, false)?;
        }
    }
    let pairs = g.eigenpairs(2, 20, 1)?;
    write_pairs(&dir, &pairs)?;

    let config = r#"{
  "dimension": 40,
  "terms": [
    {"coefficient": {"path": "F0.mtx"}, "function": {"polynomial": [[0, 0], [-1, 0]]}, "structure": "scaled_identity"},
    {"coefficient": {"path": "F1.mtx"}, "function": "one", "structure": "pattern"},
    {"coefficient": {"path": "F2.mtx"}, "function": "exp_neg", "structure": "pattern"}
  ],
  "eigenpairs": {"file": {"lambdas": "lambdas.txt", "vectors": "vectors.mtx"}}
}"#;
    let path = dir.join("beam.json");
    std::fs::write(&path, config).unwrap();

    let loaded = load_problem(&path)?;
    let back = loaded.eigenpairs()?;
    let a = backward_error_exact(&g.nep, &pairs)?.eta;
    let b = backward_error_exact(&loaded.nep, &back)?.eta;
    println!("files in {}", dir.display());
    println!("eta from memory {a:.6e}");
    println!("eta from files  {b:.6e}");
    Ok(())
}
