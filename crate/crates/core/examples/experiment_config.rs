//! Drives a small batch experiment from JSON, then re-runs it and compares manifests.
//!
//! cargo run --release --example experiment_config

use ritt_lab::experiment::{compare, run, ExperimentConfig};

const CONFIG: &str = r#"{
  "version": 1,
  "seed": 1,
  "threads": 2,
  "experiments": [
    {
      "name": "alpha_half",
      "family": {"family": "alpha_frac", "alpha": 0.5, "N": 16384},
      "diagnostics": ["ritt_table", "half_table", "sector_report"],
      "n_grid": [1, 2, 4, 8, 16, 32]
    },
    {
      "name": "contractions",
      "operator_suite": {
        "matrix": {"kind": "random_normal", "d": 4, "count": 2},
        "checks": ["subordination_identity", "spectral_map", "ritt_scan"],
        "angles": 64
      }
    }
  ]
}"#;

fn main() -> ritt_lab::error::Result<()> {
    let dir = std::env::temp_dir().join("ritt-lab-example");
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let a = run(&cfg.clone().with_output_dir(dir.join("a")), &dir)?;
    let b = run(&cfg.with_output_dir(dir.join("b")), &dir)?;
    for o in &a.outcomes {
        println!("{}: {:?}", o.name, o.artifacts);
    }
    let rep = compare(&a.manifest, &b.manifest, 0.0)?;
    println!("re-run identical: {}", rep.passed());

    let bad = CONFIG.replace("\"alpha\": 0.5", "\"alpha\": 1.5");
    println!("invalid config: {}", ExperimentConfig::parse(&bad).unwrap_err());
    Ok(())
}
