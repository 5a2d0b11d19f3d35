//! Builds each family from its JSON description and prints its head and tail data.
//!
//! cargo run --release --example families_tour

use ritt_lab::families::FamilySpec;
use ritt_lab::seq::Sequence;
use ritt_lab::special::zeta;
use serde_json::json;

fn main() -> ritt_lab::error::Result<()> {
    let specs = [
        json!({"family": "bernoulli", "beta": 0.5}),
        json!({"family": "poisson", "s": 1.0}),
        json!({"family": "alpha_frac", "alpha": 0.5, "N": 65536}),
        json!({"family": "zeta", "alpha": 0.5, "N": 65536}),
        json!({"family": "zeta_one", "N": 65536}),
        json!({"family": "log_mix", "epsilon": 1.0, "N": 4096}),
        json!({"family": "power_tail_mix", "terms": [[0.5 / zeta(1.5), 0.5], [0.5 / zeta(1.75), 0.75]], "N": 65536}),
        json!({"family": "counterexample_log", "N": 65536}),
        json!({"family": "mixture", "weights": [0.5, 0.5],
               "components": [{"family": "delta", "m": 1}, {"family": "bernoulli", "beta": 0.25}]}),
        json!({"family": "subordinate", "N": 4096,
               "outer": {"family": "alpha_frac", "alpha": 0.5, "N": 4096},
               "inner": {"family": "bernoulli", "beta": 0.5}}),
    ];
    println!("{:<40} {:>8} {:>11} {:>11} {:>11} {:>10}", "family", "len", "F(0)", "F(1)", "F(10)", "tail");
    for v in &specs {
        let spec = FamilySpec::from_json(v)?;
        let f = spec.build()?;
        println!(
            "{:<40} {:>8} {:>11.4e} {:>11.4e} {:>11.4e} {:>10.3e}",
            spec.label(),
            f.len(),
            f.get(0),
            f.get(1),
            f.get(10),
            f.tail_bound()
        );
    }

    match FamilySpec::from_json(&json!({"family": "alpha_frac", "alpha": 1.5, "N": 10})) {
        Err(e) => println!("\nrejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
