//! Generating functions, Fourier transforms and the sector picture of 1 − F̂.
//!
//! cargo run --release --example generating_functions

use num_complex::Complex64;
use ritt_lab::families::{alpha_frac, bernoulli, counterexample_log};
use ritt_lab::transforms::{check_deriv_bound, check_real_lower, gen_fn, one_minus_pow, sector_report, uniform_positive_grid};

fn main() -> ritt_lab::error::Result<()> {
    let a = alpha_frac(0.5, 1 << 16)?;
    println!("φ(w) for A_1/2 against 1 − (1 − w)^(1/2):");
    for w in [Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.9), Complex64::from_polar(0.99, 2.0)] {
        let v = gen_fn(&a, w)?;
        let exact = Complex64::new(1.0, 0.0) - one_minus_pow(w, 0.5);
        println!("  w = {w:.3}: {:.12} ± {:.1e} (closed form {exact:.12})", v.value, v.error);
    }

    let grid: Vec<f64> = (1..=40).map(|j| std::f64::consts::PI * 0.8f64.powi(j)).collect();
    let lower = check_real_lower(&a, 0.5, &grid);
    let deriv = check_deriv_bound(&a, 0.5, &grid);
    println!("\n1 − Re F̂ ≥ ε|ξ|^(1/2): ε = {:?}, passed {}", lower.constant, lower.passed());
    println!("|F̂'| ≤ c|ξ|^(-1/2):     c = {:?}, passed {}", deriv.constant, deriv.passed());

    println!("\nsup |Arg(1 − F̂)| and its limit as ξ → 0:");
    let ugrid = uniform_positive_grid(256);
    for (name, f) in [
        ("bernoulli(1/2)", bernoulli(0.5)?),
        ("alpha_frac(1/2)", a.clone()),
        ("counterexample_log", counterexample_log(1 << 20)?),
    ] {
        let r = sector_report(&f, &ugrid);
        println!(
            "  {name:<20} sup {:.4}  limit {}",
            r.sup_angle,
            r.limit_estimate.map_or("n/a".into(), |l| format!("{l:.4}"))
        );
    }
    Ok(())
}
