//! Ritt, half-power and semigroup tables with their trend verdicts.
//!
//! cargo run --release --example ritt_tables

use ritt_lab::diag::{half_table, ritt_table, semigroup_table, SemigroupOptions, TrendRule};
use ritt_lab::families::{alpha_frac, poisson};
use ritt_lab::numeric::powers_of_two;
use ritt_lab::seq::ConvOptions;

fn main() -> ritt_lab::error::Result<()> {
    let grid = powers_of_two(1, 11);
    let conv = ConvOptions::default().with_cap((1 << 18) + 1);
    let rule = TrendRule::default();

    let p = poisson(1.0, 0)?;
    let t = ritt_table(&p, &grid, &conv)?;
    println!("Poisson(1): n‖F^(n) − F^(n+1)‖ grows like √n");
    for r in &t.rows {
        println!("  n = {:>5}  [{:.6}, {:.6}]", r.index, r.lower, r.upper);
    }
    println!("  slope of the unweighted norm {:.4}, trend {:?}", t.slope_fit.unwrap().slope, t.trend(&rule));

    let h = half_table(&p, &grid, &conv)?;
    println!("  half-power table trend {:?}, last-three spread {:.4}", h.trend(&rule), h.tail_spread(true));

    let a = alpha_frac(0.5, 1 << 18)?;
    let t = ritt_table(&a, &grid[..8], &conv)?;
    println!("\nA_1/2 (N = 2^18): the lower ends settle while truncation inflates the uppers");
    for r in &t.rows {
        println!("  n = {:>5}  [{:.6}, {:.6}]", r.index, r.lower, r.upper);
    }

    let s = semigroup_table(&a, &[1.0, 4.0, 16.0, 64.0], &SemigroupOptions::default())?;
    println!("\nA_1/2 semigroup t‖e^(-tL) − L e^(-tL)‖:");
    for r in &s.rows {
        println!("  t = {:>5}  [{:.6}, {:.6}]", r.index, r.lower, r.upper);
    }
    Ok(())
}
