//! Convolution powers with certified tails, and the two backends side by side.
//!
//! cargo run --release --example convolution_powers

use ritt_lab::families::{alpha_frac, bernoulli};
use ritt_lab::seq::{conv_exp, conv_power, diff_norm, ConvMethod, ConvOptions, ExpOptions, Sequence};

fn main() -> ritt_lab::error::Result<()> {
    let b = bernoulli(0.3)?;
    let direct = ConvOptions::default().with_method(ConvMethod::Direct);
    let fft = ConvOptions::default().with_method(ConvMethod::Fft);

    let p10 = conv_power(&b, 10, &direct)?;
    println!("Bernoulli(0.3)^(10): P(X = 3) = {:.12}, tail bound {:e}", p10.get(3), p10.tail_bound());

    // a heavy-tailed law: every power inherits the truncation error
    let a = alpha_frac(0.5, 1 << 14)?;
    println!("\nA_1/2 with N = 2^14, tail bound {:.3e}", a.tail_bound());
    println!("{:>6} {:>18} {:>14} {:>12}", "n", "F^(n)(40) direct", "fft", "tail");
    for n in [2u64, 8, 32] {
        let x = conv_power(&a, n, &direct.with_cap(1 << 15))?;
        let y = conv_power(&a, n, &fft.with_cap(1 << 15))?;
        println!("{n:>6} {:>18.10} {:>14.10} {:>12.3e}", x.get(40), y.get(40), y.tail_bound());
    }

    println!("\n‖F^(n) − F^(n+1)‖₁ for Bernoulli(0.3):");
    for n in [1u64, 4, 16, 64, 256] {
        let i = diff_norm(&b, n, &ConvOptions::default())?;
        println!("  n = {n:>4}: [{:.10}, {:.10}]  √n·mid = {:.4}", i.lower, i.upper, (n as f64).sqrt() * i.mid());
    }

    let e = conv_exp(&b, 4.0, &ExpOptions::default())?;
    println!("\ne^(-4(δ₀ − F)) for Bernoulli(0.3): mass {:.15}, tail {:.2e}", e.mass(), e.tail_bound());
    Ok(())
}
