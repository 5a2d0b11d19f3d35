//! (I − T)^α three ways: binomial series, eigendecomposition and Kato's integral.
//!
//! cargo run --release --example fractional_powers

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ritt_lab::op::{frac_power, random_normal_contraction, spectral_norm, FracMethod, FracOptions};

fn main() -> ritt_lab::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = random_normal_contraction(6, &mut rng)?;
    let opts = FracOptions::default();
    for alpha in [0.25, 0.5, 1.5] {
        let s = frac_power(&t, alpha, FracMethod::Series, &opts)?;
        let e = frac_power(&t, alpha, FracMethod::Eigen, &opts)?;
        let k = frac_power(&t, alpha, FracMethod::Kato, &opts)?;
        println!("α = {alpha}");
        println!("  series ± {:.1e}, eigen ± {:.1e} (cond {:.2}), kato ± {:.1e}", s.error, e.error, e.cond.unwrap_or(f64::NAN), k.error);
        println!("  ‖series − eigen‖ = {:.2e}", spectral_norm(&(s.op.matrix() - e.op.matrix())));
        println!("  ‖kato − eigen‖   = {:.2e}", spectral_norm(&(k.op.matrix() - e.op.matrix())));
    }
    let q = frac_power(&t, 0.25, FracMethod::Eigen, &opts)?;
    let h = frac_power(&t, 0.5, FracMethod::Eigen, &opts)?;
    let qm = q.op.matrix();
    println!("\n‖((I−T)^¼)² − (I−T)^½‖ = {:.2e}", spectral_norm(&(qm * qm - h.op.matrix())));
    Ok(())
}
