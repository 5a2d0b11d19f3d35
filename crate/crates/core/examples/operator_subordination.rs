//! Subordinated operators Ψ(F;T) = Σ F(k)Tᵏ on matrices.
//!
//! cargo run --release --example operator_subordination

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ritt_lab::families::{alpha_frac, bernoulli};
use ritt_lab::op::{power_bound, psi_op, random_normal_contraction, resolvent_scan, shift_op, spectral_map_check, subordination_identity_check, ScanKind, ScanOptions};
use ritt_lab::seq::ConvOptions;

fn main() -> ritt_lab::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let t = random_normal_contraction(5, &mut rng)?;
    let a = alpha_frac(0.5, 4096)?;

    let psi = psi_op(&a, &t)?;
    println!("‖T‖ = {:.4}, ‖Ψ(A_1/2; T)‖ = {:.4} ± {:.2e}", t.norm(), psi.op.norm(), psi.error);

    let c = subordination_identity_check(&a, &t, 6, &ConvOptions::default())?;
    println!("Ψ(F;T)^6 vs Ψ(F^(6);T): residual {:.2e}, budget {:.2e}", c.residual, c.budget);

    let s = spectral_map_check(&a, &t)?;
    println!("σ(Ψ(F;T)) vs φ_F(σ(T)): distance {:.2e}, budget {:.2e}", s.distance, s.budget);

    // the shift is power bounded but not Ritt; subordinating to a class member repairs that
    let shift = shift_op(32)?;
    let scan = ScanOptions {
        max_exp: 8,
        angles: 128,
        ..ScanOptions::default()
    };
    let raw = resolvent_scan(&shift, ScanKind::Ritt, &scan)?;
    let sub = psi_op(&bernoulli(0.5)?, &shift)?;
    let fixed = resolvent_scan(&sub.op, ScanKind::Ritt, &scan)?;
    println!("\nRitt scan per radius, shift on C^32:       {:?}", round(&raw.per_radius_max));
    println!("Ritt scan per radius, Ψ(Bernoulli; shift): {:?}", round(&fixed.per_radius_max));
    println!("sup ‖Tⁿ‖ over 256 powers: {:.4}", power_bound(&sub.op, 256)?.bound);
    Ok(())
}

fn round(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}
