//! A Kreiss operator whose fractional subordinate is Ritt: the discretized Volterra operator.
//!
//! cargo run --release --example volterra_kreiss_to_ritt [d]

use ritt_lab::op::{ritt_from_kreiss_check, spectrum_distance_from_one, volterra_op, FracOptions, ScanOptions};

fn main() -> ritt_lab::error::Result<()> {
    let d: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let t = volterra_op(d)?;
    println!("d = {d}: ‖T‖ = {:.5}, max |λ − 1| over σ(T) = {:.3e}", t.norm(), spectrum_distance_from_one(&t)?);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let scan = ScanOptions::default().with_threads(threads);
    let r = ritt_from_kreiss_check(&t, 0.5, &FracOptions::default(), &scan)?;
    println!("S = I − (I − T)^(1/2) via {:?}, error {:.1e}", r.method, r.frac_error);
    println!("{:>10} {:>16} {:>16}", "radius", "Kreiss (T)", "Ritt (S)");
    for ((rad, k), s) in r.kreiss.radii.iter().zip(&r.kreiss.per_radius_max).zip(&r.ritt.per_radius_max) {
        println!("{rad:>10.6} {k:>16.6} {s:>16.6}");
    }
    println!("Ritt scan of S stabilizes: {}", r.ritt.stabilizes());
    Ok(())
}
