//! Full class report for a light-tailed and a heavy-tailed law.
//!
//! cargo run --release --example class_a_report

use ritt_lab::diag::{class_a_report, ReportConfig};
use ritt_lab::families::{alpha_frac, bernoulli};
use ritt_lab::seq::ConvOptions;

fn main() -> ritt_lab::error::Result<()> {
    for (f, cap) in [(bernoulli(0.5)?, 1 << 16), (alpha_frac(0.5, 1 << 18)?, (1 << 18) + 1)] {
        let cfg = ReportConfig {
            conv: ConvOptions::default().with_cap(cap),
            ..ReportConfig::default()
        };
        let r = class_a_report(&f, &cfg)?;
        println!("{}: overall {:?}", r.family.as_deref().unwrap_or("?"), r.overall);
        for s in &r.screens {
            println!("  {:<14} {:<20} {}", s.name, format!("{:?}", s.verdict), s.evidence);
        }
        println!();
    }
    Ok(())
}
