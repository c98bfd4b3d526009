//! Prints the oracle 10 g / 1 g ratio of each reference case next to the
//! published reference value. With `--tune` it also bisects a width factor
//! per case that would match the reference; the factor is then folded into
//! the case table by hand.
//!
//! cargo run --release --example calibrate_envelopes -- [--tune] [cases...]

use std::time::Instant;

use sarsim::sar::{oracle_peak, Mass};
use sarsim::source::{build_case_scaled, case_envelope, case_row, normalize_to_unit_sar};

fn ratio(case: usize, scale: f64) -> sarsim::Result<f64> {
    let sc = normalize_to_unit_sar(&build_case_scaled(case, 1, scale)?)?;
    Ok(oracle_peak(&sc, 1e-3, Mass::TenGrams)?.value)
}

fn main() -> sarsim::Result<()> {
    let mut tune = false;
    let mut cases = Vec::new();
    for a in std::env::args().skip(1) {
        if a == "--tune" {
            tune = true;
        } else {
            cases.push(a.parse::<usize>().expect("case index"));
        }
    }
    if cases.is_empty() {
        cases = (1..=11).collect();
    }
    println!("case  ref10g  oracle10g  rel.dev  seconds");
    for c in cases {
        let t = Instant::now();
        let reference = case_row(c)?.reference_sar_10g;
        let r = ratio(c, 1.0)?;
        println!(
            "{c:>4}  {reference:>6.3}  {r:>9.4}  {:>+7.3}  {:>7.1}",
            (r - reference) / reference,
            t.elapsed().as_secs_f64()
        );
        if tune {
            // ratio grows with hot-spot width; bisect in log space
            let (mut lo, mut hi) = (0.25f64, 4.0f64);
            for _ in 0..7 {
                let mid = (lo * hi).sqrt();
                if ratio(c, mid)? < reference {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = (lo * hi).sqrt();
            let widths: Vec<f64> = case_envelope(c)?.iter().map(|h| h.width * s).collect();
            println!("      width factor {s:.4} -> widths {widths:.3?} mm");
        }
    }
    Ok(())
}
