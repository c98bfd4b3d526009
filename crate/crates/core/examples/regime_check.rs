//! Fast-system estimates against the oracle for chosen cases and truncation
//! levels.
//!
//! cargo run --release --example regime_check -- <case> <delta>...

use std::time::Instant;

use sarsim::cli::nominal_samples;
use sarsim::pwe::{self, Reconstruction};
use sarsim::sar::oracle_peak_sar;
use sarsim::source::build_case;

fn main() -> sarsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let case: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let deltas: Vec<f64> = args.map(|a| a.parse().expect("delta")).collect();
    let t = Instant::now();
    let sc = build_case(case, sarsim::cli::DEFAULT_SEED)?;
    let (o1, o10) = oracle_peak_sar(&sc, 1e-3)?;
    println!("case {case}: oracle 1g {:.5} 10g {:.5} ({:.1} s)", o1.value, o10.value, t.elapsed().as_secs_f64());
    let samples = nominal_samples(&sc)?;
    for d in deltas {
        let t = Instant::now();
        let rec = Reconstruction::new(&samples, sc.wavenumber(), d, pwe::default_counts(samples.counts))?;
        let (f1, f10) = pwe::estimate_peak_sar(&rec, &sc.geometry, &sc.medium, 1e-3)?;
        println!(
            "  delta {d:<5}: 1g {:.5} ({:+.2} %)  10g {:.5} ({:+.2} %)  {:.1} s",
            f1.value,
            100.0 * (f1.value - o1.value) / o1.value,
            f10.value,
            100.0 * (f10.value - o10.value) / o10.value,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
