//! One amplifier seeded by a coherent probe: the probe/conjugate intensity
//! difference sits below shot noise by 1/(2G-1), and detection losses pull it
//! back toward the shot-noise level.
//!
//! ```bash
//! cargo run -p cascade-squeeze --example twin_beams
//! ```

use cascade_squeeze::cascade::{analytic_chain_ratio, full_difference, run_scenario, CascadeSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>5} {:>10} {:>10} {:>9}", "G", "engine", "1/(2G-1)", "dB");
    for gain in [1.1, 1.5, 2.1, 2.9, 5.0] {
        let spec =
            CascadeSpec::lossless(10.0, &[gain]).with_plans(vec![full_difference("twin", 1)]);
        let report = &run_scenario(&spec)?.reports[0].report;
        println!(
            "{gain:>5.1} {:>10.6} {:>10.6} {:>9.3}",
            report.ratio,
            analytic_chain_ratio(&[gain])?,
            report.db
        );
    }

    println!("\nG = 2.9 with equal transmission on both beams");
    for eta in [1.0, 0.95, 0.9, 0.8, 0.5] {
        let mut spec =
            CascadeSpec::lossless(10.0, &[2.9]).with_plans(vec![full_difference("twin", 1)]);
        spec.detector_efficiency = eta;
        let report = &run_scenario(&spec)?.reports[0].report;
        println!("  eta {eta:.2}: {:>7.3} dB", report.db);
    }
    Ok(())
}
