//! Longer chains: every extra amplifier adds one beam to the difference and
//! deepens the squeezing as 1/(2G^n - 1).
//!
//! ```bash
//! cargo run -p cascade-squeeze --example n_chain
//! ```

use cascade_squeeze::cascade::{analytic_chain_ratio, full_difference, run_scenario, CascadeSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gain = 2.0;
    println!("G = {gain}");
    for n in 1..=10 {
        let gains = vec![gain; n];
        let spec = CascadeSpec::lossless(1.0, &gains).with_plans(vec![full_difference("full", n)]);
        let result = run_scenario(&spec)?;
        let report = &result.reports[0].report;
        println!(
            "  n = {n:>2}: {:>2} beams, engine {:.6e}, formula {:.6e}, {:>7.2} dB",
            result.network.beams.len(),
            report.ratio,
            analytic_chain_ratio(&gains)?,
            report.db
        );
    }
    Ok(())
}
