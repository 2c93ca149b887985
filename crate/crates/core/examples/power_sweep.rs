//! Noise power versus total detected power for the triple beams, both twin-beam
//! benchmarks and the shot-noise calibration. Slope ratios to the shot-noise
//! line give the squeezing levels independent of offsets.
//!
//! ```bash
//! cargo run -p cascade-squeeze --example power_sweep
//! ```

use cascade_squeeze::cascade::CascadeSpec;
use cascade_squeeze::sweep::{linear_grid, sweep_power};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = CascadeSpec::two_cell_experiment();
    spec.path_transmissions = vec![0.9171, 0.9350, 0.8484];
    let result = sweep_power(&spec, &linear_grid(5.0, 50.0, 10))?;
    for curve in &result.curves {
        println!(
            "{} ({}): slope {:.5}, intercept {:.1e}, R^2 = {}",
            curve.label,
            curve.description,
            curve.fit.slope,
            curve.fit.intercept,
            curve.fit.r_squared
        );
    }
    for ratio in &result.ratios {
        println!("{}: {:.3} ({:.2} dB)", ratio.label, ratio.ratio, ratio.db);
    }
    result.write_points_csv(std::io::stdout())?;
    Ok(())
}
