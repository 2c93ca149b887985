//! Fit per-detector path transmissions so the model reproduces measured
//! twin-beam and triple-beam squeezing, with the inter-cell probe loss and
//! detector efficiency held fixed.
//!
//! ```bash
//! cargo run -p cascade-squeeze --example loss_budget_fit
//! ```

use cascade_squeeze::cascade::CascadeSpec;
use cascade_squeeze::fit::{fit_losses, FitOptions, FreeParam, MeasuredSqueezing};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = CascadeSpec::two_cell_experiment();
    for (label, measured) in [
        ("slope-derived", MeasuredSqueezing::slope_derived()),
        ("spectrum minima", MeasuredSqueezing::direct_minima()),
    ] {
        let fit = fit_losses(
            measured,
            &template,
            &FreeParam::detector_paths(),
            &FitOptions::default(),
        )?;
        println!("targets: {label}");
        for (param, value) in &fit.params {
            println!("  {param:>6} = {value:.4}");
        }
        for ((name, model), target) in ["twin 1", "twin 2", "triple"]
            .iter()
            .zip(fit.model_db)
            .zip(measured.as_array())
        {
            println!("  {name:>7}: model {model:7.3} dB, measured {target:5.1} dB");
        }
        println!(
            "  residual {:.2e} dB^2 after {} iterations{}",
            fit.residual,
            fit.iterations,
            if fit.flagged { " (FLAGGED)" } else { "" }
        );
    }
    Ok(())
}
