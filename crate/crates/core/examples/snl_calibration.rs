//! Shot-noise calibration: a coherent beam split 50/50 onto two detectors. The
//! difference noise equals the total detected power, and a Monte Carlo trace
//! of the same beam measures 0 dB against it.
//!
//! ```bash
//! cargo run -p cascade-squeeze --release --example snl_calibration
//! ```

use cascade_squeeze::bogoliubov::{MeanField, QuadratureCovariance};
use cascade_squeeze::photodetection::{snl_calibration_sim, DetectionPlan};
use cascade_squeeze::timeseries::{
    measure_ratio, sample_photocurrents, snl_reference_trace, Band, Sampling, SpectrumSettings,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for power in [1.0, 10.0, 100.0, 1000.0] {
        println!(
            "total power {power:>6}: balanced difference variance {:.6}",
            snl_calibration_sim(power)?
        );
    }

    let power = 50.0;
    let settings = SpectrumSettings {
        rbw_hz: 30e3,
        averages: 2000,
    };
    let fs = 4e6;
    let sampling = Sampling {
        sample_rate: fs,
        duration: settings.required_samples(fs) as f64 / fs,
        seed: 1,
    };
    let beam = sample_photocurrents(
        &QuadratureCovariance::vacuum(1),
        &MeanField::seeded(1, 0, power),
        &[0],
        &["coherent".into()],
        &sampling,
        &[],
    )?;
    let plan = DetectionPlan::combination(vec![0], vec![1.0])?;
    let reference = snl_reference_trace(power, &sampling)?;
    let m = measure_ratio(
        &beam,
        &plan,
        &reference,
        &settings,
        &Band {
            center_hz: 1e6,
            half_width_hz: 400e3,
        },
    )?;
    println!(
        "coherent beam against its shot-noise reference: {:+.3} dB",
        m.db
    );
    Ok(())
}
