//! Synthetic photocurrents of the two-cell cascade analyzed like a spectrum
//! analyzer at 30 kHz resolution bandwidth. A laser tone at 500 kHz couples
//! into all beams in common mode and cancels in the triple difference.
//!
//! ```bash
//! cargo run -p cascade-squeeze --release --example spectrum_analyzer
//! ```

use cascade_squeeze::cascade::{run_scenario, CascadeSpec};
use cascade_squeeze::photodetection::to_db;
use cascade_squeeze::timeseries::{
    estimate_spectrum, measure_scenario, sample_scenario, Band, Sampling, SpectrumSettings, Tone,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let result = run_scenario(&CascadeSpec::two_cell_experiment())?;
    let settings = SpectrumSettings {
        rbw_hz: 30e3,
        averages: 1000,
    };
    let fs = 4e6;
    let sampling = Sampling {
        sample_rate: fs,
        duration: settings.required_samples(fs) as f64 / fs,
        seed: 2024,
    };
    let triple = &result.named("G").expect("default plans").plan;
    let tone = Tone::common_mode(500e3, 1e5, &result.network.beams, triple);
    let traces = sample_scenario(&result, &sampling, &[tone])?;

    let band = Band {
        center_hz: 1e6,
        half_width_hz: 400e3,
    };
    for m in measure_scenario(&result, &traces, &settings, &band)? {
        println!(
            "{}: measured {:>7.3} dB, analytic {:>7.3} dB",
            m.name, m.measurement.db, m.analytic_db
        );
    }

    let probe = estimate_spectrum(&traces.channels[2], fs, &settings)?;
    let difference = estimate_spectrum(&traces.combine(triple)?, fs, &settings)?;
    println!(
        "500 kHz tone: {:.1} dB above the floor on the probe, suppressed by {:.1} dB in the triple difference",
        to_db(probe.power_at(500e3) / probe.band_power(1e6, 400e3)?)?,
        to_db(probe.power_at(500e3) / difference.power_at(500e3))?
    );
    Ok(())
}
