//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure (non-convergent or flagged fit, truncation leakage, singular noise
//! covariance).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::cascade::{
    fmt_num, full_difference, run_scenario, CascadeSpec, PlanSpec, ScenarioError,
};
use crate::fit::{fit_losses, FitError, FitOptions, FreeParam, MeasuredSqueezing};
use crate::fock::{recommended_cutoffs, verify_against_gaussian, OracleError, OracleReport};
use crate::sweep::{linear_grid, sweep_power, SweepError};
use crate::timeseries::{
    estimate_spectrum, measure_scenario, sample_scenario, snl_reference_trace, Band, Sampling,
    SpectrumSettings, TimeseriesError, Tone,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Network(crate::bogoliubov::NetworkError::InvalidCovariance(_)) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Scenario(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Leakage { .. } => CliError::Numerical(e.to_string()),
            OracleError::Scenario(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Scenario(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TimeseriesError> for CliError {
    fn from(e: TimeseriesError) -> Self {
        match e {
            TimeseriesError::Factorization | TimeseriesError::ZeroReference => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cascade-squeeze",
    version,
    about = "Noise of cascaded parametric amplifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output file (or directory for `spectra`); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed; only the Monte Carlo commands draw random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every plan of a scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Noise power versus total detected power with slope fits.
    SweepPower {
        #[arg(long)]
        config: PathBuf,
        /// Seed intensities, comma separated; overrides --grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        seeds: Option<Vec<f64>>,
        /// Evenly spaced seed intensities START:STOP:POINTS.
        #[arg(long, default_value = "5:50:10")]
        grid: String,
        /// Also write the per-point table here.
        #[arg(long)]
        points: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit transmissions to measured (twin 1, twin 2, triple) squeezing in dB.
    FitLosses {
        #[arg(long)]
        config: PathBuf,
        /// Three dB values TWIN1,TWIN2,TRIPLE.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        measured: Option<Vec<f64>>,
        /// Use the directly read spectral minima instead of the slope-derived values.
        #[arg(long, conflicts_with = "measured")]
        direct_minima: bool,
        /// Free parameters (c1, c2, probe, inter1, inter2, det).
        #[arg(long, value_delimiter = ',', default_value = "c1,c2,probe")]
        free: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the linearized engine against an exact number-basis calculation.
    OracleCheck {
        /// One or two gains, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        gains: Vec<f64>,
        #[arg(long)]
        seed_intensity: f64,
        /// Cutoffs (probe, C1, C2); chosen automatically when omitted.
        #[arg(long, value_delimiter = ',')]
        cutoffs: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize photocurrent traces and emulate spectrum-analyzer readings.
    Spectra {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 30e3)]
        rbw_hz: f64,
        #[arg(long, default_value_t = 300)]
        avg: usize,
        #[arg(long, default_value_t = 4e6)]
        fs_hz: f64,
        /// Trace length; the shortest length holding --avg segments when omitted.
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long, default_value_t = 1e6)]
        band_center_hz: f64,
        /// Kept narrow enough to exclude classical peaks below 600 kHz.
        #[arg(long, default_value_t = 400e3)]
        band_half_width_hz: f64,
        /// Common-mode classical tone FREQ_HZ:AMPLITUDE cancelling in the full
        /// multi-beam difference (repeatable).
        #[arg(long)]
        tone: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Validation(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(config: &Path) -> Result<CascadeSpec, CliError> {
    Ok(CascadeSpec::from_file(config)?)
}

fn cmd_run(config: &Path, common: &Common) -> Result<(), CliError> {
    let result = run_scenario(&load(config)?)?;
    result.write_csv(output(common.out.as_deref())?)?;
    for r in &result.reports {
        eprintln!(
            "{:>12}  ratio {:>10.6}  {:>8.3} dB",
            r.name, r.report.ratio, r.report.db
        );
    }
    for name in &result.skipped {
        eprintln!("{name:>12}  skipped: no detected light");
    }
    Ok(())
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Validation(format!("--grid expects START:STOP:POINTS, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, points] = parts.as_slice() else {
        return Err(bad());
    };
    Ok(linear_grid(
        start.parse().map_err(|_| bad())?,
        stop.parse().map_err(|_| bad())?,
        points.parse().map_err(|_| bad())?,
    ))
}

fn cmd_sweep(
    config: &Path,
    seeds: Option<&[f64]>,
    grid: &str,
    points: Option<&Path>,
    common: &Common,
) -> Result<(), CliError> {
    let grid = match seeds {
        Some(s) => s.to_vec(),
        None => parse_grid(grid)?,
    };
    let result = sweep_power(&load(config)?, &grid)?;
    result.write_fits_csv(output(common.out.as_deref())?)?;
    if let Some(p) = points {
        result.write_points_csv(output(Some(p))?)?;
    }
    for c in &result.curves {
        eprintln!(
            "curve {} ({}): slope {:.6} ± {:.2e}, R² {:.12}",
            c.label, c.description, c.fit.slope, c.fit.slope_se, c.fit.r_squared
        );
    }
    for r in &result.ratios {
        eprintln!("{}: {:.4} ({:.3} dB)", r.label, r.ratio, r.db);
    }
    Ok(())
}

fn cmd_fit(
    config: &Path,
    measured: Option<&[f64]>,
    direct_minima: bool,
    free: &[String],
    common: &Common,
) -> Result<(), CliError> {
    let measured = match (measured, direct_minima) {
        (Some([a, b, c]), _) => MeasuredSqueezing::new(*a, *b, *c),
        (Some(v), _) => {
            return Err(CliError::Validation(format!(
                "--measured needs 3 values, got {}",
                v.len()
            )))
        }
        (None, true) => MeasuredSqueezing::direct_minima(),
        (None, false) => MeasuredSqueezing::slope_derived(),
    };
    let free = free
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<FreeParam>, _>>()?;
    let fit = fit_losses(measured, &load(config)?, &free, &FitOptions::default())?;
    fit.write_csv(output(common.out.as_deref())?)?;
    eprintln!("{:>8} {:>10} {:>10}", "scenario", "measured", "model");
    for (name, (m, model)) in ["twin1", "twin2", "triple"]
        .iter()
        .zip(measured.as_array().iter().zip(fit.model_db))
    {
        eprintln!("{name:>8} {m:>10.3} {model:>10.3}");
    }
    for (p, v) in &fit.params {
        eprintln!("{p} = {v:.6}");
    }
    for alt in &fit.alternatives {
        let values: Vec<String> = alt.iter().map(|v| format!("{v:.6}")).collect();
        eprintln!("also fits exactly: {}", values.join(", "));
    }
    if !fit.converged {
        return Err(CliError::Numerical(format!(
            "fit did not converge in {} iterations",
            fit.iterations
        )));
    }
    if fit.flagged {
        return Err(CliError::Numerical(format!(
            "worst residual {:.3} dB exceeds the threshold; targets are not reachable with these free parameters",
            fit.max_abs_error_db
        )));
    }
    Ok(())
}

fn cmd_oracle(
    gains: &[f64],
    seed_intensity: f64,
    cutoffs: Option<&[usize]>,
    common: &Common,
) -> Result<(), CliError> {
    if !(seed_intensity.is_finite() && seed_intensity > 0.0) {
        return Err(CliError::Validation(format!(
            "--seed-intensity must be positive, got {seed_intensity}"
        )));
    }
    let cutoffs = cutoffs.map_or_else(
        || recommended_cutoffs(gains, seed_intensity),
        <[usize]>::to_vec,
    );
    let report = verify_against_gaussian(gains, seed_intensity.sqrt(), &cutoffs)?;
    let mut w = csv::Writer::from_writer(output(common.out.as_deref())?);
    w.write_record(OracleReport::CSV_HEADER)?;
    w.write_record(report.csv_record())?;
    w.flush()?;
    eprintln!(
        "exact {:.9}  linearized {:.9}  relative discrepancy {:.3e} (leading order {:.3e}), leakage {:.1e}",
        report.exact_ratio, report.linearized_ratio, report.relative_discrepancy, report.predicted_relative, report.leakage
    );
    Ok(())
}

fn parse_tone(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Validation(format!("--tone expects FREQ_HZ:AMPLITUDE, got {text:?}"));
    let (f, a) = text.split_once(':').ok_or_else(bad)?;
    Ok((f.parse().map_err(|_| bad())?, a.parse().map_err(|_| bad())?))
}

#[allow(clippy::too_many_arguments)]
fn cmd_spectra(
    config: &Path,
    settings: SpectrumSettings,
    fs_hz: f64,
    duration_s: Option<f64>,
    band: Band,
    tones: &[String],
    common: &Common,
) -> Result<(), CliError> {
    if (band.center_hz + band.half_width_hz).partial_cmp(&(fs_hz / 2.0))
        != Some(std::cmp::Ordering::Less)
    {
        return Err(CliError::Validation(format!(
            "analysis band reaches {} Hz, beyond the Nyquist frequency {} Hz",
            band.center_hz + band.half_width_hz,
            fs_hz / 2.0
        )));
    }
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Validation("spectra needs --out DIRECTORY".into()))?;
    std::fs::create_dir_all(dir)?;
    let mut spec = load(config)?;
    let n = spec.stage_count();
    // tones cancel in the full multi-beam difference; reuse a plan that already is one
    let terms = |p: &PlanSpec| {
        let mut t: Vec<(String, u64)> = p
            .detected_modes
            .iter()
            .cloned()
            .zip(p.coefficients.iter().map(|c| c.to_bits()))
            .collect();
        t.sort();
        t
    };
    let target = terms(&full_difference("full", n));
    let full_name = match spec.plans.iter().find(|p| terms(p) == target) {
        Some(p) => p.name.clone(),
        None => {
            spec.plans.push(full_difference("full", n));
            "full".to_string()
        }
    };
    let result = run_scenario(&spec)?;
    let full = &result
        .named(&full_name)
        .expect("full difference plan is present")
        .plan;
    let tones = tones
        .iter()
        .map(|t| {
            let (f, a) = parse_tone(t)?;
            Ok(Tone::common_mode(f, a, &result.network.beams, full))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let duration = duration_s.unwrap_or(settings.required_samples(fs_hz) as f64 / fs_hz);
    let sampling = Sampling {
        sample_rate: fs_hz,
        duration,
        seed: common.seed,
    };
    let traces = sample_scenario(&result, &sampling, &tones)?;

    for named in &result.reports {
        let combination = traces.combine(&named.plan)?;
        let spectrum = estimate_spectrum(&combination, fs_hz, &settings)?;
        spectrum.write_csv(output(Some(&dir.join(format!("{}.csv", named.name))))?)?;
        let reference = snl_reference_trace(traces.shot_noise_power(&named.plan)?, &sampling)?;
        let reference = estimate_spectrum(&reference, fs_hz, &settings)?;
        reference.write_csv(output(Some(&dir.join(format!("{}_snl.csv", named.name))))?)?;
    }
    let measured = measure_scenario(&result, &traces, &settings, &band)?;
    let mut w = csv::Writer::from_writer(output(Some(&dir.join("summary.csv")))?);
    w.write_record([
        "plan_name",
        "analytic_db",
        "measured_db",
        "combination_power",
        "reference_power",
        "averages",
    ])?;
    for m in &measured {
        w.write_record([
            m.name.clone(),
            fmt_num(m.analytic_db),
            fmt_num(m.measurement.db),
            fmt_num(m.measurement.combination_power),
            fmt_num(m.measurement.reference_power),
            settings.averages.to_string(),
        ])?;
        eprintln!(
            "{:>12}  analytic {:>8.3} dB  measured {:>8.3} dB",
            m.name, m.analytic_db, m.measurement.db
        );
    }
    w.flush()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config, common } => cmd_run(config, common),
        Command::SweepPower {
            config,
            seeds,
            grid,
            points,
            common,
        } => cmd_sweep(config, seeds.as_deref(), grid, points.as_deref(), common),
        Command::FitLosses {
            config,
            measured,
            direct_minima,
            free,
            common,
        } => cmd_fit(config, measured.as_deref(), *direct_minima, free, common),
        Command::OracleCheck {
            gains,
            seed_intensity,
            cutoffs,
            common,
        } => cmd_oracle(gains, *seed_intensity, cutoffs.as_deref(), common),
        Command::Spectra {
            config,
            rbw_hz,
            avg,
            fs_hz,
            duration_s,
            band_center_hz,
            band_half_width_hz,
            tone,
            common,
        } => cmd_spectra(
            config,
            SpectrumSettings {
                rbw_hz: *rbw_hz,
                averages: *avg,
            },
            *fs_hz,
            *duration_s,
            Band {
                center_hz: *band_center_hz,
                half_width_hz: *band_half_width_hz,
            },
            tone,
            common,
        ),
    }
}

/// Warnings and errors from the library go to stderr.
struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!(
                "{}: {}",
                record.level().as_str().to_lowercase(),
                record.args()
            );
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
