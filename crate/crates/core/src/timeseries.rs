//! Spectrum-analyzer emulation.
//!
//! Photocurrent fluctuations are synthesized as a white Gaussian vector
//! process whose one-sided power spectral density equals the engine's
//! photocurrent covariance (per-sample covariance `C · fs / 2`). Spectra are
//! Welch estimates with a Hann window whose segment length sets the
//! resolution bandwidth; the number of averaged segments plays the role of the
//! video filter.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::bogoliubov::{BogoliubovTransform, MeanField, NetworkError, QuadratureCovariance};
use crate::cascade::ScenarioResult;
use crate::photodetection::{photocurrent_covariance, to_db, DetectionError, DetectionPlan};

/// Samples per independently seeded RNG stream.
const CHUNK: usize = 1 << 16;
/// Stream offset for the shot-noise reference so it never shares draws with
/// the traces it calibrates.
const REFERENCE_STREAM: u64 = 1 << 40;
/// Equivalent noise bandwidth of the Hann window in bins.
pub const HANN_ENBW_BINS: f64 = 1.5;

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error(
        "sample rate and duration must be positive and finite (got {sample_rate} Hz, {duration} s)"
    )]
    InvalidSampling { sample_rate: f64, duration: f64 },
    #[error("trace holds {samples} samples, fewer than two")]
    EmptyTrace { samples: usize },
    #[error("photocurrent covariance is not positive semidefinite")]
    Factorization,
    #[error("tone {index}: {reason}")]
    InvalidTone { index: usize, reason: String },
    #[error("invalid spectrum settings: {0}")]
    InvalidSettings(String),
    #[error(
        "trace too short: {averages} segments of {segment} samples need {needed}, have {available}"
    )]
    TraceTooShort {
        averages: usize,
        segment: usize,
        needed: usize,
        available: usize,
    },
    #[error("mode {0} is not among the sampled channels")]
    MissingChannel(usize),
    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("reference band power is zero")]
    ZeroReference,
    #[error("trace file: {0}")]
    Format(String),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub sample_rate: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Sampling {
    pub fn samples(&self) -> usize {
        (self.sample_rate * self.duration).round() as usize
    }

    fn validate(&self) -> Result<(), TimeseriesError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.sample_rate) && ok(self.duration)) {
            return Err(TimeseriesError::InvalidSampling {
                sample_rate: self.sample_rate,
                duration: self.duration,
            });
        }
        let samples = self.samples();
        if samples < 2 {
            return Err(TimeseriesError::EmptyTrace { samples });
        }
        Ok(())
    }
}

/// Deterministic classical tone `amplitude · coupling[ch] · sin(2π f t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tone {
    pub frequency_hz: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub coupling: Vec<f64>,
}

impl Tone {
    /// Couples the tone so that it cancels in `Σ c_k i_k`: channels with
    /// positive coefficients share weight 1 equally, negative ones likewise.
    /// Channels absent from the plan get no tone.
    pub fn common_mode(
        frequency_hz: f64,
        amplitude: f64,
        channels: &[usize],
        plan: &DetectionPlan,
    ) -> Self {
        let positives = plan.coefficients().iter().filter(|c| **c > 0.0).count() as f64;
        let negatives = plan.coefficients().iter().filter(|c| **c < 0.0).count() as f64;
        let coupling = channels
            .iter()
            .map(|m| match plan.terms().find(|(pm, _)| pm == m) {
                Some((_, c)) if c > 0.0 => 1.0 / (c * positives),
                Some((_, c)) if c < 0.0 => -1.0 / (c * negatives),
                _ => 0.0,
            })
            .collect();
        Self {
            frequency_hz,
            amplitude,
            phase: 0.0,
            coupling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub sample_rate: f64,
    pub duration: f64,
    pub rng_seed: u64,
    pub labels: Vec<String>,
    /// Mode index of each channel in the originating network.
    pub modes: Vec<usize>,
    /// Mean detected power of each channel, for shot-noise references.
    pub mean_powers: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
}

fn cholesky(cov: &[Vec<f64>]) -> Result<DMatrix<f64>, TimeseriesError> {
    let k = cov.len();
    let m = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let scale = (0..k).map(|i| m[(i, i)].abs()).fold(1.0, f64::max);
    log::warn!(
        "photocurrent covariance is singular; adding {:e} to the diagonal",
        1e-12 * scale
    );
    let shifted = m + DMatrix::identity(k, k) * (1e-12 * scale);
    shifted
        .cholesky()
        .map(|c| c.l())
        .ok_or(TimeseriesError::Factorization)
}

fn synthesize(
    cov: &[Vec<f64>],
    sampling: &Sampling,
    stream_base: u64,
    tones: &[Tone],
) -> Result<Vec<Vec<f64>>, TimeseriesError> {
    sampling.validate()?;
    let k = cov.len();
    for (index, tone) in tones.iter().enumerate() {
        if tone.coupling.len() != k {
            return Err(TimeseriesError::InvalidTone {
                index,
                reason: format!("{} couplings for {k} channels", tone.coupling.len()),
            });
        }
        if !(tone.frequency_hz.is_finite()
            && tone.frequency_hz >= 0.0
            && tone.frequency_hz < sampling.sample_rate / 2.0)
        {
            return Err(TimeseriesError::InvalidTone {
                index,
                reason: format!("frequency {} Hz outside [0, fs/2)", tone.frequency_hz),
            });
        }
    }
    let l = cholesky(cov)? * (sampling.sample_rate / 2.0).sqrt();
    let n = sampling.samples();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
            rng.set_stream(stream_base + chunk as u64);
            let len = CHUNK.min(n - chunk * CHUNK);
            let mut out = vec![0.0; len * k];
            let mut z = vec![0.0; k];
            for s in 0..len {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                for i in 0..k {
                    out[s * k + i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
                }
            }
            out
        })
        .collect();
    let mut channels = vec![Vec::with_capacity(n); k];
    for chunk in &chunks {
        for sample in chunk.chunks_exact(k) {
            for (ch, v) in channels.iter_mut().zip(sample) {
                ch.push(*v);
            }
        }
    }
    for tone in tones {
        let w = 2.0 * std::f64::consts::PI * tone.frequency_hz / sampling.sample_rate;
        for (ch, coupling) in channels.iter_mut().zip(&tone.coupling) {
            if *coupling == 0.0 {
                continue;
            }
            let a = tone.amplitude * coupling;
            for (s, v) in ch.iter_mut().enumerate() {
                *v += a * (w * s as f64 + tone.phase).sin();
            }
        }
    }
    Ok(channels)
}

/// Samples photocurrent fluctuations of `modes` from the Gaussian state.
pub fn sample_photocurrents(
    gamma: &QuadratureCovariance,
    alpha: &MeanField,
    modes: &[usize],
    labels: &[String],
    sampling: &Sampling,
    tones: &[Tone],
) -> Result<TraceSet, TimeseriesError> {
    if labels.len() != modes.len() {
        return Err(TimeseriesError::ChannelMismatch {
            expected: modes.len(),
            found: labels.len(),
        });
    }
    if let Some(&m) = modes
        .iter()
        .find(|&&m| m >= alpha.len() || m >= gamma.modes())
    {
        return Err(TimeseriesError::MissingChannel(m));
    }
    let cov = photocurrent_covariance(gamma, alpha, modes);
    let channels = synthesize(&cov, sampling, 0, tones)?;
    Ok(TraceSet {
        sample_rate: sampling.sample_rate,
        duration: sampling.duration,
        rng_seed: sampling.seed,
        labels: labels.to_vec(),
        modes: modes.to_vec(),
        mean_powers: modes.iter().map(|&m| alpha.intensity(m)).collect(),
        channels,
    })
}

/// Samples every detected beam of a scenario.
pub fn sample_scenario(
    result: &ScenarioResult,
    sampling: &Sampling,
    tones: &[Tone],
) -> Result<TraceSet, TimeseriesError> {
    let modes = &result.network.beams;
    let labels: Vec<String> = modes
        .iter()
        .map(|&m| result.network.registry.labels()[m].clone())
        .collect();
    sample_photocurrents(
        &result.covariance,
        &result.mean,
        modes,
        &labels,
        sampling,
        tones,
    )
}

/// Difference photocurrent of a coherent beam of `total_power` split 50/50
/// onto two detectors, drawn from a stream disjoint from the traces'.
pub fn snl_reference_trace(
    total_power: f64,
    sampling: &Sampling,
) -> Result<Vec<f64>, TimeseriesError> {
    if !(total_power.is_finite() && total_power > 0.0) {
        return Err(DetectionError::NonPositivePower(total_power).into());
    }
    let split = BogoliubovTransform::beamsplitter(2, 0, 1, 0.5)?;
    let alpha = split.propagate_mean(&MeanField::seeded(2, 0, total_power))?;
    let gamma = split.output_covariance(&QuadratureCovariance::vacuum(2))?;
    let cov = photocurrent_covariance(&gamma, &alpha, &[0, 1]);
    let halves = synthesize(&cov, sampling, REFERENCE_STREAM, &[])?;
    Ok(halves[0]
        .iter()
        .zip(&halves[1])
        .map(|(a, b)| a - b)
        .collect())
}

impl TraceSet {
    pub fn samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn sampling(&self) -> Sampling {
        Sampling {
            sample_rate: self.sample_rate,
            duration: self.duration,
            seed: self.rng_seed,
        }
    }

    fn channel_of(&self, mode: usize) -> Result<usize, TimeseriesError> {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .ok_or(TimeseriesError::MissingChannel(mode))
    }

    /// Subtractor output `Σ c_k i_k`, accumulated in plan order.
    pub fn combine(&self, plan: &DetectionPlan) -> Result<Vec<f64>, TimeseriesError> {
        let terms: Vec<(usize, f64)> = plan
            .terms()
            .map(|(m, c)| Ok((self.channel_of(m)?, c)))
            .collect::<Result<_, TimeseriesError>>()?;
        let mut out = vec![0.0; self.samples()];
        for (ch, c) in terms {
            for (o, v) in out.iter_mut().zip(&self.channels[ch]) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// `Σ c_k² I_k`, the shot-noise power of the combination.
    pub fn shot_noise_power(&self, plan: &DetectionPlan) -> Result<f64, TimeseriesError> {
        plan.terms()
            .map(|(m, c)| Ok(c * c * self.mean_powers[self.channel_of(m)?]))
            .sum()
    }

    /// CSV with `# key=value` header lines, a label row, then one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TimeseriesError> {
        let join = |v: &[String]| v.join(";");
        writeln!(out, "# sample_rate={}", self.sample_rate)?;
        writeln!(out, "# duration={}", self.duration)?;
        writeln!(out, "# seed={}", self.rng_seed)?;
        writeln!(
            out,
            "# modes={}",
            join(&self.modes.iter().map(|m| m.to_string()).collect::<Vec<_>>())
        )?;
        writeln!(
            out,
            "# mean_powers={}",
            join(
                &self
                    .mean_powers
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
            )
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.labels)?;
        let mut row = Vec::with_capacity(self.channels.len());
        for s in 0..self.samples() {
            row.clear();
            row.extend(self.channels.iter().map(|ch| ch[s].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self, TimeseriesError> {
        let mut header = std::collections::BTreeMap::new();
        let mut line = String::new();
        loop {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(TimeseriesError::Format("missing label row".into()));
            }
            match line.trim().strip_prefix('#') {
                Some(kv) => {
                    let (k, v) = kv.trim().split_once('=').ok_or_else(|| {
                        TimeseriesError::Format(format!("bad header line {:?}", line.trim()))
                    })?;
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => break,
            }
        }
        let get = |key: &str| {
            header
                .get(key)
                .ok_or_else(|| TimeseriesError::Format(format!("missing {key} header")))
        };
        let parse_err = |key: &str| TimeseriesError::Format(format!("bad {key} header"));
        let sample_rate: f64 = get("sample_rate")?
            .parse()
            .map_err(|_| parse_err("sample_rate"))?;
        let duration: f64 = get("duration")?
            .parse()
            .map_err(|_| parse_err("duration"))?;
        let rng_seed: u64 = get("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let list = |key: &str| -> Result<Vec<String>, TimeseriesError> {
            let v = get(key)?;
            Ok(if v.is_empty() {
                Vec::new()
            } else {
                v.split(';').map(str::to_string).collect()
            })
        };
        let modes = list("modes")?
            .iter()
            .map(|s| s.parse().map_err(|_| parse_err("modes")))
            .collect::<Result<Vec<usize>, _>>()?;
        let mean_powers = list("mean_powers")?
            .iter()
            .map(|s| s.parse().map_err(|_| parse_err("mean_powers")))
            .collect::<Result<Vec<f64>, _>>()?;

        let labels: Vec<String> = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(line.as_bytes())
            .records()
            .next()
            .transpose()?
            .map(|r| r.iter().map(str::to_string).collect())
            .unwrap_or_default();
        for found in [modes.len(), mean_powers.len()] {
            if found != labels.len() {
                return Err(TimeseriesError::ChannelMismatch {
                    expected: labels.len(),
                    found,
                });
            }
        }
        let mut channels = vec![Vec::new(); labels.len()];
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(input);
        for record in reader.records() {
            let record = record?;
            if record.len() != labels.len() {
                return Err(TimeseriesError::ChannelMismatch {
                    expected: labels.len(),
                    found: record.len(),
                });
            }
            for (ch, field) in channels.iter_mut().zip(record.iter()) {
                ch.push(
                    field
                        .parse()
                        .map_err(|_| TimeseriesError::Format(format!("bad sample {field:?}")))?,
                );
            }
        }
        Ok(Self {
            sample_rate,
            duration,
            rng_seed,
            labels,
            modes,
            mean_powers,
            channels,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSettings {
    pub rbw_hz: f64,
    pub averages: usize,
}

impl SpectrumSettings {
    /// Hann segment length giving the requested resolution bandwidth.
    pub fn segment_length(&self, sample_rate: f64) -> usize {
        (HANN_ENBW_BINS * sample_rate / self.rbw_hz).round() as usize
    }

    /// Samples needed for `averages` half-overlapping segments.
    pub fn required_samples(&self, sample_rate: f64) -> usize {
        let seg = self.segment_length(sample_rate);
        seg + (self.averages.saturating_sub(1)) * (seg / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub frequencies: Vec<f64>,
    /// One-sided power spectral density per bin.
    pub power: Vec<f64>,
    pub resolution_bandwidth: f64,
    pub bin_spacing: f64,
    pub averages: usize,
}

/// Welch estimate of the one-sided density from the first `averages`
/// half-overlapping Hann segments.
pub fn estimate_spectrum(
    trace: &[f64],
    sample_rate: f64,
    settings: &SpectrumSettings,
) -> Result<SpectrumEstimate, TimeseriesError> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(TimeseriesError::InvalidSettings(format!(
            "sample rate {sample_rate}"
        )));
    }
    if !(settings.rbw_hz.is_finite() && settings.rbw_hz > 0.0) || settings.averages == 0 {
        return Err(TimeseriesError::InvalidSettings(format!(
            "rbw {} Hz with {} averages",
            settings.rbw_hz, settings.averages
        )));
    }
    let seg = settings.segment_length(sample_rate);
    if seg < 4 {
        return Err(TimeseriesError::InvalidSettings(format!(
            "rbw {} Hz leaves only {seg} samples per segment",
            settings.rbw_hz
        )));
    }
    let needed = settings.required_samples(sample_rate);
    if trace.len() < needed {
        return Err(TimeseriesError::TraceTooShort {
            averages: settings.averages,
            segment: seg,
            needed,
            available: trace.len(),
        });
    }
    let hop = seg / 2;
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let bins = seg / 2 + 1;

    let periodograms: Vec<Vec<f64>> = (0..settings.averages)
        .into_par_iter()
        .map(|s| {
            let start = s * hop;
            let mut buf: Vec<Complex<f64>> = trace[start..start + seg]
                .iter()
                .zip(&window)
                .map(|(x, w)| Complex::new(x * w, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..bins].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();
    let mut power = vec![0.0; bins];
    for p in &periodograms {
        for (acc, v) in power.iter_mut().zip(p) {
            *acc += v;
        }
    }
    let norm = settings.averages as f64 * sample_rate * window_power;
    for (k, p) in power.iter_mut().enumerate() {
        let one_sided = if k == 0 || (seg.is_multiple_of(2) && k == bins - 1) {
            1.0
        } else {
            2.0
        };
        *p *= one_sided / norm;
    }
    let bin_spacing = sample_rate / seg as f64;
    Ok(SpectrumEstimate {
        frequencies: (0..bins).map(|k| k as f64 * bin_spacing).collect(),
        power,
        resolution_bandwidth: HANN_ENBW_BINS * bin_spacing,
        bin_spacing,
        averages: settings.averages,
    })
}

impl SpectrumEstimate {
    /// Mean density over bins with `|f - center| <= half_width`.
    pub fn band_power(&self, center_hz: f64, half_width_hz: f64) -> Result<f64, TimeseriesError> {
        let (sum, count) = self
            .frequencies
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| (**f - center_hz).abs() <= half_width_hz)
            .fold((0.0, 0usize), |(s, c), (_, p)| (s + p, c + 1));
        if count == 0 {
            return Err(TimeseriesError::InvalidSettings(format!(
                "no bins within {half_width_hz} Hz of {center_hz} Hz"
            )));
        }
        Ok(sum / count as f64)
    }

    /// Density in the bin nearest `frequency_hz`.
    pub fn power_at(&self, frequency_hz: f64) -> f64 {
        let k = (frequency_hz / self.bin_spacing).round() as usize;
        self.power[k.min(self.power.len() - 1)]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TimeseriesError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frequency_hz", "power"])?;
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            w.write_record([f.to_string(), format!("{p:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Analysis band for ratio measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub center_hz: f64,
    pub half_width_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub combination_power: f64,
    pub reference_power: f64,
    pub ratio: f64,
    pub db: f64,
}

/// Band power of the plan's combination over the band power of a shot-noise
/// reference trace of equal total optical power.
pub fn measure_ratio(
    traces: &TraceSet,
    plan: &DetectionPlan,
    snl_reference: &[f64],
    spectrum: &SpectrumSettings,
    band: &Band,
) -> Result<Measurement, TimeseriesError> {
    let combination = traces.combine(plan)?;
    let signal = estimate_spectrum(&combination, traces.sample_rate, spectrum)?;
    let reference = estimate_spectrum(snl_reference, traces.sample_rate, spectrum)?;
    let combination_power = signal.band_power(band.center_hz, band.half_width_hz)?;
    let reference_power = reference.band_power(band.center_hz, band.half_width_hz)?;
    if reference_power.is_nan() || reference_power <= 0.0 {
        return Err(TimeseriesError::ZeroReference);
    }
    let ratio = combination_power / reference_power;
    Ok(Measurement {
        combination_power,
        reference_power,
        ratio,
        db: to_db(ratio)?,
    })
}

/// Measured and analytic squeezing of one named plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMeasurement {
    pub name: String,
    pub analytic_db: f64,
    pub measurement: Measurement,
}

/// Measures every reported plan of a scenario against its own shot-noise
/// reference trace.
pub fn measure_scenario(
    result: &ScenarioResult,
    traces: &TraceSet,
    spectrum: &SpectrumSettings,
    band: &Band,
) -> Result<Vec<PlanMeasurement>, TimeseriesError> {
    result
        .reports
        .iter()
        .map(|named| {
            let plan = &named.plan;
            let reference =
                snl_reference_trace(traces.shot_noise_power(plan)?, &traces.sampling())?;
            Ok(PlanMeasurement {
                name: named.name.clone(),
                analytic_db: named.report.db,
                measurement: measure_ratio(traces, plan, &reference, spectrum, band)?,
            })
        })
        .collect()
}
