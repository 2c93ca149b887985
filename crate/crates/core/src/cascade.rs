//! Cascaded amplifier scenarios.
//!
//! A chain of `n` phase-insensitive amplifiers is seeded by one coherent probe.
//! Stage `k` amplifies the probe and creates conjugate `Ck`; the detected beams
//! are `C1 … Cn` and the final probe, read out as photocurrents `i1 … i(n+1)`
//! in that order.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::bogoliubov::{
    BogoliubovTransform, MeanField, ModeRegistry, NetworkError, QuadratureCovariance,
};
use crate::photodetection::{
    apply_detector_efficiency, photocurrent_noise, snl_calibration_sim, DetectionError,
    DetectionPlan, NoiseReport,
};

pub const PROBE: &str = "Pr";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{location}invalid `{field}`: {reason}")]
    InvalidField {
        field: String,
        reason: String,
        location: Location,
    },
    #[error("{0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("plan {plan:?}: {source}")]
    Plan {
        plan: String,
        source: DetectionError,
    },
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl ScenarioError {
    fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::InvalidField {
            field: field.into(),
            reason: reason.into(),
            location: Location(None),
        }
    }
}

/// Optional `line N: ` prefix for errors raised while reading a config file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Location(pub Option<usize>);

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, "line {line}: "),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub gain: f64,
    /// Probe transmission between the previous stage (or the source) and this one.
    #[serde(default = "unity")]
    pub pre_stage_transmission: f64,
}

fn unity() -> f64 {
    1.0
}

impl Stage {
    pub fn new(gain: f64) -> Self {
        Self {
            gain,
            pre_stage_transmission: 1.0,
        }
    }

    pub fn with_loss(gain: f64, pre_stage_transmission: f64) -> Self {
        Self {
            gain,
            pre_stage_transmission,
        }
    }
}

/// Classical amplitude noise on an input mode, in shot-noise units.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcessNoise {
    pub mode: String,
    pub excess_variance: f64,
}

/// Named photocurrent combination over mode labels.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub name: String,
    pub detected_modes: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl PlanSpec {
    pub fn new(name: impl Into<String>, terms: &[(&str, f64)]) -> Self {
        Self {
            name: name.into(),
            detected_modes: terms.iter().map(|(m, _)| m.to_string()).collect(),
            coefficients: terms.iter().map(|(_, c)| *c).collect(),
        }
    }
}

/// Declarative description of a cascade and what is measured on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSpec {
    pub seed_intensity: f64,
    pub stages: Vec<Stage>,
    /// One per detected beam, ordered `C1 … Cn, Pr`.
    pub path_transmissions: Vec<f64>,
    pub detector_efficiency: f64,
    pub plans: Vec<PlanSpec>,
    pub classical_excess: Option<ExcessNoise>,
}

/// Label of the beam read out as photocurrent `i(k+1)` in an `n`-stage chain.
pub fn beam_label(n: usize, k: usize) -> String {
    if k < n {
        format!("C{}", k + 1)
    } else {
        PROBE.to_string()
    }
}

/// Full multi-beam difference `i(n+1) - i(n) - … - i1`.
pub fn full_difference(name: &str, n: usize) -> PlanSpec {
    let mut terms = vec![(PROBE.to_string(), 1.0)];
    terms.extend((1..=n).rev().map(|k| (format!("C{k}"), -1.0)));
    PlanSpec {
        name: name.into(),
        detected_modes: terms.iter().map(|t| t.0.clone()).collect(),
        coefficients: terms.iter().map(|t| t.1).collect(),
    }
}

/// Every single photocurrent, every pairwise difference and the full difference.
///
/// Two-stage chains use the trace letters `A`–`G`: `i1, i2, i3, i3-i2, i3-i1,
/// i2-i1, i3-i2-i1`.
pub fn default_plans(n: usize) -> Vec<PlanSpec> {
    if n == 2 {
        return vec![
            PlanSpec::new("A", &[("C1", 1.0)]),
            PlanSpec::new("B", &[("C2", 1.0)]),
            PlanSpec::new("C", &[(PROBE, 1.0)]),
            PlanSpec::new("D", &[(PROBE, 1.0), ("C2", -1.0)]),
            PlanSpec::new("E", &[(PROBE, 1.0), ("C1", -1.0)]),
            PlanSpec::new("F", &[("C2", 1.0), ("C1", -1.0)]),
            full_difference("G", 2),
        ];
    }
    let beams = n + 1;
    let mut plans: Vec<PlanSpec> = (0..beams)
        .map(|k| PlanSpec::new(format!("i{}", k + 1), &[(&beam_label(n, k), 1.0)]))
        .collect();
    for j in (0..beams).rev() {
        for k in (0..j).rev() {
            plans.push(PlanSpec::new(
                format!("i{}-i{}", j + 1, k + 1),
                &[(&beam_label(n, j), 1.0), (&beam_label(n, k), -1.0)],
            ));
        }
    }
    if n > 1 {
        plans.push(full_difference("full", n));
    }
    plans
}

impl CascadeSpec {
    /// Lossless chain with the default plan set.
    pub fn lossless(seed_intensity: f64, gains: &[f64]) -> Self {
        let n = gains.len();
        Self {
            seed_intensity,
            stages: gains.iter().map(|&g| Stage::new(g)).collect(),
            path_transmissions: vec![1.0; n + 1],
            detector_efficiency: 1.0,
            plans: default_plans(n),
            classical_excess: None,
        }
    }

    /// The two-cell experiment: gains 2.9 and 2.1, 20 units of seed, 7% probe
    /// loss between the cells and 96% detector efficiency.
    pub fn two_cell_experiment() -> Self {
        let mut spec = Self::lossless(20.0, &[2.9, 2.1]);
        spec.stages[1].pre_stage_transmission = 0.93;
        spec.detector_efficiency = 0.96;
        spec
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.gain).collect()
    }

    pub fn with_plans(mut self, plans: Vec<PlanSpec>) -> Self {
        self.plans = plans;
        self
    }

    pub fn with_seed(mut self, seed_intensity: f64) -> Self {
        self.seed_intensity = seed_intensity;
        self
    }

    /// Twin-beam scenario of stage `k` (0-based) run on its own: the same gain,
    /// a coherent seed, and the path transmissions of that stage's conjugate and
    /// of the probe.
    pub fn single_stage(&self, k: usize) -> Self {
        let n = self.stage_count();
        Self {
            seed_intensity: self.seed_intensity,
            stages: vec![Stage::new(self.stages[k].gain)],
            path_transmissions: vec![self.path_transmissions[k], self.path_transmissions[n]],
            detector_efficiency: self.detector_efficiency,
            plans: vec![full_difference("twin", 1)],
            // only the seed mode keeps its label in the single-stage network
            classical_excess: self.classical_excess.clone().filter(|e| e.mode == PROBE),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.stages.len();
        if n == 0 {
            return Err(ScenarioError::field(
                "stages",
                "at least one stage is required",
            ));
        }
        if !(self.seed_intensity.is_finite() && self.seed_intensity >= 0.0) {
            return Err(ScenarioError::field(
                "seed_intensity",
                format!("must be finite and >= 0, got {}", self.seed_intensity),
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.gain.is_finite() && s.gain >= 1.0) {
                return Err(ScenarioError::field(
                    format!("stages[{i}].gain"),
                    format!("must be >= 1, got {}", s.gain),
                ));
            }
            check_transmission(
                &format!("stages[{i}].pre_stage_transmission"),
                s.pre_stage_transmission,
            )?;
        }
        if self.path_transmissions.len() != n + 1 {
            return Err(ScenarioError::field(
                "path_transmissions",
                format!(
                    "expected {} entries (C1..C{n}, Pr), got {}",
                    n + 1,
                    self.path_transmissions.len()
                ),
            ));
        }
        for (i, &eta) in self.path_transmissions.iter().enumerate() {
            check_transmission(&format!("path_transmissions[{i}]"), eta)?;
        }
        check_transmission("detector_efficiency", self.detector_efficiency)?;
        let labels = chain_labels(n);
        for (i, plan) in self.plans.iter().enumerate() {
            if self.plans[..i].iter().any(|p| p.name == plan.name) {
                return Err(ScenarioError::field(
                    format!("plans[{i}].name"),
                    format!("duplicate plan name {:?}", plan.name),
                ));
            }
            if plan.detected_modes.len() != plan.coefficients.len() {
                return Err(ScenarioError::field(
                    format!("plans[{i}].coefficients"),
                    "must have one entry per detected mode",
                ));
            }
            for m in &plan.detected_modes {
                if !labels.beams.contains(m) {
                    return Err(ScenarioError::field(
                        format!("plans[{i}].detected_modes"),
                        format!("unknown beam {m:?}; expected one of {:?}", labels.beams),
                    ));
                }
            }
        }
        if let Some(excess) = &self.classical_excess {
            if !labels.beams.contains(&excess.mode) {
                return Err(ScenarioError::field(
                    "classical_excess.mode",
                    format!("unknown mode {:?}", excess.mode),
                ));
            }
            if !(excess.excess_variance.is_finite() && excess.excess_variance >= 0.0) {
                return Err(ScenarioError::field(
                    "classical_excess.excess_variance",
                    format!("must be finite and >= 0, got {}", excess.excess_variance),
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        config::parse(text)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

fn check_transmission(field: &str, eta: f64) -> Result<(), ScenarioError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(ScenarioError::field(
            field,
            format!("must lie in [0, 1], got {eta}"),
        ));
    }
    Ok(())
}

struct ChainLabels {
    beams: Vec<String>,
    all: Vec<String>,
}

fn ancilla_count(n: usize) -> usize {
    // one per inter-stage loss, one per path loss, one per detector
    n + 2 * (n + 1)
}

fn chain_labels(n: usize) -> ChainLabels {
    let mut all = vec![PROBE.to_string()];
    all.extend((1..=n).map(|k| format!("C{k}")));
    let beams = (0..=n).map(|k| beam_label(n, k)).collect();
    all.extend((1..=ancilla_count(n)).map(|k| format!("vac_{k}")));
    ChainLabels { beams, all }
}

/// Concrete network of a [`CascadeSpec`].
#[derive(Debug, Clone)]
pub struct Network {
    pub registry: ModeRegistry,
    pub transform: BogoliubovTransform,
    /// Mode index of each detected beam, ordered `C1 … Cn, Pr`.
    pub beams: Vec<usize>,
}

impl Network {
    pub fn probe(&self) -> usize {
        0
    }
}

/// Builds the full network: per stage a probe loss then a PIA, then path
/// losses and detector efficiency on every output beam.
pub fn build_network(spec: &CascadeSpec) -> Result<Network, ScenarioError> {
    spec.validate()?;
    let n = spec.stage_count();
    let labels = chain_labels(n);
    let registry = ModeRegistry::new(labels.all)?;
    let m = registry.len();
    let probe = 0;
    let mut ancillas = (n + 1)..m;
    let next =
        |ancillas: &mut Range<usize>| ancillas.next().expect("ancillas are allocated up front");

    let mut transform = BogoliubovTransform::identity(m)?;
    for (k, stage) in spec.stages.iter().enumerate() {
        transform.push_loss(probe, next(&mut ancillas), stage.pre_stage_transmission)?;
        transform.push_pia(probe, k + 1, stage.gain)?;
    }
    let beams: Vec<usize> = (1..=n).chain(std::iter::once(probe)).collect();
    for (&beam, &eta) in beams.iter().zip(&spec.path_transmissions) {
        transform.push_loss(beam, next(&mut ancillas), eta)?;
    }
    let detectors = DetectionPlan::new(
        beams.clone(),
        vec![1.0; n + 1],
        vec![spec.detector_efficiency; n + 1],
    )?;
    let remaining: Vec<usize> = ancillas.collect();
    let transform = apply_detector_efficiency(&transform, &detectors, &remaining)?;
    Ok(Network {
        registry,
        transform,
        beams,
    })
}

#[derive(Debug, Clone)]
pub struct NamedReport {
    pub name: String,
    pub plan: DetectionPlan,
    pub report: NoiseReport,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub network: Network,
    pub mean: MeanField,
    pub covariance: QuadratureCovariance,
    pub reports: Vec<NamedReport>,
    /// Plans whose every beam is dark, so no shot-noise reference exists.
    pub skipped: Vec<String>,
}

impl ScenarioResult {
    pub fn named(&self, name: &str) -> Option<&NamedReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn report(&self, name: &str) -> Option<&NoiseReport> {
        self.reports
            .iter()
            .find(|r| r.name == name)
            .map(|r| &r.report)
    }

    /// Calibrated shot-noise reference for a plan (the `H` trace).
    pub fn calibrated_snl(&self, name: &str) -> Result<f64, DetectionError> {
        let report = self.report(name).ok_or(DetectionError::NoShotNoise)?;
        snl_calibration_sim(report.snl)
    }

    /// Intensity of each detected beam, ordered `C1 … Cn, Pr`.
    pub fn beam_intensities(&self) -> Vec<f64> {
        self.network
            .beams
            .iter()
            .map(|&b| self.mean.intensity(b))
            .collect()
    }

    /// CSV with columns `plan_name, variance, snl, ratio, db`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["plan_name", "variance", "snl", "ratio", "db"])?;
        for r in &self.reports {
            w.write_record([
                r.name.clone(),
                fmt_num(r.report.variance),
                fmt_num(r.report.snl),
                fmt_num(r.report.ratio),
                fmt_num(r.report.db),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x:.12e}")
}

/// Resolves a plan's mode labels against the network.
pub fn resolve_plan(network: &Network, plan: &PlanSpec) -> Result<DetectionPlan, ScenarioError> {
    let modes = plan
        .detected_modes
        .iter()
        .map(|label| {
            network.registry.index_of(label).ok_or_else(|| {
                ScenarioError::field(
                    format!("plans.{}", plan.name),
                    format!("unknown mode {label:?}"),
                )
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    DetectionPlan::combination(modes, plan.coefficients.clone()).map_err(|source| {
        ScenarioError::Plan {
            plan: plan.name.clone(),
            source,
        }
    })
}

pub fn run_scenario(spec: &CascadeSpec) -> Result<ScenarioResult, ScenarioError> {
    let network = build_network(spec)?;
    let m = network.registry.len();
    let mut gamma_in = QuadratureCovariance::vacuum(m);
    if let Some(excess) = &spec.classical_excess {
        let mode = network.registry.index_of(&excess.mode).expect("validated");
        gamma_in = gamma_in.with_amplitude_excess(mode, excess.excess_variance)?;
    }
    let mean = network.transform.propagate_mean(&MeanField::seeded(
        m,
        network.probe(),
        spec.seed_intensity,
    ))?;
    let covariance = network.transform.output_covariance(&gamma_in)?;
    let mut reports = Vec::with_capacity(spec.plans.len());
    let mut skipped = Vec::new();
    for plan in &spec.plans {
        let detection = resolve_plan(&network, plan)?;
        match photocurrent_noise(&covariance, &mean, &detection) {
            Ok(report) => reports.push(NamedReport {
                name: plan.name.clone(),
                plan: detection,
                report,
            }),
            Err(DetectionError::NoShotNoise) => skipped.push(plan.name.clone()),
            Err(source) => {
                return Err(ScenarioError::Plan {
                    plan: plan.name.clone(),
                    source,
                })
            }
        }
    }
    Ok(ScenarioResult {
        network,
        mean,
        covariance,
        reports,
        skipped,
    })
}

fn check_gain(gain: f64) -> Result<(), ScenarioError> {
    if !(gain.is_finite() && gain >= 1.0) {
        return Err(ScenarioError::field(
            "gain",
            format!("must be >= 1, got {gain}"),
        ));
    }
    Ok(())
}

/// Multi-beam difference noise of a lossless chain, `1 / (2 ΠG - 1)`.
pub fn analytic_chain_ratio(gains: &[f64]) -> Result<f64, ScenarioError> {
    if gains.is_empty() {
        return Err(ScenarioError::field(
            "gains",
            "at least one gain is required",
        ));
    }
    gains.iter().try_for_each(|&g| check_gain(g))?;
    let total: f64 = gains.iter().product();
    Ok(1.0 / (2.0 * total - 1.0))
}

/// Noise of `i3 - i2` (second-stage twin pair) in a lossless two-stage chain,
/// `(2G1 - 1) / (2G2 - 1)`.
pub fn pairwise_ratio(g1: f64, g2: f64) -> Result<f64, ScenarioError> {
    check_gain(g1)?;
    check_gain(g2)?;
    Ok((2.0 * g1 - 1.0) / (2.0 * g2 - 1.0))
}

mod config {
    use super::*;
    use toml::Spanned;

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawStage {
        gain: Spanned<f64>,
        #[serde(default = "spanned_unity")]
        pre_stage_transmission: Spanned<f64>,
    }

    fn spanned_unity() -> Spanned<f64> {
        Spanned::new(0..0, 1.0)
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawSpec {
        seed_intensity: Spanned<f64>,
        stages: Vec<Spanned<RawStage>>,
        path_transmissions: Option<Spanned<Vec<f64>>>,
        #[serde(default = "spanned_unity")]
        detector_efficiency: Spanned<f64>,
        plans: Option<Vec<Spanned<PlanSpec>>>,
        classical_excess: Option<Spanned<ExcessNoise>>,
    }

    fn line_of(text: &str, span: Range<usize>) -> Option<usize> {
        if span.is_empty() && span.start == 0 {
            return None;
        }
        Some(text[..span.start.min(text.len())].matches('\n').count() + 1)
    }

    pub(super) fn parse(text: &str) -> Result<CascadeSpec, ScenarioError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let n = raw.stages.len();

        // field path -> span, consulted to anchor validation errors
        let mut spans: Vec<(String, Range<usize>)> = vec![
            ("seed_intensity".into(), raw.seed_intensity.span()),
            ("detector_efficiency".into(), raw.detector_efficiency.span()),
        ];
        for (i, s) in raw.stages.iter().enumerate() {
            let stage = s.get_ref();
            spans.push((format!("stages[{i}].gain"), stage.gain.span()));
            spans.push((
                format!("stages[{i}].pre_stage_transmission"),
                stage.pre_stage_transmission.span(),
            ));
        }
        if let Some(p) = &raw.path_transmissions {
            spans.push(("path_transmissions".into(), p.span()));
        }
        if let Some(plans) = &raw.plans {
            for (i, p) in plans.iter().enumerate() {
                spans.push((format!("plans[{i}]"), p.span()));
            }
        }
        if let Some(e) = &raw.classical_excess {
            spans.push(("classical_excess".into(), e.span()));
        }

        let spec = CascadeSpec {
            seed_intensity: raw.seed_intensity.into_inner(),
            stages: raw
                .stages
                .into_iter()
                .map(|s| {
                    let s = s.into_inner();
                    Stage {
                        gain: s.gain.into_inner(),
                        pre_stage_transmission: s.pre_stage_transmission.into_inner(),
                    }
                })
                .collect(),
            path_transmissions: raw
                .path_transmissions
                .map(Spanned::into_inner)
                .unwrap_or_else(|| vec![1.0; n + 1]),
            detector_efficiency: raw.detector_efficiency.into_inner(),
            plans: match raw.plans {
                Some(plans) => plans.into_iter().map(Spanned::into_inner).collect(),
                None => default_plans(n),
            },
            classical_excess: raw.classical_excess.map(Spanned::into_inner),
        };
        spec.validate().map_err(|err| match err {
            ScenarioError::InvalidField { field, reason, .. } => {
                let line = spans
                    .iter()
                    .filter(|(path, _)| {
                        field == *path
                            || field.starts_with(&format!("{path}["))
                            || field.starts_with(&format!("{path}."))
                    })
                    .max_by_key(|(path, _)| path.len())
                    .and_then(|(_, span)| line_of(text, span.clone()));
                ScenarioError::InvalidField {
                    field,
                    reason,
                    location: Location(line),
                }
            }
            other => other,
        })?;
        Ok(spec)
    }
}
