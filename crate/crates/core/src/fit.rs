//! Loss-budget fitting.
//!
//! Three reference measurements are modeled from one two-stage template: the
//! twin beams of stage 1 alone, the twin beams of stage 2 alone, and the full
//! triple-beam difference of the cascade. Free transmissions are adjusted to
//! minimize the summed squared dB error.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cascade::{full_difference, run_scenario, CascadeSpec, ScenarioError};
use crate::optimize::{grid_local_minima, nelder_mead_bounded, Bounds, Minimum, NelderMeadOptions};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("between 1 and 4 free parameters are supported, got {0}")]
    ParameterCount(usize),
    #[error("free parameter {0} listed twice")]
    DuplicateParameter(FreeParam),
    #[error("free parameter {0} does not exist in a two-stage cascade")]
    UnknownParameter(FreeParam),
    #[error("infeasible bounds [{lower}, {upper}]; need 0 <= lower <= upper <= 1")]
    InfeasibleBounds { lower: f64, upper: f64 },
    #[error("measured values must be finite, got {0:?}")]
    NonFiniteTarget([f64; 3]),
    #[error("the fit template must have exactly two stages, got {0}")]
    NotTwoStage(usize),
    #[error("cannot parse free parameter {0:?} (expected probe, c1, c2, inter1, inter2 or det)")]
    Parse(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// A transmission of the template that the fit may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreeParam {
    /// Path transmission of conjugate `Ck` (1-based).
    ConjugatePath(usize),
    /// Path transmission of the probe to its detector.
    ProbePath,
    /// Probe transmission in front of stage `k` (1-based).
    InterStage(usize),
    DetectorEfficiency,
}

impl FreeParam {
    /// Per-detector path transmissions `C1`, `C2`, probe.
    pub fn detector_paths() -> Vec<FreeParam> {
        vec![
            FreeParam::ConjugatePath(1),
            FreeParam::ConjugatePath(2),
            FreeParam::ProbePath,
        ]
    }

    fn exists(&self) -> bool {
        match *self {
            FreeParam::ConjugatePath(k) | FreeParam::InterStage(k) => (1..=2).contains(&k),
            FreeParam::ProbePath | FreeParam::DetectorEfficiency => true,
        }
    }

    fn apply(&self, spec: &mut CascadeSpec, value: f64) {
        let n = spec.stage_count();
        match *self {
            FreeParam::ConjugatePath(k) => spec.path_transmissions[k - 1] = value,
            FreeParam::ProbePath => spec.path_transmissions[n] = value,
            FreeParam::InterStage(k) => spec.stages[k - 1].pre_stage_transmission = value,
            FreeParam::DetectorEfficiency => spec.detector_efficiency = value,
        }
    }

    pub fn read(&self, spec: &CascadeSpec) -> f64 {
        let n = spec.stage_count();
        match *self {
            FreeParam::ConjugatePath(k) => spec.path_transmissions[k - 1],
            FreeParam::ProbePath => spec.path_transmissions[n],
            FreeParam::InterStage(k) => spec.stages[k - 1].pre_stage_transmission,
            FreeParam::DetectorEfficiency => spec.detector_efficiency,
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreeParam::ConjugatePath(k) => write!(f, "c{k}"),
            FreeParam::ProbePath => write!(f, "probe"),
            FreeParam::InterStage(k) => write!(f, "inter{k}"),
            FreeParam::DetectorEfficiency => write!(f, "det"),
        }
    }
}

impl FromStr for FreeParam {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let index = |prefix: &str| {
            lower
                .strip_prefix(prefix)
                .and_then(|k| k.parse::<usize>().ok())
        };
        match lower.as_str() {
            "probe" | "pr" => Ok(FreeParam::ProbePath),
            "det" | "detector" => Ok(FreeParam::DetectorEfficiency),
            _ => index("inter")
                .map(FreeParam::InterStage)
                .or_else(|| index("c").map(FreeParam::ConjugatePath))
                .ok_or_else(|| FitError::Parse(s.to_string())),
        }
    }
}

/// Squeezing levels in dB for (twin beams of stage 1, of stage 2, triple beams).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredSqueezing {
    pub twin1_db: f64,
    pub twin2_db: f64,
    pub triple_db: f64,
}

impl MeasuredSqueezing {
    pub fn new(twin1_db: f64, twin2_db: f64, triple_db: f64) -> Self {
        Self {
            twin1_db,
            twin2_db,
            triple_db,
        }
    }

    /// Values inferred from the slopes of the noise-vs-power curves.
    pub fn slope_derived() -> Self {
        Self::new(-5.5, -4.5, -7.0)
    }

    /// Minima read directly off the measured noise spectra.
    pub fn direct_minima() -> Self {
        Self::new(-5.4, -4.4, -6.5)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.twin1_db, self.twin2_db, self.triple_db]
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub lower: f64,
    pub upper: f64,
    pub grid_points: usize,
    pub max_iterations: usize,
    /// Grid local minima used as simplex starting points.
    pub starts: usize,
    /// Solutions with a residual (dB²) at or below this are treated as exact.
    pub exact_residual: f64,
    /// Objective-change convergence threshold (dB²).
    pub f_tol: f64,
    /// A fit whose worst per-point error exceeds this (dB) is flagged.
    pub residual_threshold_db: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lower: 0.5,
            upper: 1.0,
            grid_points: 21,
            max_iterations: 500,
            starts: 6,
            exact_residual: 1e-10,
            f_tol: 1e-6,
            residual_threshold_db: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossFit {
    pub params: Vec<(FreeParam, f64)>,
    pub measured: MeasuredSqueezing,
    /// Model dB for (twin 1, twin 2, triple) at the fitted parameters.
    pub model_db: [f64; 3],
    /// Sum of squared dB errors.
    pub residual: f64,
    pub max_abs_error_db: f64,
    /// Worst per-point error above the threshold.
    pub flagged: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Other parameter sets that reproduce the targets exactly. Three dB values
    /// do not always pin down three transmissions; when several exact
    /// solutions exist the one nearest the template is reported in `params`.
    pub alternatives: Vec<Vec<f64>>,
    pub spec: CascadeSpec,
}

/// Template with the three reference scenarios reduced to their single plans.
fn reference_specs(spec: &CascadeSpec) -> [CascadeSpec; 3] {
    [
        spec.single_stage(0),
        spec.single_stage(1),
        spec.clone().with_plans(vec![full_difference("triple", 2)]),
    ]
}

/// Model dB values (twin 1, twin 2, triple) of a two-stage spec.
pub fn reference_db(spec: &CascadeSpec) -> Result<[f64; 3], FitError> {
    if spec.stage_count() != 2 {
        return Err(FitError::NotTwoStage(spec.stage_count()));
    }
    let mut out = [0.0; 3];
    for (slot, s) in out.iter_mut().zip(reference_specs(spec)) {
        let res = run_scenario(&s)?;
        *slot = res
            .reports
            .first()
            .map(|r| r.report.db)
            .ok_or(ScenarioError::Detection(
                crate::photodetection::DetectionError::NoShotNoise,
            ))?;
    }
    Ok(out)
}

fn with_params(template: &CascadeSpec, free: &[FreeParam], values: &[f64]) -> CascadeSpec {
    let mut spec = template.clone();
    for (p, &v) in free.iter().zip(values) {
        p.apply(&mut spec, v);
    }
    spec
}

/// Exact solutions closer than this on every axis count as one.
const DISTINCT_SOLUTION: f64 = 1e-4;

pub fn fit_losses(
    measured: MeasuredSqueezing,
    template: &CascadeSpec,
    free: &[FreeParam],
    options: &FitOptions,
) -> Result<LossFit, FitError> {
    if free.is_empty() || free.len() > 4 {
        return Err(FitError::ParameterCount(free.len()));
    }
    for (i, p) in free.iter().enumerate() {
        if !p.exists() {
            return Err(FitError::UnknownParameter(*p));
        }
        if free[..i].contains(p) {
            return Err(FitError::DuplicateParameter(*p));
        }
    }
    let bounds = Bounds::uniform(free.len(), options.lower, options.upper);
    if !(bounds.is_feasible() && options.lower >= 0.0 && options.upper <= 1.0) {
        return Err(FitError::InfeasibleBounds {
            lower: options.lower,
            upper: options.upper,
        });
    }
    let targets = measured.as_array();
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(FitError::NonFiniteTarget(targets));
    }
    template.validate()?;
    if template.stage_count() != 2 {
        return Err(FitError::NotTwoStage(template.stage_count()));
    }

    let objective = |x: &[f64]| -> f64 {
        match reference_db(&with_params(template, free, x)) {
            Ok(model) => model
                .iter()
                .zip(&targets)
                .map(|(m, t)| (m - t).powi(2))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };

    let spacing = (options.upper - options.lower) / (options.grid_points.max(2) - 1) as f64;
    let descend = |x0: &[f64], step: f64| -> Minimum {
        let mut nm = NelderMeadOptions::new(vec![step.max(1e-6); free.len()]);
        nm.max_iterations = options.max_iterations;
        nm.f_tol_rel = options.f_tol;
        nelder_mead_bounded(&objective, x0, &bounds, &nm)
    };
    let mut solutions: Vec<Minimum> = Vec::new();
    for (start, _) in grid_local_minima(&objective, &bounds, options.grid_points, options.starts) {
        let first = descend(&start, spacing);
        // restart from the result: a collapsed simplex at a bound can stall
        let polished = descend(&first.x, spacing / 10.0);
        let iterations = first.iterations + polished.iterations;
        let m = if polished.value <= first.value {
            polished
        } else {
            first
        };
        solutions.push(Minimum { iterations, ..m });
    }

    let distinct = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .any(|(x, y)| (x - y).abs() > DISTINCT_SOLUTION)
    };
    let mut exact: Vec<Minimum> = Vec::new();
    for m in solutions
        .iter()
        .filter(|m| m.value <= options.exact_residual)
    {
        if exact.iter().all(|e| distinct(&e.x, &m.x)) {
            exact.push(m.clone());
        }
    }
    let nominal: Vec<f64> = free.iter().map(|p| p.read(template)).collect();
    let distance = |x: &[f64]| {
        x.iter()
            .zip(&nominal)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    };
    let best = if exact.is_empty() {
        solutions
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .cloned()
            .expect("at least one start")
    } else {
        exact
            .iter()
            .min_by(|a, b| distance(&a.x).total_cmp(&distance(&b.x)))
            .cloned()
            .expect("non-empty")
    };
    let alternatives = exact
        .iter()
        .filter(|m| distinct(&m.x, &best.x))
        .map(|m| m.x.clone())
        .collect();

    let spec = with_params(template, free, &best.x);
    let model_db = reference_db(&spec)?;
    let max_abs_error_db = model_db
        .iter()
        .zip(&targets)
        .map(|(m, t)| (m - t).abs())
        .fold(0.0, f64::max);
    Ok(LossFit {
        params: free.iter().copied().zip(best.x.iter().copied()).collect(),
        measured,
        model_db,
        residual: best.value,
        max_abs_error_db,
        flagged: max_abs_error_db > options.residual_threshold_db,
        converged: best.converged,
        iterations: best.iterations,
        alternatives,
        spec,
    })
}

impl LossFit {
    /// CSV: one row per fitted parameter, then one row per reference scenario.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["parameter", "value"])?;
        for (p, v) in &self.params {
            w.write_record([p.to_string(), crate::cascade::fmt_num(*v)])?;
        }
        w.write_record(["scenario", "measured_db", "model_db", "error_db"])?;
        let names = ["twin1", "twin2", "triple"];
        for ((name, m), t) in names
            .iter()
            .zip(self.model_db)
            .zip(self.measured.as_array())
        {
            w.write_record([
                name.to_string(),
                crate::cascade::fmt_num(t),
                crate::cascade::fmt_num(m),
                crate::cascade::fmt_num(m - t),
            ])?;
        }
        w.write_record([
            "residual".to_string(),
            crate::cascade::fmt_num(self.residual),
        ])?;
        w.write_record(["flagged".to_string(), self.flagged.to_string()])?;
        for alt in &self.alternatives {
            let mut row = vec!["alternative".to_string()];
            row.extend(alt.iter().map(|v| crate::cascade::fmt_num(*v)));
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
