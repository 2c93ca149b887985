//! Linearized direct detection of bright beams.
//!
//! A photocurrent fluctuation is `δi_k = |α_k| δX_θk` with `θ_k = arg α_k`;
//! terms second order in the fluctuations are dropped. Everything is in
//! shot-noise units, so a coherent beam of intensity `I` has photocurrent
//! variance `I`.

use thiserror::Error;

use crate::bogoliubov::{BogoliubovTransform, MeanField, NetworkError, QuadratureCovariance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("detection plan is empty or has only zero coefficients")]
    EmptyPlan,
    #[error(
        "plan has {modes} modes but {coefficients} coefficients and {efficiencies} efficiencies"
    )]
    LengthMismatch {
        modes: usize,
        coefficients: usize,
        efficiencies: usize,
    },
    #[error("mode {0} appears twice in the detection plan")]
    RepeatedMode(usize),
    #[error("detector efficiency {0} outside [0, 1]")]
    InvalidEfficiency(f64),
    #[error("non-finite coefficient {0}")]
    InvalidCoefficient(f64),
    #[error("need {needed} spare vacuum ancillas, only {available} available")]
    InsufficientAncillas { needed: usize, available: usize },
    #[error("every detected beam is dark; the shot-noise limit is zero")]
    NoShotNoise,
    #[error("ratio must be positive and finite, got {0}")]
    NonPositiveRatio(f64),
    #[error("optical power must be positive and finite, got {0}")]
    NonPositivePower(f64),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Weighted photocurrent combination, e.g. `i3 - i2 - i1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPlan {
    modes: Vec<usize>,
    coefficients: Vec<f64>,
    efficiencies: Vec<f64>,
}

impl DetectionPlan {
    pub fn new(
        modes: Vec<usize>,
        coefficients: Vec<f64>,
        efficiencies: Vec<f64>,
    ) -> Result<Self, DetectionError> {
        if modes.len() != coefficients.len() || modes.len() != efficiencies.len() {
            return Err(DetectionError::LengthMismatch {
                modes: modes.len(),
                coefficients: coefficients.len(),
                efficiencies: efficiencies.len(),
            });
        }
        if let Some(&c) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(DetectionError::InvalidCoefficient(c));
        }
        if coefficients.iter().all(|&c| c == 0.0) {
            return Err(DetectionError::EmptyPlan);
        }
        if let Some(&e) = efficiencies.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(DetectionError::InvalidEfficiency(e));
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(DetectionError::RepeatedMode(*m));
            }
        }
        Ok(Self {
            modes,
            coefficients,
            efficiencies,
        })
    }

    /// Combination read out by ideal detectors.
    pub fn combination(modes: Vec<usize>, coefficients: Vec<f64>) -> Result<Self, DetectionError> {
        let n = modes.len();
        Self::new(modes, coefficients, vec![1.0; n])
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.modes
            .iter()
            .copied()
            .zip(self.coefficients.iter().copied())
    }
}

/// Normalized noise of one photocurrent combination.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    /// Intensity reaching each detector of the plan, in plan order.
    pub mean_powers: Vec<f64>,
    pub variance: f64,
    pub snl: f64,
    pub ratio: f64,
    pub db: f64,
}

/// Appends a pre-detection loss on each detected mode, consuming one ancilla
/// per detector from `ancillas` in order.
pub fn apply_detector_efficiency(
    transform: &BogoliubovTransform,
    plan: &DetectionPlan,
    ancillas: &[usize],
) -> Result<BogoliubovTransform, DetectionError> {
    if ancillas.len() < plan.modes.len() {
        return Err(DetectionError::InsufficientAncillas {
            needed: plan.modes.len(),
            available: ancillas.len(),
        });
    }
    let mut out = transform.clone();
    for ((&mode, &eta), &anc) in plan.modes.iter().zip(&plan.efficiencies).zip(ancillas) {
        out.push_loss(mode, anc, eta)?;
    }
    Ok(out)
}

/// Linearized variance of `Σ c_k i_k` and its shot-noise limit `Σ c_k² I_k`.
///
/// Detector efficiencies in the plan are not applied here; fold them into the
/// network with [`apply_detector_efficiency`] first. Dark beams carry no
/// first-order photocurrent fluctuation and drop out of both sums.
pub fn photocurrent_noise(
    gamma: &QuadratureCovariance,
    alpha: &MeanField,
    plan: &DetectionPlan,
) -> Result<NoiseReport, DetectionError> {
    let modes = alpha.len();
    if gamma.modes() != modes {
        return Err(NetworkError::DimensionMismatch {
            expected: modes,
            found: gamma.modes(),
        }
        .into());
    }
    for &m in &plan.modes {
        if m >= modes {
            return Err(NetworkError::ModeOutOfRange { index: m, modes }.into());
        }
    }
    let weights = quadrature_weights(alpha, plan);
    let g = gamma.matrix();
    let mut variance = 0.0;
    for &(p, wp) in &weights {
        for &(q, wq) in &weights {
            variance += wp * g[(p, q)] * wq;
        }
    }
    let mean_powers: Vec<f64> = plan.modes.iter().map(|&m| alpha.intensity(m)).collect();
    let snl: f64 = plan
        .coefficients
        .iter()
        .zip(&mean_powers)
        .map(|(c, i)| c * c * i)
        .sum();
    if snl <= 0.0 {
        return Err(DetectionError::NoShotNoise);
    }
    let ratio = variance / snl;
    Ok(NoiseReport {
        mean_powers,
        variance,
        snl,
        ratio,
        db: 10.0 * ratio.log10(),
    })
}

/// Sparse weight vector over quadrature indices: `c_k |α_k| (cos θ_k, sin θ_k)`.
pub(crate) fn quadrature_weights(alpha: &MeanField, plan: &DetectionPlan) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(2 * plan.modes.len());
    for (m, c) in plan.terms() {
        let a = alpha.amplitude(m);
        if a.norm_sqr() == 0.0 {
            continue;
        }
        // c |α| cos θ = c Re α, c |α| sin θ = c Im α
        out.push((2 * m, c * a.re));
        out.push((2 * m + 1, c * a.im));
    }
    out
}

/// Covariance matrix of the individual photocurrents `|α_k| δX_θk` for `modes`.
pub fn photocurrent_covariance(
    gamma: &QuadratureCovariance,
    alpha: &MeanField,
    modes: &[usize],
) -> Vec<Vec<f64>> {
    let g = gamma.matrix();
    let w: Vec<(f64, f64)> = modes
        .iter()
        .map(|&m| (alpha.amplitude(m).re, alpha.amplitude(m).im))
        .collect();
    let mut out = vec![vec![0.0; modes.len()]; modes.len()];
    for (j, &mj) in modes.iter().enumerate() {
        for (k, &mk) in modes.iter().enumerate() {
            let (xj, pj) = w[j];
            let (xk, pk) = w[k];
            out[j][k] = xj * xk * g[(2 * mj, 2 * mk)]
                + xj * pk * g[(2 * mj, 2 * mk + 1)]
                + pj * xk * g[(2 * mj + 1, 2 * mk)]
                + pj * pk * g[(2 * mj + 1, 2 * mk + 1)];
        }
    }
    out
}

/// Balanced-detection shot-noise calibration: a coherent beam of
/// `total_power` split 50/50 onto two detectors, returning `Var(i_a - i_b)`.
pub fn snl_calibration_sim(total_power: f64) -> Result<f64, DetectionError> {
    if !(total_power.is_finite() && total_power > 0.0) {
        return Err(DetectionError::NonPositivePower(total_power));
    }
    let split = BogoliubovTransform::beamsplitter(2, 0, 1, 0.5)?;
    let alpha = split.propagate_mean(&MeanField::seeded(2, 0, total_power))?;
    let gamma = split.output_covariance(&QuadratureCovariance::vacuum(2))?;
    let plan = DetectionPlan::combination(vec![0, 1], vec![1.0, -1.0])?;
    Ok(photocurrent_noise(&gamma, &alpha, &plan)?.variance)
}

pub fn to_db(ratio: f64) -> Result<f64, DetectionError> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(DetectionError::NonPositiveRatio(ratio));
    }
    Ok(10.0 * ratio.log10())
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
