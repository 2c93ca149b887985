//! Exact number-basis reference for one- and two-stage chains.
//!
//! States live on up to three truncated modes. Two-mode squeezing
//! `exp[r(a†b† - ab)]` conserves `n_a - n_b`, so it is applied block by block
//! with a dense matrix exponential per difference sector. Each block is padded
//! above the cutoff during the exponential; weight that ends above the cutoff
//! is discarded and accumulated as leakage.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bogoliubov::C64;
use crate::cascade::{full_difference, run_scenario, CascadeSpec, ScenarioError};

/// Coherent-state truncation above this is flagged.
pub const COHERENT_LEAKAGE_LIMIT: f64 = 1e-8;
/// Squeezing results whose accumulated leakage exceeds this are flagged.
pub const TMS_LEAKAGE_LIMIT: f64 = 1e-4;
/// Oracle comparisons refuse to report above this leakage.
pub const ORACLE_LEAKAGE_LIMIT: f64 = 1e-12;

const MAX_MODES: usize = 3;
const MAX_DIMENSION: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("1 to {MAX_MODES} modes supported, got {0}")]
    ModeCount(usize),
    #[error("state dimension {0} exceeds the limit of {MAX_DIMENSION}")]
    TooLarge(usize),
    #[error("invalid mode pair ({0}, {1})")]
    ModePair(usize, usize),
    #[error("1 or 2 stages supported, got {0}")]
    StageCount(usize),
    #[error("expected {expected} cutoffs, got {found}")]
    CutoffCount { expected: usize, found: usize },
    #[error("gain must be >= 1, got {0}")]
    InvalidGain(f64),
    #[error("seed amplitude must be finite and nonzero, got {0}")]
    InvalidSeed(f64),
    #[error("truncation leakage {leakage:e} exceeds {limit:e}; raise the cutoffs")]
    Leakage { leakage: f64, limit: f64 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Truncated number-basis state on up to three modes, row-major with mode 0 slowest.
#[derive(Debug, Clone)]
pub struct FockState {
    amplitudes: Vec<C64>,
    cutoffs: Vec<usize>,
    leakage: f64,
    unreliable: bool,
}

fn dimension(cutoffs: &[usize]) -> usize {
    cutoffs.iter().map(|c| c + 1).product()
}

impl FockState {
    pub fn vacuum(cutoffs: &[usize]) -> Result<Self, OracleError> {
        if cutoffs.is_empty() || cutoffs.len() > MAX_MODES {
            return Err(OracleError::ModeCount(cutoffs.len()));
        }
        let dim = dimension(cutoffs);
        if dim > MAX_DIMENSION {
            return Err(OracleError::TooLarge(dim));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[0] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            cutoffs: cutoffs.to_vec(),
            leakage: 0.0,
            unreliable: false,
        })
    }

    /// Single-mode coherent state. Truncation leakage is the exact Poisson tail
    /// beyond `cutoff`; states with leakage above [`COHERENT_LEAKAGE_LIMIT`] are
    /// flagged unreliable.
    pub fn coherent(alpha: C64, cutoff: usize) -> Self {
        let mean = alpha.norm_sqr();
        let mut amplitudes = Vec::with_capacity(cutoff + 1);
        let mut c = C64::new((-0.5 * mean).exp(), 0.0);
        for n in 0..=cutoff {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            amplitudes.push(c);
        }
        // Poisson tail, summed forward until terms vanish
        let mut p = c.norm_sqr();
        let mut tail = 0.0;
        let mut n = cutoff;
        loop {
            n += 1;
            p *= mean / n as f64;
            tail += p;
            if p <= tail * 1e-17 || p == 0.0 || n > cutoff + 10_000 {
                break;
            }
        }
        Self {
            amplitudes,
            cutoffs: vec![cutoff],
            leakage: tail,
            unreliable: tail > COHERENT_LEAKAGE_LIMIT,
        }
    }

    pub fn tensor(&self, other: &FockState) -> Result<Self, OracleError> {
        let cutoffs: Vec<usize> = self.cutoffs.iter().chain(&other.cutoffs).copied().collect();
        if cutoffs.len() > MAX_MODES {
            return Err(OracleError::ModeCount(cutoffs.len()));
        }
        let dim = dimension(&cutoffs);
        if dim > MAX_DIMENSION {
            return Err(OracleError::TooLarge(dim));
        }
        let mut amplitudes = Vec::with_capacity(dim);
        for a in &self.amplitudes {
            amplitudes.extend(other.amplitudes.iter().map(|b| a * b));
        }
        let (n1, n2) = (self.norm_sqr(), other.norm_sqr());
        Ok(Self {
            amplitudes,
            cutoffs,
            leakage: self.leakage * n2 + other.leakage * n1 + self.leakage * other.leakage,
            unreliable: self.unreliable || other.unreliable,
        })
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    /// Probability weight lost to truncation so far.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn is_reliable(&self) -> bool {
        !self.unreliable
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.modes()];
        for k in (0..self.modes().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (self.cutoffs[k + 1] + 1);
        }
        strides
    }

    fn occupation(&self, mut index: usize) -> [usize; MAX_MODES] {
        let mut n = [0; MAX_MODES];
        for k in (0..self.modes()).rev() {
            let d = self.cutoffs[k] + 1;
            n[k] = index % d;
            index /= d;
        }
        n
    }

    /// Applies `exp[r(a†b† - ab)]` on modes `(a, b)`.
    pub fn apply_tms(&self, r: f64, (a, b): (usize, usize)) -> Result<Self, OracleError> {
        if a == b || a >= self.modes() || b >= self.modes() {
            return Err(OracleError::ModePair(a, b));
        }
        let (ca, cb) = (self.cutoffs[a], self.cutoffs[b]);
        let pad = 20.max(ca.max(cb) / 2);
        let strides = self.strides();
        let spectator = (0..self.modes()).find(|&k| k != a && k != b);
        let spectator_range = spectator.map_or(1, |s| self.cutoffs[s] + 1);

        let mut out = vec![C64::new(0.0, 0.0); self.amplitudes.len()];
        let mut discarded = 0.0;
        for d in -(cb as i64)..=(ca as i64) {
            // block states (m + d, m) for m in m_lo..=m_hi within the padded space
            let m_lo = (-d).max(0) as usize;
            let m_hi = ((cb + pad) as i64).min((ca + pad) as i64 - d) as usize;
            let len = m_hi + 1 - m_lo;
            let mut gen = DMatrix::<f64>::zeros(len, len);
            for i in 0..len - 1 {
                let m = (m_lo + i) as f64;
                let na = m + d as f64;
                let coupling = r * ((na + 1.0) * (m + 1.0)).sqrt();
                gen[(i + 1, i)] = coupling;
                gen[(i, i + 1)] = -coupling;
            }
            let u = gen.exp();
            // rows of the block that survive the truncation
            let keep: Vec<Option<usize>> = (0..len)
                .map(|i| {
                    let m = m_lo + i;
                    let na = (m as i64 + d) as usize;
                    (na <= ca && m <= cb).then_some(na * strides[a] + m * strides[b])
                })
                .collect();
            for s in 0..spectator_range {
                let base = spectator.map_or(0, |k| s * strides[k]);
                let input: Vec<(usize, C64)> = keep
                    .iter()
                    .enumerate()
                    .filter_map(|(i, idx)| idx.map(|idx| (i, self.amplitudes[base + idx])))
                    .filter(|(_, amp)| amp.norm_sqr() > 0.0)
                    .collect();
                if input.is_empty() {
                    continue;
                }
                for (row, target) in keep.iter().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for &(col, amp) in &input {
                        acc += amp * u[(row, col)];
                    }
                    match target {
                        Some(idx) => out[base + idx] = acc,
                        None => discarded += acc.norm_sqr(),
                    }
                }
            }
        }
        let leakage = self.leakage + discarded;
        Ok(Self {
            amplitudes: out,
            cutoffs: self.cutoffs.clone(),
            leakage,
            unreliable: self.unreliable || leakage > TMS_LEAKAGE_LIMIT,
        })
    }

    /// Exact photon-number means and covariances of the retained (renormalized)
    /// amplitudes.
    pub fn photon_moments(&self) -> MomentReport {
        let k = self.modes();
        let norm = self.norm_sqr();
        let mut first = vec![0.0; k];
        let mut second = vec![vec![0.0; k]; k];
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let n = self.occupation(idx);
            for i in 0..k {
                first[i] += p * n[i] as f64;
                for j in 0..k {
                    second[i][j] += p * (n[i] * n[j]) as f64;
                }
            }
        }
        let means: Vec<f64> = first.iter().map(|m| m / norm).collect();
        let covariance = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| second[i][j] / norm - means[i] * means[j])
                    .collect()
            })
            .collect();
        MomentReport {
            means,
            covariance,
            leakage: self.leakage,
        }
    }
}

/// Squeezing parameter of a PIA with intensity gain `G = cosh² r`.
pub fn squeezing_parameter(gain: f64) -> f64 {
    gain.sqrt().acosh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub leakage: f64,
}

impl MomentReport {
    /// `Var(Σ c_k N_k)`.
    pub fn combination_variance(&self, coefficients: &[f64]) -> f64 {
        let mut v = 0.0;
        for (i, ci) in coefficients.iter().enumerate() {
            for (j, cj) in coefficients.iter().enumerate() {
                v += ci * cj * self.covariance[i][j];
            }
        }
        v
    }
}

/// Exact-vs-linearized comparison for the full multi-beam difference.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub gains: Vec<f64>,
    pub seed_intensity: f64,
    /// `Var(N_Pr - Σ N_C)` from the number-basis state.
    pub difference_variance: f64,
    /// `Var(N_Pr - Σ N_C) / Σ <N>`.
    pub exact_ratio: f64,
    pub linearized_ratio: f64,
    pub absolute_discrepancy: f64,
    pub relative_discrepancy: f64,
    /// Leading-order spontaneous-emission correction `2(ΠG-1) / ((2ΠG-1)|α|²)`.
    pub predicted_relative: f64,
    pub means: Vec<f64>,
    pub leakage: f64,
}

/// Cutoffs with headroom for the seed's Poisson spread and the geometric
/// tail of the amplified vacuum, aiming for truncation leakage near 1e-15.
pub fn recommended_cutoffs(gains: &[f64], seed_intensity: f64) -> Vec<usize> {
    let total: f64 = gains.iter().product();
    // thermal tail ratio of the overall amplifier bounds every mode's tail
    let q = (total - 1.0) / total;
    let tail = if q > 0.0 { 37.0 / -q.ln() } else { 0.0 };
    let headroom = |mean: f64, var: f64| (mean + 6.0 * var.sqrt() + tail + 5.0).ceil() as usize;
    let probe_mean = total * seed_intensity + total - 1.0;
    let mut out = vec![headroom(
        probe_mean,
        probe_mean * (2.0 * total - 1.0) + seed_intensity,
    )];
    let mut before = 1.0;
    for &g in gains {
        let mean = (g - 1.0) * (before * seed_intensity + before);
        out.push(headroom(mean, mean * (2.0 * g - 1.0)));
        before *= g;
    }
    out
}

/// Runs the exact chain with a real coherent seed of amplitude `seed_alpha` and
/// compares the multi-beam difference ratio to the linearized engine.
/// `cutoffs` are ordered (probe, C1, C2).
pub fn verify_against_gaussian(
    gains: &[f64],
    seed_alpha: f64,
    cutoffs: &[usize],
) -> Result<OracleReport, OracleError> {
    let n = gains.len();
    if !(1..=2).contains(&n) {
        return Err(OracleError::StageCount(n));
    }
    if cutoffs.len() != n + 1 {
        return Err(OracleError::CutoffCount {
            expected: n + 1,
            found: cutoffs.len(),
        });
    }
    if let Some(&g) = gains.iter().find(|g| !(g.is_finite() && **g >= 1.0)) {
        return Err(OracleError::InvalidGain(g));
    }
    if !(seed_alpha.is_finite() && seed_alpha != 0.0) {
        return Err(OracleError::InvalidSeed(seed_alpha));
    }
    let mut state = FockState::coherent(C64::new(seed_alpha, 0.0), cutoffs[0])
        .tensor(&FockState::vacuum(&cutoffs[1..])?)?;
    for (k, &g) in gains.iter().enumerate() {
        state = state.apply_tms(squeezing_parameter(g), (0, k + 1))?;
    }
    if state.leakage() > ORACLE_LEAKAGE_LIMIT {
        return Err(OracleError::Leakage {
            leakage: state.leakage(),
            limit: ORACLE_LEAKAGE_LIMIT,
        });
    }
    let moments = state.photon_moments();
    let mut coefficients = vec![-1.0; n + 1];
    coefficients[0] = 1.0;
    let difference_variance = moments.combination_variance(&coefficients);
    let total_mean: f64 = moments.means.iter().sum();
    let exact_ratio = difference_variance / total_mean;

    let seed_intensity = seed_alpha * seed_alpha;
    let spec =
        CascadeSpec::lossless(seed_intensity, gains).with_plans(vec![full_difference("full", n)]);
    let linearized_ratio = run_scenario(&spec)?.reports[0].report.ratio;
    let total_gain: f64 = gains.iter().product();
    Ok(OracleReport {
        gains: gains.to_vec(),
        seed_intensity,
        difference_variance,
        exact_ratio,
        linearized_ratio,
        absolute_discrepancy: (exact_ratio - linearized_ratio).abs(),
        relative_discrepancy: (exact_ratio - linearized_ratio).abs() / linearized_ratio,
        predicted_relative: 2.0 * (total_gain - 1.0) / ((2.0 * total_gain - 1.0) * seed_intensity),
        means: moments.means,
        leakage: state.leakage(),
    })
}

impl OracleReport {
    pub const CSV_HEADER: [&'static str; 10] = [
        "gains",
        "seed_intensity",
        "difference_variance",
        "exact_ratio",
        "linearized_ratio",
        "absolute_discrepancy",
        "relative_discrepancy",
        "predicted_relative",
        "leakage",
        "total_mean",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        use crate::cascade::fmt_num;
        vec![
            self.gains
                .iter()
                .map(|g| g.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            fmt_num(self.seed_intensity),
            fmt_num(self.difference_variance),
            fmt_num(self.exact_ratio),
            fmt_num(self.linearized_ratio),
            fmt_num(self.absolute_discrepancy),
            fmt_num(self.relative_discrepancy),
            fmt_num(self.predicted_relative),
            fmt_num(self.leakage),
            fmt_num(self.means.iter().sum()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_mode(alpha: f64, cutoffs: [usize; 2]) -> FockState {
        FockState::coherent(C64::new(alpha, 0.0), cutoffs[0])
            .tensor(&FockState::vacuum(&cutoffs[1..]).unwrap())
            .unwrap()
    }

    #[test]
    fn coherent_statistics() {
        let vac = FockState::coherent(C64::new(0.0, 0.0), 10);
        assert_eq!(vac.photon_moments().means, vec![0.0]);
        let s = FockState::coherent(C64::new(2.0, 0.0), 40);
        let m = s.photon_moments();
        assert_abs_diff_eq!(m.means[0], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.covariance[0][0], 4.0, epsilon = 1e-8);
        assert!(s.is_reliable());

        let s = FockState::coherent(C64::new(3.0, 0.0), 40);
        assert!(s.leakage() < 1e-10);
        assert_abs_diff_eq!(s.norm_sqr() + s.leakage(), 1.0, epsilon = 1e-14);

        let tight = FockState::coherent(C64::new(3.0, 0.0), 8);
        assert!(!tight.is_reliable());
        assert_abs_diff_eq!(tight.norm_sqr() + tight.leakage(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        // alpha = 3, cutoff 12: tail = 1 - Σ_{n<=12} e^{-9} 9^n / n!
        let mut p = (-9.0f64).exp();
        let mut head = p;
        for n in 1..=12 {
            p *= 9.0 / n as f64;
            head += p;
        }
        let s = FockState::coherent(C64::new(3.0, 0.0), 12);
        assert_abs_diff_eq!(s.leakage(), 1.0 - head, epsilon = 1e-14);
    }

    #[test]
    fn zero_squeezing_is_identity() {
        let s = two_mode(1.5, [30, 10]);
        let t = s.apply_tms(0.0, (0, 1)).unwrap();
        for (a, b) in s.amplitudes.iter().zip(&t.amplitudes) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn squeezed_vacuum() {
        let g = 1.5;
        let s = FockState::vacuum(&[40, 40])
            .unwrap()
            .apply_tms(squeezing_parameter(g), (0, 1))
            .unwrap();
        let m = s.photon_moments();
        assert_abs_diff_eq!(m.means[0], g - 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.means[1], g - 1.0, epsilon = 1e-6);
        assert!(m.combination_variance(&[1.0, -1.0]).abs() < 1e-10);
        assert!(s.is_reliable());
    }

    #[test]
    fn seeded_amplifier_means() {
        let g = 1.5;
        let s = two_mode(2.0, [60, 60])
            .apply_tms(squeezing_parameter(g), (0, 1))
            .unwrap();
        let m = s.photon_moments();
        assert_abs_diff_eq!(m.means[0], g * 4.0 + (g - 1.0), epsilon = 1e-6);
        assert_abs_diff_eq!(m.means[1], (g - 1.0) * (4.0 + 1.0), epsilon = 1e-6);
        assert_abs_diff_eq!(m.combination_variance(&[1.0, -1.0]), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.norm_sqr() + s.leakage(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spectator_mode_is_untouched() {
        let g = 1.3;
        let state = FockState::coherent(C64::new(1.0, 0.0), 30)
            .tensor(&FockState::vacuum(&[20, 20]).unwrap())
            .unwrap();
        let s = state.apply_tms(squeezing_parameter(g), (0, 2)).unwrap();
        let m = s.photon_moments();
        assert_eq!(m.means[1], 0.0);
        assert_abs_diff_eq!(m.means[2], (g - 1.0) * 2.0, epsilon = 1e-8);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            FockState::vacuum(&[]),
            Err(OracleError::ModeCount(0))
        ));
        assert!(matches!(
            FockState::vacuum(&[1, 1, 1, 1]),
            Err(OracleError::ModeCount(4))
        ));
        assert!(matches!(
            FockState::vacuum(&[200, 200, 200]),
            Err(OracleError::TooLarge(_))
        ));
        let s = FockState::vacuum(&[5, 5]).unwrap();
        assert!(matches!(
            s.apply_tms(0.1, (0, 0)),
            Err(OracleError::ModePair(0, 0))
        ));
        assert!(matches!(
            s.apply_tms(0.1, (0, 2)),
            Err(OracleError::ModePair(0, 2))
        ));
        assert!(matches!(
            verify_against_gaussian(&[1.5; 3], 1.0, &[5; 4]),
            Err(OracleError::StageCount(3))
        ));
        assert!(matches!(
            verify_against_gaussian(&[1.5], 1.0, &[5]),
            Err(OracleError::CutoffCount { .. })
        ));
        assert!(matches!(
            verify_against_gaussian(&[0.5], 1.0, &[5, 5]),
            Err(OracleError::InvalidGain(_))
        ));
        assert!(matches!(
            verify_against_gaussian(&[1.5], 4.0, &[12, 6]),
            Err(OracleError::Leakage { .. })
        ));
    }

    #[test]
    fn oracle_single_stage() {
        let r = verify_against_gaussian(&[1.5], 3.0, &recommended_cutoffs(&[1.5], 9.0)).unwrap();
        assert_abs_diff_eq!(r.difference_variance, 9.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.linearized_ratio, 0.5, epsilon = 1e-12);
        // exact SNL carries the spontaneous term 2(G-1): 9 / (9 * 2 + 1)
        assert_abs_diff_eq!(r.exact_ratio, 9.0 / 19.0, epsilon = 1e-7);
        assert_abs_diff_eq!(r.predicted_relative, 1.0 / 18.0, epsilon = 1e-15);
    }

    #[test]
    fn two_stage_discrepancy_matches_closed_form() {
        let gains = [1.2, 1.3];
        let total: f64 = gains.iter().product();
        let mut last = f64::INFINITY;
        for n in [4.0, 9.0] {
            let r = verify_against_gaussian(&gains, f64::sqrt(n), &recommended_cutoffs(&gains, n))
                .unwrap();
            assert_abs_diff_eq!(r.difference_variance, n, epsilon = 1e-8);
            let closed = 2.0 * (total - 1.0) / (n * (2.0 * total - 1.0) + 2.0 * (total - 1.0));
            assert_abs_diff_eq!(r.relative_discrepancy, closed, epsilon = 1e-9);
            assert!(r.relative_discrepancy < last);
            last = r.relative_discrepancy;
        }
    }
}
