//! Noise power versus total detected power, the slope method of calibrating
//! squeezing: each curve is fitted by least squares and the slope ratios to
//! the shot-noise curve give the squeezing independent of any offset.

use rayon::prelude::*;
use thiserror::Error;

use crate::cascade::{fmt_num, full_difference, run_scenario, CascadeSpec, ScenarioError};
use crate::photodetection::{snl_calibration_sim, to_db, DetectionError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("power grid needs at least 3 distinct positive seed intensities")]
    DegenerateGrid,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub max_abs_residual: f64,
}

/// Ordinary least squares with a free intercept. Needs at least 3 points with
/// distinct abscissae.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = points
        .iter()
        .map(|p| p.1 - (intercept + slope * p.0))
        .collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let s2 = ssr / (n - 2.0);
    Some(LinearFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 },
        max_abs_residual: residuals.iter().fold(0.0, |m, r| f64::max(m, r.abs())),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// Letter label: `A` the full chain, then one per single-stage twin
    /// benchmark, then the shot-noise curve.
    pub label: String,
    pub description: String,
    /// `(total detected power, noise power)` per grid point.
    pub points: Vec<(f64, f64)>,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRatio {
    pub label: String,
    pub ratio: f64,
    pub ratio_se: f64,
    pub db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub seed_intensities: Vec<f64>,
    pub curves: Vec<Curve>,
    /// Slope of each bright curve over the shot-noise slope.
    pub ratios: Vec<SlopeRatio>,
}

fn letter(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

/// Sweeps the seed intensity of `spec`. Curves: the full multi-beam
/// difference, each stage's twin-beam benchmark, and the shot-noise
/// calibration evaluated at the full curve's total powers.
pub fn sweep_power(
    spec: &CascadeSpec,
    seed_intensities: &[f64],
) -> Result<SweepResult, SweepError> {
    let mut distinct: Vec<f64> = seed_intensities.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || distinct.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(SweepError::DegenerateGrid);
    }
    spec.validate()?;
    let n = spec.stage_count();
    let mut scenarios = vec![(
        spec.clone().with_plans(vec![full_difference("full", n)]),
        "full".to_string(),
    )];
    scenarios.extend((0..n).map(|k| {
        (
            spec.single_stage(k),
            format!("twin beams of stage {}", k + 1),
        )
    }));

    let mut curves = Vec::with_capacity(n + 2);
    for (i, (scenario, description)) in scenarios.iter().enumerate() {
        let points = seed_intensities
            .par_iter()
            .map(|&s| {
                let result = run_scenario(&scenario.clone().with_seed(s))?;
                let report = &result.reports[0].report;
                Ok((report.mean_powers.iter().sum::<f64>(), report.variance))
            })
            .collect::<Result<Vec<_>, SweepError>>()?;
        let fit = linear_fit(&points).ok_or(SweepError::DegenerateGrid)?;
        curves.push(Curve {
            label: letter(i),
            description: description.clone(),
            points,
            fit,
        });
    }
    let snl_points = curves[0]
        .points
        .iter()
        .map(|&(power, _)| Ok((power, snl_calibration_sim(power)?)))
        .collect::<Result<Vec<_>, SweepError>>()?;
    let snl_fit = linear_fit(&snl_points).ok_or(SweepError::DegenerateGrid)?;
    curves.push(Curve {
        label: letter(n + 1),
        description: "shot noise".into(),
        points: snl_points,
        fit: snl_fit,
    });

    let ratios = curves[..=n]
        .iter()
        .map(|c| {
            let ratio = c.fit.slope / snl_fit.slope;
            Ok(SlopeRatio {
                label: format!("{}/{}", c.label, letter(n + 1)),
                ratio,
                ratio_se: ratio
                    * ((c.fit.slope_se / c.fit.slope).powi(2)
                        + (snl_fit.slope_se / snl_fit.slope).powi(2))
                    .sqrt(),
                db: to_db(ratio)?,
            })
        })
        .collect::<Result<Vec<_>, SweepError>>()?;
    Ok(SweepResult {
        seed_intensities: seed_intensities.to_vec(),
        curves,
        ratios,
    })
}

/// Evenly spaced seed intensities `start, start + step, …` (`points` values).
pub fn linear_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![start; points];
    }
    (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect()
}

impl SweepResult {
    pub fn curve(&self, label: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.label == label)
    }

    /// Long-format point table `curve, seed_intensity, total_power, noise_power`.
    pub fn write_points_csv<W: std::io::Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["curve", "seed_intensity", "total_power", "noise_power"])?;
        for c in &self.curves {
            // the shot-noise curve shares the full curve's seeds
            for (seed, (x, y)) in self.seed_intensities.iter().zip(&c.points) {
                w.write_record([c.label.clone(), fmt_num(*seed), fmt_num(*x), fmt_num(*y)])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// One row per fit and per slope ratio.
    pub fn write_fits_csv<W: std::io::Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "curve",
            "description",
            "slope",
            "slope_se",
            "intercept",
            "intercept_se",
            "r_squared",
            "ratio",
            "ratio_se",
            "db",
        ])?;
        for c in &self.curves {
            let ratio = self
                .ratios
                .iter()
                .find(|r| r.label.starts_with(&format!("{}/", c.label)));
            let (r, se, db) = ratio.map_or((String::new(), String::new(), String::new()), |r| {
                (fmt_num(r.ratio), fmt_num(r.ratio_se), fmt_num(r.db))
            });
            w.write_record([
                c.label.clone(),
                c.description.clone(),
                fmt_num(c.fit.slope),
                fmt_num(c.fit.slope_se),
                fmt_num(c.fit.intercept),
                fmt_num(c.fit.intercept_se),
                fmt_num(c.fit.r_squared),
                r,
                se,
                db,
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
