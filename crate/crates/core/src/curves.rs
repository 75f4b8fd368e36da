//! Power-law scaling curves `Φ(n) = 1 - a (n + offset)^b`.
//!
//! The fit is ordinary least squares on `(ln(n + offset), ln(1 - score))`.
//! `offset` is the number of demonstrations outside the curve's combo and is
//! fixed before fitting.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{CurveSample, PowerLawFit};
use crate::{Error, Result};

/// Default number of schedule points per curve.
pub const DEFAULT_POINTS_PER_CURVE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Non-negative regression slopes become a flat curve with zero gain.
    #[default]
    FlagZeroSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Floor for `1 - score` before taking the log; keeps perfect scores finite.
    pub epsilon_clamp: f64,
    pub min_points: usize,
    pub degenerate_policy: DegeneratePolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { epsilon_clamp: 1e-6, min_points: 2, degenerate_policy: DegeneratePolicy::FlagZeroSlope }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_clamp > 0.0 && self.epsilon_clamp < 1.0) {
            return Err(Error::InvalidFitConfig("epsilon_clamp must lie in (0, 1)"));
        }
        if self.min_points == 0 {
            return Err(Error::InvalidFitConfig("min_points must be positive"));
        }
        Ok(())
    }
}

/// Log-space coordinates of a sample: `(ln(n + offset), ln(max(1 - score, ε)))`.
pub fn log_coordinates(sample: &CurveSample, offset: u64, epsilon_clamp: f64) -> (f64, f64) {
    let x = libm::log((sample.n + offset) as f64);
    let y = libm::log(f64::max(1.0 - sample.score, epsilon_clamp));
    (x, y)
}

/// Fits `Φ(n) = 1 - a (n + offset)^b` by least squares in log-log space.
pub fn fit_power_law(samples: &[CurveSample], offset: u64, config: &FitConfig) -> Result<PowerLawFit> {
    config.validate()?;
    for (index, s) in samples.iter().enumerate() {
        if !(0.0..=1.0).contains(&s.score) {
            return Err(Error::ScoreOutOfRange { index, score: s.score });
        }
        if s.trials == 0 {
            return Err(Error::ZeroTrials { index });
        }
        if s.n + offset == 0 {
            return Err(Error::ZeroSize { index });
        }
    }
    let mut distinct: Vec<u64> = samples.iter().map(|s| s.n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let needed = config.min_points.max(2);
    if distinct.len() < needed {
        return Err(Error::InsufficientPoints { needed, got: distinct.len() });
    }

    let points: Vec<(f64, f64)> =
        samples.iter().map(|s| log_coordinates(s, offset, config.epsilon_clamp)).collect();
    let count = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / count;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / count;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in &points {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    let b = sxy / sxx;
    let log_a = y_mean - b * x_mean;
    let sse: f64 = points
        .iter()
        .map(|(x, y)| {
            let r = y - (log_a + b * x);
            r * r
        })
        .sum();
    let mean_score = samples.iter().map(|s| s.score).sum::<f64>() / count;

    let degenerate = match config.degenerate_policy {
        DegeneratePolicy::FlagZeroSlope => !(b < 0.0),
    };
    Ok(PowerLawFit {
        a: libm::exp(log_a),
        b,
        offset,
        rmse: libm::sqrt(sse / count),
        degenerate,
        mean_score,
    })
}

impl PowerLawFit {
    /// `clamp(1 - a (n + offset)^b, 0, 1)`, or the stored mean for degenerate fits.
    pub fn predict(&self, n: u64) -> f64 {
        if self.degenerate {
            return self.mean_score.clamp(0.0, 1.0);
        }
        let raw = 1.0 - self.a * libm::pow((n + self.offset) as f64, self.b);
        raw.clamp(0.0, 1.0)
    }

    /// Forward-difference gain per demonstration over a horizon of `budget`:
    /// `(Φ(current_n + K) - Φ(current_n)) / K`. Zero for degenerate fits.
    pub fn expected_slope(&self, current_n: u64, budget: u64) -> f64 {
        if self.degenerate || budget == 0 {
            return 0.0;
        }
        let gain = self.predict(current_n + budget) - self.predict(current_n);
        (gain / budget as f64).max(0.0)
    }
}

pub fn predict(fit: &PowerLawFit, n: u64) -> f64 {
    fit.predict(n)
}

pub fn expected_slope(fit: &PowerLawFit, current_n: u64, budget: u64) -> f64 {
    fit.expected_slope(current_n, budget)
}
