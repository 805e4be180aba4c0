//! Wrapped-Gaussian kernel density over the 24 h circle.

use std::f64::consts::PI;

use super::circular::{minute_to_hour, HOURS_PER_DAY};
use super::stats::percentile;
use super::{DetectorError, Score};

pub const BANDWIDTH_FLOOR_HOURS: f64 = 0.1;
const SHIFTS: [f64; 3] = [-HOURS_PER_DAY, 0.0, HOURS_PER_DAY];

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    pub percentile: f64,
    pub bandwidth: f64,
    pub samples: Vec<f64>,
    pub density_threshold: f64,
}

fn std_normal(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Silverman's rule of thumb, floored at 0.1 h.
pub fn silverman_bandwidth(hours: &[f64]) -> Result<f64, DetectorError> {
    let n = hours.len() as f64;
    let mean = hours.iter().sum::<f64>() / n;
    let sd = (hours.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = percentile(hours, 75.0)? - percentile(hours, 25.0)?;
    let spread = sd.min(iqr / 1.34);
    Ok((0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR_HOURS))
}

impl KdeModel {
    pub fn fit(minutes: &[u16], p: f64) -> Result<Self, DetectorError> {
        let hours: Vec<f64> = minutes.iter().map(|&m| minute_to_hour(m)).collect();
        Self::fit_hours(&hours, p)
    }

    pub fn fit_hours(hours: &[f64], p: f64) -> Result<Self, DetectorError> {
        if hours.len() < 2 {
            return Err(DetectorError::NotEnoughData { needed: 2, got: hours.len() });
        }
        let bandwidth = silverman_bandwidth(hours)?;
        let mut model = KdeModel { percentile: p, bandwidth, samples: hours.to_vec(), density_threshold: 0.0 };
        let densities: Vec<f64> = hours.iter().map(|&h| model.density(h)).collect();
        model.density_threshold = percentile(&densities, p)?;
        Ok(model)
    }

    pub fn density(&self, hour: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .samples
            .iter()
            .map(|&x| SHIFTS.iter().map(|s| std_normal((hour - x + s) / h)).sum::<f64>())
            .sum();
        sum / (self.samples.len() as f64 * h)
    }

    pub fn score_hour(&self, hour: f64) -> Score {
        let f = self.density(hour);
        Score { binary: u8::from(f < self.density_threshold), raw: self.density_threshold - f }
    }

    pub fn score(&self, minute: u16) -> Score {
        self.score_hour(minute_to_hour(minute))
    }
}
