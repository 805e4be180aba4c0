//! Local Outlier Factor on the unit-circle images of times of day, with the
//! cosine distance.
//!
//! Neighbourhoods include every point tied with the k-th nearest neighbour.
//! Duplicate points can make a reachability sum zero; the local density is
//! then infinite, and ratios of two infinite densities count as 1.

use super::circular::{minute_to_hour, to_cartesian};
use super::stats::percentile;
use super::{DetectorError, Score};

pub const DEFAULT_NEIGHBORS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LofModel {
    pub percentile: f64,
    pub n_neighbors: usize,
    pub k: usize,
    pub points: Vec<(f64, f64)>,
    pub k_distance: Vec<f64>,
    pub lrd: Vec<f64>,
    pub training_scores: Vec<f64>,
    pub score_threshold: f64,
}

/// `1 − cos θ` between two unit vectors; exactly zero for identical inputs.
pub fn cosine_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    if a == b {
        return 0.0;
    }
    (1.0 - (a.0 * b.0 + a.1 * b.1)).max(0.0)
}

fn density_ratio(num: f64, den: f64) -> f64 {
    match (num.is_infinite(), den.is_infinite()) {
        (true, true) => 1.0,
        (false, true) => 0.0,
        _ => num / den,
    }
}

/// Neighbour indices (ties included) and the k-distance, given distances
/// from one point to every candidate. `exclude` removes the point itself.
fn neighbourhood(dists: &[f64], k: usize, exclude: Option<usize>) -> (Vec<usize>, f64) {
    let mut sorted: Vec<f64> = dists
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != exclude)
        .map(|(_, &d)| d)
        .collect();
    sorted.sort_by(f64::total_cmp);
    let kd = sorted[k - 1];
    let idx = dists
        .iter()
        .enumerate()
        .filter(|&(j, &d)| Some(j) != exclude && d <= kd)
        .map(|(j, _)| j)
        .collect();
    (idx, kd)
}

fn local_density(neigh: &[usize], dists: &[f64], k_distance: &[f64]) -> f64 {
    let reach: f64 = neigh.iter().map(|&o| k_distance[o].max(dists[o])).sum();
    if reach == 0.0 {
        f64::INFINITY
    } else {
        neigh.len() as f64 / reach
    }
}

fn mean_density(neigh: &[usize], lrd: &[f64]) -> f64 {
    neigh.iter().map(|&o| lrd[o]).sum::<f64>() / neigh.len() as f64
}

impl LofModel {
    pub fn fit(minutes: &[u16], p: f64, n_neighbors: usize) -> Result<Self, DetectorError> {
        let hours: Vec<f64> = minutes.iter().map(|&m| minute_to_hour(m)).collect();
        Self::fit_hours(&hours, p, n_neighbors)
    }

    pub fn fit_hours(hours: &[f64], p: f64, n_neighbors: usize) -> Result<Self, DetectorError> {
        let n = hours.len();
        if n < 3 {
            return Err(DetectorError::NotEnoughData { needed: 3, got: n });
        }
        if n_neighbors == 0 {
            return Err(DetectorError::Parameter("n_neighbors must be at least 1".into()));
        }
        let k = n_neighbors.min(n - 1);
        let points: Vec<(f64, f64)> = hours.iter().map(|&h| to_cartesian(h)).collect();
        let dist: Vec<Vec<f64>> =
            points.iter().map(|&a| points.iter().map(|&b| cosine_distance(a, b)).collect()).collect();
        let neigh: Vec<(Vec<usize>, f64)> = (0..n).map(|i| neighbourhood(&dist[i], k, Some(i))).collect();
        let k_distance: Vec<f64> = neigh.iter().map(|(_, kd)| *kd).collect();
        let lrd: Vec<f64> = (0..n).map(|i| local_density(&neigh[i].0, &dist[i], &k_distance)).collect();
        let training_scores: Vec<f64> =
            (0..n).map(|i| density_ratio(mean_density(&neigh[i].0, &lrd), lrd[i])).collect();
        let score_threshold = percentile(&training_scores, p)?;
        Ok(LofModel {
            percentile: p,
            n_neighbors,
            k,
            points,
            k_distance,
            lrd,
            training_scores,
            score_threshold,
        })
    }

    /// Novelty LOF of a new point against the training set.
    pub fn lof_of(&self, hour: f64) -> f64 {
        let q = to_cartesian(hour);
        let dists: Vec<f64> = self.points.iter().map(|&p| cosine_distance(q, p)).collect();
        let (neigh, _) = neighbourhood(&dists, self.k, None);
        let lrd_q = local_density(&neigh, &dists, &self.k_distance);
        density_ratio(mean_density(&neigh, &self.lrd), lrd_q)
    }

    pub fn score_hour(&self, hour: f64) -> Score {
        let raw = self.lof_of(hour);
        Score { binary: u8::from(raw > self.score_threshold), raw }
    }

    pub fn score(&self, minute: u16) -> Score {
        self.score_hour(minute_to_hour(minute))
    }
}
