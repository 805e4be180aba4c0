//! k-means over times of day, using the circular hour distance and
//! circular-mean centroid updates. The number of clusters is chosen by
//! silhouette.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::circular::{circ_distance, circular_mean, minute_to_hour};
use super::stats::silhouette;
use super::{DetectorError, Score};

/// Lower bound on a cluster's spread when computing z-scores (15 minutes).
pub const SIGMA_FLOOR_HOURS: f64 = 0.25;
pub const MAX_K: usize = 10;
pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE_HOURS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid: f64,
    pub sigma: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub threshold: f64,
    pub clusters: Vec<Cluster>,
    pub chosen_k: usize,
    pub silhouette: f64,
}

struct Clustering {
    centroids: Vec<f64>,
    assignment: Vec<usize>,
}

fn nearest(centroids: &[f64], h: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = circ_distance(h, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_centroids(hours: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = vec![hours[rng.random_range(0..hours.len())]];
    let mut d2: Vec<f64> = hours.iter().map(|&h| circ_distance(h, centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        // guard against landing on a zero-weight tail after rounding
        if d2[pick] <= 0.0 {
            pick = d2.iter().rposition(|&w| w > 0.0).expect("total > 0");
        }
        let c = hours[pick];
        centroids.push(c);
        for (w, &h) in d2.iter_mut().zip(hours) {
            *w = w.min(circ_distance(h, c).powi(2));
        }
    }
    centroids
}

fn lloyd(hours: &[f64], k: usize, seed: u64) -> Clustering {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    let mut centroids = seed_centroids(hours, k, &mut rng);
    let mut assignment = vec![0; hours.len()];
    for _ in 0..MAX_ITERATIONS {
        for (a, &h) in assignment.iter_mut().zip(hours) {
            *a = nearest(&centroids, h).0;
        }
        let mut shift: f64 = 0.0;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<f64> =
                hours.iter().zip(&assignment).filter(|(_, &a)| a == c).map(|(&h, _)| h).collect();
            if let Some(m) = circular_mean(&members) {
                shift = shift.max(circ_distance(*centroid, m));
                *centroid = m;
            }
        }
        if shift < TOLERANCE_HOURS {
            break;
        }
    }
    for (a, &h) in assignment.iter_mut().zip(hours) {
        *a = nearest(&centroids, h).0;
    }
    // drop clusters that ended up empty and relabel densely
    let mut used = vec![false; centroids.len()];
    for &a in &assignment {
        used[a] = true;
    }
    let mut remap = vec![0; centroids.len()];
    let mut kept = Vec::new();
    for (i, &c) in centroids.iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(c);
        }
    }
    let assignment = assignment.into_iter().map(|a| remap[a]).collect();
    Clustering { centroids: kept, assignment }
}

impl KMeansModel {
    pub fn fit(minutes: &[u16], threshold: f64, seed: u64) -> Result<Self, DetectorError> {
        let hours: Vec<f64> = minutes.iter().map(|&m| minute_to_hour(m)).collect();
        Self::fit_hours(&hours, threshold, seed)
    }

    pub fn fit_hours(hours: &[f64], threshold: f64, seed: u64) -> Result<Self, DetectorError> {
        let n = hours.len();
        if n < 3 {
            return Err(DetectorError::NotEnoughData { needed: 3, got: n });
        }
        let mut best: Option<(f64, usize, Clustering)> = None;
        for k in 2..=MAX_K.min(n - 1) {
            let clustering = lloyd(hours, k, seed);
            let score = if clustering.centroids.len() >= 2 {
                silhouette(hours, &clustering.assignment, circ_distance)?
            } else {
                0.0
            };
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, k, clustering));
            }
        }
        let (score, chosen_k, clustering) = best.expect("k range is non-empty for n >= 3");
        let clusters = clustering
            .centroids
            .iter()
            .enumerate()
            .map(|(c, &centroid)| {
                let dists: Vec<f64> = hours
                    .iter()
                    .zip(&clustering.assignment)
                    .filter(|(_, &a)| a == c)
                    .map(|(&h, _)| circ_distance(h, centroid))
                    .collect();
                let sigma = (dists.iter().map(|d| d * d).sum::<f64>() / dists.len() as f64).sqrt();
                Cluster { centroid, sigma, size: dists.len() }
            })
            .collect();
        Ok(KMeansModel { threshold, clusters, chosen_k, silhouette: score })
    }

    /// Absolute z-score of `hour` against its nearest cluster.
    pub fn z_score(&self, hour: f64) -> f64 {
        let centroids: Vec<f64> = self.clusters.iter().map(|c| c.centroid).collect();
        let (idx, d) = nearest(&centroids, hour);
        d / self.clusters[idx].sigma.max(SIGMA_FLOOR_HOURS)
    }

    pub fn score_hour(&self, hour: f64) -> Score {
        let z = self.z_score(hour);
        Score { binary: u8::from(z > self.threshold), raw: z }
    }

    pub fn score(&self, minute: u16) -> Score {
        self.score_hour(minute_to_hour(minute))
    }
}
