//! Unsupervised detectors over times of day and the common interface the
//! pipeline drives them through.

pub mod circular;
pub mod kde;
pub mod kmeans;
pub mod lof;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub use circular::{circ_distance, to_cartesian};
pub use kde::KdeModel;
pub use kmeans::KMeansModel;
pub use lof::LofModel;
pub use stats::{percentile, silhouette};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("not enough data: need {needed}, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("detector `{0}` has not been trained")]
    Untrained(String),
    #[error("unknown detector `{0}`")]
    Unknown(String),
}

/// Binary decision plus the continuous score behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub binary: u8,
    pub raw: f64,
}

/// Train/score interface shared by every detector.
///
/// `fit_partial` refits from the current window snapshot and records the
/// window version it was trained on; `trained_version` is −1 until then.
pub trait Detector: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    /// Smallest training set the model can be fitted on.
    fn min_samples(&self) -> usize;
    fn fit_partial(&mut self, minutes: &[u16], version: i64) -> Result<(), DetectorError>;
    fn score_partial(&self, minute: u16) -> Result<Score, DetectorError>;
    fn trained_version(&self) -> i64;
    fn clone_box(&self) -> Box<dyn Detector>;
}

impl Clone for Box<dyn Detector> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

fn warn_range(name: &str, value: f64, lo: f64, hi: f64) {
    if !(lo..=hi).contains(&value) {
        log::warn!("{name} = {value} is outside the recommended range [{lo}, {hi}]");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeParams {
    pub kde_parameter: f64,
}

impl Default for KdeParams {
    fn default() -> Self {
        KdeParams { kde_parameter: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansParams {
    pub kmeans_parameter: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams { kmeans_parameter: 1.5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LofParams {
    pub lof_parameter: f64,
    pub n_neighbors: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        LofParams { lof_parameter: 95.0, n_neighbors: lof::DEFAULT_NEIGHBORS }
    }
}

macro_rules! detector_impl {
    ($ty:ident, $model:ty, $name:literal, $min:expr, |$p:ident, $m:ident| $fit:expr) => {
        #[derive(Debug, Clone)]
        pub struct $ty {
            pub params: <$model as HasParams>::Params,
            pub model: Option<$model>,
            trained_version: i64,
        }

        impl $ty {
            pub fn new(params: <$model as HasParams>::Params) -> Self {
                $ty { params, model: None, trained_version: -1 }
            }
        }

        impl Detector for $ty {
            fn name(&self) -> &'static str {
                $name
            }

            fn min_samples(&self) -> usize {
                $min
            }

            fn fit_partial(&mut self, minutes: &[u16], version: i64) -> Result<(), DetectorError> {
                let $p = &self.params;
                let $m = minutes;
                self.model = Some($fit?);
                self.trained_version = version;
                Ok(())
            }

            fn score_partial(&self, minute: u16) -> Result<Score, DetectorError> {
                self.model
                    .as_ref()
                    .map(|m| m.score(minute))
                    .ok_or_else(|| DetectorError::Untrained($name.into()))
            }

            fn trained_version(&self) -> i64 {
                self.trained_version
            }

            fn clone_box(&self) -> Box<dyn Detector> {
                Box::new(self.clone())
            }
        }
    };
}

pub trait HasParams {
    type Params;
}

impl HasParams for KdeModel {
    type Params = KdeParams;
}

impl HasParams for KMeansModel {
    type Params = KMeansParams;
}

impl HasParams for LofModel {
    type Params = LofParams;
}

detector_impl!(KdeDetector, KdeModel, "kde", 2, |p, m| KdeModel::fit(m, p.kde_parameter));
detector_impl!(KMeansDetector, KMeansModel, "kmeans", 3, |p, m| KMeansModel::fit(
    m,
    p.kmeans_parameter,
    p.seed
));
detector_impl!(LofDetector, LofModel, "lof", 3, |p, m| LofModel::fit(m, p.lof_parameter, p.n_neighbors));

type Builder = fn(&Json) -> Result<Box<dyn Detector>, DetectorError>;

fn parse<T: serde::de::DeserializeOwned>(name: &str, params: &Json) -> Result<T, DetectorError> {
    let params = if params.is_null() { Json::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(params).map_err(|e| DetectorError::Parameter(format!("{name}: {e}")))
}

fn build_kde(params: &Json) -> Result<Box<dyn Detector>, DetectorError> {
    let p: KdeParams = parse("kde", params)?;
    warn_range("kde_parameter", p.kde_parameter, 0.5, 5.0);
    Ok(Box::new(KdeDetector::new(p)))
}

fn build_kmeans(params: &Json) -> Result<Box<dyn Detector>, DetectorError> {
    let p: KMeansParams = parse("kmeans", params)?;
    warn_range("kmeans_parameter", p.kmeans_parameter, 1.5, 2.5);
    Ok(Box::new(KMeansDetector::new(p)))
}

fn build_lof(params: &Json) -> Result<Box<dyn Detector>, DetectorError> {
    let p: LofParams = parse("lof", params)?;
    warn_range("lof_parameter", p.lof_parameter, 75.0, 95.0);
    if p.n_neighbors == 0 {
        return Err(DetectorError::Parameter("lof: n_neighbors must be at least 1".into()));
    }
    Ok(Box::new(LofDetector::new(p)))
}

/// Name → constructor table for the detectors a configuration may list.
#[derive(Clone)]
pub struct DetectorRegistry {
    builders: BTreeMap<String, Builder>,
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        let mut r = DetectorRegistry { builders: BTreeMap::new() };
        r.register("kde", build_kde);
        r.register("kmeans", build_kmeans);
        r.register("lof", build_lof);
        r
    }
}

impl DetectorRegistry {
    pub fn register(&mut self, name: &str, builder: Builder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &Json) -> Result<Box<dyn Detector>, DetectorError> {
        let builder = self.builders.get(name).ok_or_else(|| DetectorError::Unknown(name.to_string()))?;
        builder(params)
    }

    /// Build every configured detector, keyed by name.
    pub fn build_all(
        &self,
        config: &BTreeMap<String, Json>,
    ) -> Result<BTreeMap<String, Box<dyn Detector>>, DetectorError> {
        config.iter().map(|(name, params)| Ok((name.clone(), self.build(name, params)?))).collect()
    }
}

/// The three built-in detectors, untrained.
pub fn init_map(
    kmeans: KMeansParams,
    kde: KdeParams,
    lof: LofParams,
) -> BTreeMap<String, Box<dyn Detector>> {
    let mut map: BTreeMap<String, Box<dyn Detector>> = BTreeMap::new();
    map.insert("kde".into(), Box::new(KdeDetector::new(kde)));
    map.insert("kmeans".into(), Box::new(KMeansDetector::new(kmeans)));
    map.insert("lof".into(), Box::new(LofDetector::new(lof)));
    map
}
