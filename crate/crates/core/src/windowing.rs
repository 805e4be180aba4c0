//! Per-user sliding windows over days, ISO weeks or event counts, and the
//! training-data map they govern.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DATE_FORMAT: &str = "%m/%d/%Y %H:%M:%S";

const ISO_FORMATS: &[&str] = &["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindowError {
    #[error("unparseable timestamp `{0}`")]
    BadTimestamp(String),
    #[error("invalid window configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowType {
    Day,
    Week,
    Instance,
}

impl fmt::Display for WindowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowType::Day => "day",
            WindowType::Week => "week",
            WindowType::Instance => "instance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_size: u32,
    pub sliding_size: u32,
    #[serde(rename = "type")]
    pub window_type: WindowType,
}

impl WindowConfig {
    pub fn new(window_size: u32, sliding_size: u32, window_type: WindowType) -> Result<Self, WindowError> {
        let cfg = WindowConfig { window_size, sliding_size, window_type };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if self.window_size == 0 {
            return Err(WindowError::Config("window_size must be at least 1".into()));
        }
        if self.sliding_size > self.window_size {
            return Err(WindowError::Config(format!(
                "sliding_size {} exceeds window_size {}",
                self.sliding_size, self.window_size
            )));
        }
        Ok(())
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { window_size: 10, sliding_size: 5, window_type: WindowType::Week }
    }
}

/// Parse with `format`, falling back to the ISO-8601 layouts.
pub fn parse_timestamp(text: &str, format: &str) -> Result<NaiveDateTime, WindowError> {
    let text = text.trim();
    std::iter::once(format)
        .chain(ISO_FORMATS.iter().copied())
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .ok_or_else(|| WindowError::BadTimestamp(text.to_string()))
}

pub fn minute_of_day(ts: &NaiveDateTime) -> u16 {
    (ts.hour() * 60 + ts.minute()) as u16
}

/// `YYYYDDD` for days, `YYYYWW` (ISO week-year and week) for weeks.
pub fn compute_period(ts: &NaiveDateTime, window_type: WindowType) -> Option<i64> {
    match window_type {
        WindowType::Day => Some(ts.year() as i64 * 1000 + ts.ordinal() as i64),
        WindowType::Week => {
            let w = ts.iso_week();
            Some(w.year() as i64 * 100 + w.week() as i64)
        }
        WindowType::Instance => None,
    }
}

/// Sliding-window bookkeeping. `version` counts the first fill and every
/// slide; detectors retrain when it moves past their trained version.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    config: WindowConfig,
    active_periods: BTreeSet<i64>,
    instance_count: u64,
    version: i64,
    filled: bool,
    evicted_through: Option<i64>,
    dropped: u64,
}

impl Window {
    pub fn new(config: WindowConfig) -> Self {
        Window {
            config,
            active_periods: BTreeSet::new(),
            instance_count: 0,
            version: 0,
            filled: false,
            evicted_through: None,
            dropped: 0,
        }
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    pub fn window_type(&self) -> WindowType {
        self.config.window_type
    }

    pub fn sliding_size(&self) -> u32 {
        self.config.sliding_size
    }

    pub fn version(&self) -> i64 {
        self.version
    }

    pub fn active_periods(&self) -> &BTreeSet<i64> {
        &self.active_periods
    }

    pub fn instance_count(&self) -> u64 {
        self.instance_count
    }

    /// Events dropped because their period had already been evicted.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn is_evicted(&self, period: i64) -> bool {
        self.evicted_through.is_some_and(|p| period <= p)
    }

    fn capacity(&self) -> u64 {
        (self.config.window_size + self.config.sliding_size) as u64
    }

    /// Registers a period; returns the periods whose data must be deleted.
    pub fn add_period(&mut self, period: i64) -> Vec<i64> {
        if !self.active_periods.insert(period) {
            return Vec::new();
        }
        let len = self.active_periods.len() as u64;
        if !self.filled && len >= self.config.window_size as u64 {
            self.filled = true;
            self.version += 1;
        }
        if self.config.sliding_size > 0 && len == self.capacity() {
            let old: Vec<i64> = self
                .active_periods
                .iter()
                .take(self.config.sliding_size as usize)
                .copied()
                .collect();
            for p in &old {
                self.active_periods.remove(p);
            }
            self.evicted_through = old.last().copied().max(self.evicted_through);
            self.version += 1;
            return old;
        }
        Vec::new()
    }

    /// Counts one event; `true` means the caller must drop the oldest
    /// `sliding_size` elements of its buffer.
    pub fn add_instance(&mut self, _minute: u16) -> bool {
        self.instance_count += 1;
        if !self.filled && self.instance_count >= self.config.window_size as u64 {
            self.filled = true;
            self.version += 1;
        }
        if self.config.sliding_size > 0 && self.instance_count == self.capacity() {
            self.instance_count -= self.config.sliding_size as u64;
            self.version += 1;
            return true;
        }
        false
    }
}

/// Minutes of day per period. Instance windows use the single key 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingData {
    periods: BTreeMap<i64, Vec<u16>>,
}

impl TrainingData {
    pub fn new() -> Self {
        TrainingData::default()
    }

    pub fn periods(&self) -> &BTreeMap<i64, Vec<u16>> {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All samples in ascending period order, stable within a period.
    pub fn training_set(&self) -> Vec<u16> {
        self.periods.values().flatten().copied().collect()
    }
}

impl FromIterator<(i64, Vec<u16>)> for TrainingData {
    fn from_iter<I: IntoIterator<Item = (i64, Vec<u16>)>>(iter: I) -> Self {
        TrainingData { periods: iter.into_iter().collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    Added { minute: u16, period: i64 },
    /// The period was already evicted; the sample was discarded.
    Late { period: i64 },
}

/// Adds one event to the training set and applies the window's slide rule.
pub fn formatting_data(data: &mut TrainingData, window: &mut Window, event_date: &NaiveDateTime) -> Ingest {
    let minute = minute_of_day(event_date);
    match compute_period(event_date, window.window_type()) {
        Some(period) => {
            if window.is_evicted(period) {
                window.dropped += 1;
                return Ingest::Late { period };
            }
            data.periods.entry(period).or_default().push(minute);
            for p in window.add_period(period) {
                data.periods.remove(&p);
            }
            Ingest::Added { minute, period }
        }
        None => {
            let buf = data.periods.entry(0).or_default();
            buf.push(minute);
            if window.add_instance(minute) {
                let n = (window.sliding_size() as usize).min(buf.len());
                buf.drain(..n);
            }
            Ingest::Added { minute, period: 0 }
        }
    }
}
