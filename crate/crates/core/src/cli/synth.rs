use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::ingest::LogRecord;
use super::CliError;
use crate::windowing::DEFAULT_DATE_FORMAT;

/// Shape of a user's normal logon times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// Fixed morning arrival time for the whole stream.
    Office,
    /// Arrival time creeps later week by week.
    #[default]
    Drift,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "office" => Ok(Profile::Office),
            "drift" => Ok(Profile::Drift),
            other => Err(format!("unknown profile `{other}` (expected office or drift)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Office => "office",
            Profile::Drift => "drift",
        })
    }
}

/// How anomalous logons are spread over the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Injection {
    /// Every event is independently anomalous with probability `rate`.
    Uniform,
    /// Each user has one burst of after-hours activity in the second half of
    /// the stream; inside the burst events are anomalous often enough that
    /// the overall fraction is still `rate`.
    #[default]
    Episode,
}

impl FromStr for Injection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Injection::Uniform),
            "episode" => Ok(Injection::Episode),
            other => Err(format!("unknown injection `{other}` (expected uniform or episode)")),
        }
    }
}

impl fmt::Display for Injection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Injection::Uniform => "uniform",
            Injection::Episode => "episode",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub weeks: usize,
    pub rate: f64,
    pub seed: u64,
    pub profile: Profile,
    pub injection: Injection,
    /// First day of the stream; should be a Monday.
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 50,
            weeks: 26,
            rate: 0.05,
            seed: 42,
            profile: Profile::Drift,
            injection: Injection::Episode,
            start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
        }
    }
}

/// Range of a user's mean arrival hour.
const CENTER_HOURS: (f64, f64) = (8.0, 10.0);
/// Range of a user's arrival spread, in hours.
const SPREAD_HOURS: (f64, f64) = (0.75, 1.5);
/// Range of weekly drift under [`Profile::Drift`], in hours.
const DRIFT_HOURS: (f64, f64) = (0.15, 0.25);
/// Logons per working day.
const EVENTS_PER_DAY: (u32, u32) = (1, 4);
/// Anomalies fall in [0, OFF_HOURS_END).
const OFF_HOURS_END: f64 = 5.0;
/// Upper bound on the in-episode anomaly probability; episodes lengthen
/// until the requested rate fits under it.
const MAX_EPISODE_RATE: f64 = 0.5;
/// Normal logons are clamped to this band so they never land in off-hours.
const NORMAL_BAND: (f64, f64) = (5.5, 23.9);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEvent {
    pub record: LogRecord,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub events: u64,
    pub anomalies: u64,
    pub users: u64,
}

fn validate(cfg: &SynthConfig) -> Result<(), CliError> {
    if cfg.users == 0 || cfg.weeks == 0 {
        return Err(CliError::Input("users and weeks must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.rate) {
        return Err(CliError::Input(format!("rate {} must lie in [0, 1)", cfg.rate)));
    }
    Ok(())
}

/// Weeks per episode and the anomaly probability inside one.
fn episode_shape(cfg: &SynthConfig) -> (usize, f64) {
    let weeks = cfg.weeks as f64;
    let len = ((cfg.rate * weeks / MAX_EPISODE_RATE).ceil() as usize).clamp(1, cfg.weeks);
    (len, (cfg.rate * weeks / len as f64).min(1.0))
}

fn at_hour(day: NaiveDate, hour: f64) -> NaiveDateTime {
    let secs = (hour * 3600.0).floor() as i64;
    day.and_hms_opt(0, 0, 0).expect("midnight") + Duration::seconds(secs.clamp(0, 86_399))
}

/// Generates a labelled weekday logon stream, sorted by time, with ids
/// assigned in that order.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<SynthEvent>, CliError> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<(NaiveDateTime, usize, LogRecord, u8)> = Vec::new();
    for u in 0..cfg.users {
        let user = format!("U{u:03}");
        let pc = format!("PC-{:04}", rng.random_range(0..10_000));
        let center = rng.random_range(CENTER_HOURS.0..CENTER_HOURS.1);
        let spread = rng.random_range(SPREAD_HOURS.0..SPREAD_HOURS.1);
        let drift = match cfg.profile {
            Profile::Office => 0.0,
            Profile::Drift => rng.random_range(DRIFT_HOURS.0..DRIFT_HOURS.1),
        };
        let (episode_len, episode_rate) = episode_shape(cfg);
        let latest = cfg.weeks - episode_len;
        let episode_start = rng.random_range(latest.min(cfg.weeks / 2)..=latest);
        for week in 0..cfg.weeks {
            let rate = match cfg.injection {
                Injection::Uniform => cfg.rate,
                Injection::Episode if (episode_start..episode_start + episode_len).contains(&week) => episode_rate,
                Injection::Episode => 0.0,
            };
            let normal = Normal::new(center + drift * week as f64, spread).expect("positive spread");
            for weekday in 0..5 {
                let day = cfg.start + Duration::days((week * 7 + weekday) as i64);
                let n = rng.random_range(EVENTS_PER_DAY.0..=EVENTS_PER_DAY.1);
                for _ in 0..n {
                    let anomalous = rng.random_bool(rate);
                    let hour = if anomalous {
                        rng.random_range(0.0..OFF_HOURS_END)
                    } else {
                        normal.sample(&mut rng).clamp(NORMAL_BAND.0, NORMAL_BAND.1)
                    };
                    let ts = at_hour(day, hour);
                    let record = LogRecord {
                        id: String::new(),
                        date: ts.format(DEFAULT_DATE_FORMAT).to_string(),
                        user: user.clone(),
                        pc: pc.clone(),
                        activity: "Logon".into(),
                    };
                    rows.push((ts, u, record, u8::from(anomalous)));
                }
            }
        }
    }
    // stable: same-second events of one user keep generation order
    rows.sort_by_key(|r| (r.0, r.1));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, mut record, label))| {
            record.id = format!("E{:07}", i + 1);
            SynthEvent { record, label }
        })
        .collect())
}

pub fn write_events<W: Write>(events: &[SynthEvent], w: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    for e in events {
        wtr.serialize(&e.record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_labels<W: Write>(events: &[SynthEvent], w: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["eventId", "label"])?;
    for e in events {
        wtr.write_record([e.record.id.as_str(), if e.label == 1 { "1" } else { "0" }])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_synth(cfg: &SynthConfig, events_path: &Path, labels_path: &Path) -> Result<SynthSummary, CliError> {
    let events = synthesize(cfg)?;
    let open = |p: &Path| {
        File::create(p).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    };
    write_events(&events, open(events_path)?)?;
    write_labels(&events, open(labels_path)?)?;
    Ok(SynthSummary {
        events: events.len() as u64,
        anomalies: events.iter().filter(|e| e.label == 1).count() as u64,
        users: cfg.users as u64,
    })
}
