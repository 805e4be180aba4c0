//! File-level plumbing around the pipeline: CSV ingestion, the `run` driver,
//! evaluation against labels, and a synthetic log generator.

pub mod eval;
pub mod ingest;
pub mod synth;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::engine::Event;
use crate::pipeline::{PipelineConfig, PipelineError, RunStats, Runtime};

pub use eval::{evaluate, read_labels, read_scores, roc_auc, roc_curve, Confusion, EvalReport, ScoreField};
pub use ingest::{read_events, read_events_file, IngestStats, LogRecord};
pub use synth::{synthesize, write_synth, Injection, Profile, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(PipelineConfig::from_json(&text)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub events: u64,
    pub users: u64,
    pub alerts: u64,
    pub retrains: u64,
    pub skipped: u64,
    pub scored: u64,
    pub late: u64,
    pub malformed: u64,
    pub filtered: u64,
}

impl RunSummary {
    fn new(stats: RunStats, users: usize, scored: u64, ingest: IngestStats) -> Self {
        RunSummary {
            events: stats.events,
            users: users as u64,
            alerts: stats.alerts,
            retrains: stats.retrains,
            skipped: stats.skipped,
            scored,
            late: stats.late,
            malformed: ingest.malformed,
            filtered: ingest.filtered,
        }
    }
}

fn json_line<W: Write + ?Sized, T: Serialize>(w: &mut W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Streams `events` through a fresh runtime, writing one JSON line per alert
/// and, if `scores` is given, one per scored event. Per-event failures are
/// logged and counted.
pub fn run_events<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    config: &PipelineConfig,
    alerts: &mut dyn Write,
    mut scores: Option<&mut dyn Write>,
) -> Result<(Runtime, u64), CliError> {
    let mut rt = Runtime::new(config)?;
    let mut scored = 0;
    for ev in events {
        let report = match rt.process_event(ev) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("skipped {ev:?}: {e}");
                continue;
            }
        };
        for a in &report.alerts {
            json_line(alerts, a)?;
        }
        if let Some(s) = &report.scored {
            scored += 1;
            if let Some(w) = scores.as_deref_mut() {
                json_line(w, s)?;
            }
        }
    }
    Ok((rt, scored))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `run`: input CSV in, alerts (and optionally scores) JSONL out.
pub fn run(
    input: &Path,
    config: &PipelineConfig,
    alerts_out: &Path,
    scores_out: Option<&Path>,
) -> Result<RunSummary, CliError> {
    let (events, ingest) = read_events_file(input, config.activity_filter.as_deref())?;
    let mut alerts = create(alerts_out)?;
    let mut scores = scores_out.map(create).transpose()?;
    let (rt, scored) = run_events(
        &events,
        config,
        &mut alerts,
        scores.as_mut().map(|w| w as &mut dyn Write),
    )?;
    alerts.flush()?;
    if let Some(w) = scores.as_mut() {
        w.flush()?;
    }
    Ok(RunSummary::new(rt.stats(), rt.users().len(), scored, ingest))
}

/// `dump-state`: canonical dump of the whole tree after consuming `input`.
pub fn dump_state(input: &Path, config: &PipelineConfig) -> Result<String, CliError> {
    let (events, _) = read_events_file(input, config.activity_filter.as_deref())?;
    let (rt, _) = run_events(&events, config, &mut std::io::sink(), None)?;
    Ok(rt.dump()?)
}
