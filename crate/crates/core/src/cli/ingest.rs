use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::engine::Event;
use crate::pipeline::EVENT_NAME;

pub const HEADER: [&str; 5] = ["id", "date", "user", "pc", "activity"];

/// One row of a logon log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub id: String,
    pub date: String,
    pub user: String,
    pub pc: String,
    pub activity: String,
}

impl LogRecord {
    /// `e(user, date, id)`
    pub fn to_event(&self) -> Event {
        Event::new(
            EVENT_NAME,
            vec![self.user.as_str().into(), self.date.as_str().into(), self.id.as_str().into()],
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows: u64,
    pub retained: u64,
    pub malformed: u64,
    pub filtered: u64,
}

/// Reads a logon CSV into events, preserving row order. Rows with missing
/// fields are skipped and counted; `activity_filter` keeps only rows whose
/// activity matches (case-insensitive).
pub fn read_events<R: Read>(
    reader: R,
    activity_filter: Option<&str>,
) -> Result<(Vec<Event>, IngestStats), CliError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let missing: Vec<&str> = HEADER.iter().copied().filter(|h| !headers.iter().any(|c| c == *h)).collect();
    if !missing.is_empty() {
        return Err(CliError::Input(format!("missing column(s): {}", missing.join(", "))));
    }
    let mut stats = IngestStats::default();
    let mut events = Vec::new();
    for row in rdr.deserialize::<LogRecord>() {
        stats.rows += 1;
        let rec = match row {
            Ok(r) if !r.id.is_empty() && !r.date.is_empty() && !r.user.is_empty() => r,
            _ => {
                stats.malformed += 1;
                continue;
            }
        };
        if let Some(f) = activity_filter {
            if !rec.activity.eq_ignore_ascii_case(f) {
                stats.filtered += 1;
                continue;
            }
        }
        stats.retained += 1;
        events.push(rec.to_event());
    }
    Ok((events, stats))
}

pub fn read_events_file(path: &Path, activity_filter: Option<&str>) -> Result<(Vec<Event>, IngestStats), CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_events(file, activity_filter)
}
