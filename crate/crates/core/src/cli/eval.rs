use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::pipeline::ScoredEvent;

/// Which continuous score the ROC sweep runs over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreField {
    /// Positive vote count; the binary decision is the alert flag.
    Votes,
    /// One detector's raw score; the binary decision is its own vote.
    Detector(String),
}

impl FromStr for ScoreField {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "votes" => ScoreField::Votes,
            other => ScoreField::Detector(other.to_string()),
        })
    }
}

impl fmt::Display for ScoreField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreField::Votes => f.write_str("votes"),
            ScoreField::Detector(d) => f.write_str(d),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn detection_rate(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        let n = self.fp + self.tn;
        (n > 0).then(|| self.fp as f64 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub field: String,
    pub events: u64,
    pub positives: u64,
    pub confusion: Confusion,
    pub alert_count: u64,
    #[serde(rename = "DR")]
    pub dr: Option<f64>,
    #[serde(rename = "FPR")]
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
    /// (FPR, TPR) pairs from (0,0) to (1,1). Empty when only one class is present.
    pub roc_points: Vec<(f64, f64)>,
}

/// ROC points for "positive iff score ≥ t" over every distinct score, from
/// the highest threshold down. `None` if either class is absent.
pub fn roc_curve(samples: &[(f64, bool)]) -> Option<Vec<(f64, f64)>> {
    let pos = samples.iter().filter(|s| s.1).count() as f64;
    let neg = samples.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0.total_cmp(&t).is_eq() {
            if sorted[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / neg, tp / pos));
    }
    Some(points)
}

/// Trapezoidal area under a curve given as (x, y) points sorted by x.
pub fn roc_auc(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

pub fn evaluate(
    scored: &[ScoredEvent],
    labels: &HashMap<String, u8>,
    field: &ScoreField,
) -> Result<EvalReport, CliError> {
    let unlabeled: Vec<&str> = scored
        .iter()
        .filter(|s| !labels.contains_key(&s.event_id))
        .map(|s| s.event_id.as_str())
        .collect();
    if !unlabeled.is_empty() {
        let shown = unlabeled.iter().take(20).copied().collect::<Vec<_>>().join(", ");
        let more = if unlabeled.len() > 20 { format!(" (+{} more)", unlabeled.len() - 20) } else { String::new() };
        return Err(CliError::Input(format!("{} unlabeled event(s): {shown}{more}", unlabeled.len())));
    }
    let mut confusion = Confusion::default();
    let mut samples = Vec::with_capacity(scored.len());
    for s in scored {
        let actual = labels[&s.event_id] == 1;
        let (predicted, score) = match field {
            ScoreField::Votes => (s.alert, s.votes as f64),
            ScoreField::Detector(d) => match s.detectors.get(d) {
                Some(v) => (v.binary == 1, v.raw),
                None => continue,
            },
        };
        confusion.add(predicted, actual);
        samples.push((score, actual));
    }
    let roc = roc_curve(&samples);
    Ok(EvalReport {
        field: field.to_string(),
        events: samples.len() as u64,
        positives: confusion.tp + confusion.fn_,
        confusion,
        alert_count: confusion.tp + confusion.fp,
        dr: confusion.detection_rate(),
        fpr: confusion.false_positive_rate(),
        auc: roc.as_deref().map(roc_auc),
        roc_points: roc.unwrap_or_default(),
    })
}

#[derive(Deserialize)]
struct LabelRow {
    #[serde(rename = "eventId")]
    event_id: String,
    label: u8,
}

pub fn read_labels(path: &Path) -> Result<HashMap<String, u8>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = HashMap::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row?;
        if row.label > 1 {
            return Err(CliError::Input(format!("label for {} must be 0 or 1", row.event_id)));
        }
        out.insert(row.event_id, row.label);
    }
    Ok(out)
}

/// Reads a scores file written by `run --scores-out`.
pub fn read_scores(path: &Path) -> Result<Vec<ScoredEvent>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
