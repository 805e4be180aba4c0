//! Python bindings: the streaming pipeline, the three detectors, voting,
//! synthetic data and evaluation.

use std::collections::HashMap;
use std::path::PathBuf;

use astd_anomaly::cli::{self, CliError, EvalReport, ScoreField, SynthConfig};
use astd_anomaly::detectors::{self, KMeansModel, KdeModel, LofModel};
use astd_anomaly::engine::Key;
use astd_anomaly::ensemble::{majority_vote as vote, Alert, ScoreBoard};
use astd_anomaly::pipeline::{PipelineConfig, Runtime, ScoredEvent};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn check_hour(h: f64) -> PyResult<f64> {
    if (0.0..24.0).contains(&h) {
        Ok(h)
    } else {
        Err(PyValueError::new_err(format!("hour {h} outside [0, 24)")))
    }
}

fn check_hours(hours: &[f64]) -> PyResult<()> {
    hours.iter().try_for_each(|&h| check_hour(h).map(drop))
}

#[pyfunction]
fn circ_distance(a: f64, b: f64) -> PyResult<f64> {
    Ok(detectors::circ_distance(check_hour(a)?, check_hour(b)?))
}

#[pyfunction]
fn percentile(values: Vec<f64>, p: f64) -> PyResult<f64> {
    detectors::percentile(&values, p).map_err(value_err)
}

/// Positive count when strictly more than half of `scores` are 1, else None.
#[pyfunction]
fn majority_vote(scores: Vec<u8>) -> Option<u32> {
    let mut board: ScoreBoard = scores.into_iter().collect();
    vote(&mut board, &mut Vec::new(), "", "", "").map(|a| a.votes)
}

#[pyclass(name = "Kde", frozen)]
struct PyKde(KdeModel);

#[pymethods]
impl PyKde {
    #[new]
    fn new(hours: Vec<f64>, percentile: f64) -> PyResult<Self> {
        check_hours(&hours)?;
        KdeModel::fit_hours(&hours, percentile).map(PyKde).map_err(value_err)
    }

    fn density(&self, hour: f64) -> f64 {
        self.0.density(hour)
    }

    /// (binary, raw)
    fn score(&self, hour: f64) -> PyResult<(u8, f64)> {
        let s = self.0.score_hour(check_hour(hour)?);
        Ok((s.binary, s.raw))
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.0.bandwidth
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.0.density_threshold
    }
}

#[pyclass(name = "KMeans", frozen)]
struct PyKMeans(KMeansModel);

#[pymethods]
impl PyKMeans {
    #[new]
    #[pyo3(signature = (hours, threshold, seed = 0))]
    fn new(hours: Vec<f64>, threshold: f64, seed: u64) -> PyResult<Self> {
        check_hours(&hours)?;
        KMeansModel::fit_hours(&hours, threshold, seed).map(PyKMeans).map_err(value_err)
    }

    fn score(&self, hour: f64) -> PyResult<(u8, f64)> {
        let s = self.0.score_hour(check_hour(hour)?);
        Ok((s.binary, s.raw))
    }

    #[getter]
    fn centroids(&self) -> Vec<f64> {
        self.0.clusters.iter().map(|c| c.centroid).collect()
    }

    #[getter]
    fn chosen_k(&self) -> usize {
        self.0.chosen_k
    }
}

#[pyclass(name = "Lof", frozen)]
struct PyLof(LofModel);

#[pymethods]
impl PyLof {
    #[new]
    #[pyo3(signature = (hours, percentile, n_neighbors = 20))]
    fn new(hours: Vec<f64>, percentile: f64, n_neighbors: usize) -> PyResult<Self> {
        check_hours(&hours)?;
        LofModel::fit_hours(&hours, percentile, n_neighbors).map(PyLof).map_err(value_err)
    }

    fn score(&self, hour: f64) -> PyResult<(u8, f64)> {
        let s = self.0.score_hour(check_hour(hour)?);
        Ok((s.binary, s.raw))
    }

    #[getter]
    fn training_scores(&self) -> Vec<f64> {
        self.0.training_scores.clone()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.0.score_threshold
    }
}

fn scored_dict<'py>(py: Python<'py>, s: &ScoredEvent) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("event_id", &s.event_id)?;
    d.set_item("user_id", &s.user_id)?;
    d.set_item("event_date", &s.event_date)?;
    d.set_item("votes", s.votes)?;
    d.set_item("cast", s.cast)?;
    d.set_item("alert", s.alert)?;
    let dets = PyDict::new(py);
    for (name, v) in &s.detectors {
        dets.set_item(name, (v.binary, v.raw))?;
    }
    d.set_item("detectors", dets)?;
    Ok(d)
}

fn alert_dict<'py>(py: Python<'py>, a: &Alert) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("event_id", &a.event_id)?;
    d.set_item("user_id", &a.user_id)?;
    d.set_item("event_date", &a.event_date)?;
    d.set_item("votes", a.votes)?;
    Ok(d)
}

fn config_from(json: Option<&str>) -> PyResult<PipelineConfig> {
    json.map_or_else(|| Ok(PipelineConfig::default()), |j| PipelineConfig::from_json(j).map_err(value_err))
}

/// Per-user streaming detector. `config` is the JSON configuration text.
#[pyclass(name = "Pipeline", unsendable)]
struct PyPipeline(Runtime);

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        Runtime::new(&config_from(config)?).map(PyPipeline).map_err(value_err)
    }

    /// Feeds one logon. Returns the scored event as a dict, or None while
    /// the user's detectors are untrained.
    fn process<'py>(
        &mut self,
        py: Python<'py>,
        user: &str,
        date: &str,
        event_id: &str,
    ) -> PyResult<Option<Bound<'py, PyDict>>> {
        let report = self.0.process(user, date, event_id).map_err(value_err)?;
        report.scored.as_ref().map(|s| scored_dict(py, s)).transpose()
    }

    fn alerts<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0.alerts().iter().map(|a| alert_dict(py, a)).collect()
    }

    fn users(&self) -> Vec<String> {
        let mut users: Vec<String> = self
            .0
            .users()
            .into_iter()
            .map(|k| match k {
                Key::Text(s) => s,
                Key::Int(i) => i.to_string(),
            })
            .collect();
        users.sort();
        users
    }

    fn stats(&self) -> HashMap<&'static str, u64> {
        let s = self.0.stats();
        HashMap::from([
            ("events", s.events),
            ("processed", s.processed),
            ("skipped", s.skipped),
            ("alerts", s.alerts),
            ("retrains", s.retrains),
            ("late", s.late),
        ])
    }

    fn dump(&self) -> PyResult<String> {
        self.0.dump().map_err(value_err)
    }
}

fn synth_config(users: usize, weeks: usize, rate: f64, seed: u64, profile: &str, injection: &str) -> PyResult<SynthConfig> {
    Ok(SynthConfig {
        users,
        weeks,
        rate,
        seed,
        profile: profile.parse().map_err(PyValueError::new_err)?,
        injection: injection.parse().map_err(PyValueError::new_err)?,
        ..SynthConfig::default()
    })
}

type SynthRow = (String, String, String, String, String, u8);

/// Labelled synthetic logons as (id, date, user, pc, activity, label) tuples.
#[pyfunction]
#[pyo3(signature = (users = 50, weeks = 26, rate = 0.05, seed = 42, profile = "drift", injection = "episode"))]
fn synth(
    users: usize,
    weeks: usize,
    rate: f64,
    seed: u64,
    profile: &str,
    injection: &str,
) -> PyResult<Vec<SynthRow>> {
    let cfg = synth_config(users, weeks, rate, seed, profile, injection)?;
    let events = cli::synthesize(&cfg).map_err(value_err)?;
    Ok(events
        .into_iter()
        .map(|e| {
            let r = e.record;
            (r.id, r.date, r.user, r.pc, r.activity, e.label)
        })
        .collect())
}

/// Same corpus as `synth`, written as a logon CSV plus a labels CSV.
/// Returns the number of events.
#[pyfunction]
#[pyo3(signature = (events_out, labels_out, users = 50, weeks = 26, rate = 0.05, seed = 42, profile = "drift", injection = "episode"))]
#[allow(clippy::too_many_arguments)]
fn write_synth(
    events_out: PathBuf,
    labels_out: PathBuf,
    users: usize,
    weeks: usize,
    rate: f64,
    seed: u64,
    profile: &str,
    injection: &str,
) -> PyResult<u64> {
    let cfg = synth_config(users, weeks, rate, seed, profile, injection)?;
    cli::write_synth(&cfg, &events_out, &labels_out).map(|s| s.events).map_err(cli_err)
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("field", &r.field)?;
    d.set_item("events", r.events)?;
    d.set_item("positives", r.positives)?;
    d.set_item("tp", r.confusion.tp)?;
    d.set_item("fp", r.confusion.fp)?;
    d.set_item("tn", r.confusion.tn)?;
    d.set_item("fn", r.confusion.fn_)?;
    d.set_item("dr", r.dr)?;
    d.set_item("fpr", r.fpr)?;
    d.set_item("auc", r.auc)?;
    Ok(d)
}

fn cli_err(e: CliError) -> PyErr {
    value_err(e)
}

/// Streams a logon CSV and writes alerts (and optionally scores) as JSON lines.
#[pyfunction]
#[pyo3(signature = (input, alerts_out, scores_out = None, config = None))]
fn run(
    input: PathBuf,
    alerts_out: PathBuf,
    scores_out: Option<PathBuf>,
    config: Option<&str>,
) -> PyResult<HashMap<&'static str, u64>> {
    let s = cli::run(&input, &config_from(config)?, &alerts_out, scores_out.as_deref()).map_err(cli_err)?;
    Ok(HashMap::from([
        ("events", s.events),
        ("users", s.users),
        ("alerts", s.alerts),
        ("retrains", s.retrains),
        ("skipped", s.skipped),
        ("scored", s.scored),
        ("late", s.late),
        ("malformed", s.malformed),
        ("filtered", s.filtered),
    ]))
}

/// DR, FPR and AUROC of a scores file against a labels file.
#[pyfunction]
#[pyo3(signature = (scores, labels, field = "votes"))]
fn evaluate<'py>(py: Python<'py>, scores: PathBuf, labels: PathBuf, field: &str) -> PyResult<Bound<'py, PyDict>> {
    let scored = cli::read_scores(&scores).map_err(cli_err)?;
    let labels = cli::read_labels(&labels).map_err(cli_err)?;
    let field: ScoreField = field.parse().map_err(|e: std::convert::Infallible| value_err(e))?;
    let report = cli::evaluate(&scored, &labels, &field).map_err(cli_err)?;
    report_dict(py, &report)
}

#[pymodule]
fn pyastd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(circ_distance, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(write_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyKde>()?;
    m.add_class::<PyKMeans>()?;
    m.add_class::<PyLof>()?;
    m.add_class::<PyPipeline>()?;
    Ok(())
}
