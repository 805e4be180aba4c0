//! The continuous anomaly-detection pattern expressed as an operator tree.
//!
//! ```text
//! combinedModels    |||  userId : Unbounded
//! └─ detectionPerUser   flow  [window, data, alerts]
//!    ├─ Combination     flow  [scores]
//!    │  ├─ detectors    qflow d : detector names  [mapDetectors]
//!    │  │  └─ Call DetectorInstance(d)
//!    │  │       flow ─ training   (guard g1, fit_partial)
//!    │  │            └ detection  (guard g2, score_partial)
//!    │  └─ majorityVote  automaton
//!    └─ DataParser      automaton (formatting_data)
//! ```
//!
//! Every automaton has one initial-and-final state with a self-loop on
//! `e(userId, ?eventDate, ?eventId)`. The flow runs its left side first, so
//! an event is scored before it is added to the training window.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::detectors::{Detector, DetectorError, DetectorRegistry};
use crate::engine::{
    Action, ActionCtx, ActionError, AstdSpec, AstdState, Automaton, CaptureType, Domain, Engine,
    EngineError, Env, Event, EventPattern, Expr, Guard, Init, Key, Program, Scope, Slot, Value,
};
use crate::ensemble::{vote_with, Alert, MajorityVote, ScoreBoard, VotingStrategy};
use crate::windowing::{
    formatting_data, minute_of_day, parse_timestamp, Ingest, TrainingData, Window, WindowConfig,
    WindowError, DEFAULT_DATE_FORMAT,
};

pub const EVENT_NAME: &str = "e";
pub const DETECTOR_INSTANCE: &str = "DetectorInstance";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("event refused: {0}")]
    Refused(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_parameters: WindowConfig,
    /// Detector name → parameters; iteration is in name order.
    pub detectors: BTreeMap<String, Json>,
    pub date_format: String,
    pub activity_filter: Option<String>,
    pub min_training_instances: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let detectors = [
            ("kde".to_string(), json!({"kde_parameter": 0.5})),
            ("kmeans".to_string(), json!({"kmeans_parameter": 1.5, "seed": 0})),
            ("lof".to_string(), json!({"lof_parameter": 95.0, "n_neighbors": 20})),
        ]
        .into_iter()
        .collect();
        PipelineConfig {
            window_parameters: WindowConfig::default(),
            detectors,
            date_format: DEFAULT_DATE_FORMAT.to_string(),
            activity_filter: None,
            min_training_instances: 30,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, registry: &DetectorRegistry) -> Result<(), PipelineError> {
        self.window_parameters.validate()?;
        if self.detectors.is_empty() {
            return Err(PipelineError::Config("no detectors configured".into()));
        }
        registry.build_all(&self.detectors)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Host wrapper so detectors can live behind engine handles.
#[derive(Debug, Clone)]
pub struct DetectorCell(pub Box<dyn Detector>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlertLog(pub Vec<Alert>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorVote {
    pub binary: u8,
    /// `None` stands for +∞ (possible for LOF on duplicate-heavy data).
    #[serde(with = "finite_or_null")]
    pub raw: f64,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Per-event record of the votes cast, written to the scores output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvent {
    #[serde(rename = "eventId")]
    pub event_id: String,
    #[serde(rename = "userId")]
    pub user_id: String,
    #[serde(rename = "eventDate")]
    pub event_date: String,
    pub votes: u32,
    pub cast: u32,
    pub alert: bool,
    pub detectors: BTreeMap<String, DetectorVote>,
}

#[derive(Debug, Clone)]
enum Emission {
    Scored(ScoredEvent, Option<Alert>),
    Retrained { detector: String, version: i64 },
    Late,
}

fn emit(ctx: &mut ActionCtx<'_>, e: Emission) {
    ctx.emit(Value::handle(e));
}

fn err(e: impl std::fmt::Display) -> ActionError {
    ActionError::new(e.to_string())
}

fn handle_ref<'a, T: 'static>(scope: &Scope<'a>, name: &str) -> Result<&'a T, ActionError> {
    scope
        .require(name)?
        .as_handle()
        .and_then(|h| h.downcast_ref::<T>())
        .ok_or_else(|| ActionError::new(format!("`{name}` has an unexpected type")))
}

/// Take a writable copy of a handle attribute, mutate it, and store it back.
fn update_handle<T: 'static, R>(
    ctx: &mut ActionCtx<'_>,
    name: &str,
    f: impl FnOnce(&mut T) -> Result<R, ActionError>,
) -> Result<R, ActionError> {
    let slot = ctx.get_mut(name)?;
    let h = slot
        .as_handle_mut()
        .ok_or_else(|| ActionError::new(format!("`{name}` is not a handle")))?;
    let obj = h
        .downcast_mut::<T>()
        .ok_or_else(|| ActionError::new(format!("`{name}` has an unexpected type")))?;
    f(obj)
}

fn detector<'a>(scope: &Scope<'a>, d: &str) -> Result<&'a dyn Detector, ActionError> {
    let map = scope
        .require("mapDetectors")?
        .as_map()
        .ok_or_else(|| ActionError::new("`mapDetectors` is not a map"))?;
    map.get(d)
        .and_then(Value::as_handle)
        .and_then(|h| h.downcast_ref::<DetectorCell>())
        .map(|c| c.0.as_ref())
        .ok_or_else(|| ActionError::new(format!("no detector named `{d}`")))
}

fn quantified_name<'a>(scope: &Scope<'a>) -> Result<&'a str, ActionError> {
    scope.require("d")?.as_text().ok_or_else(|| ActionError::new("`d` is not text"))
}

/// Training guard: enough data, and the window has filled or slid since the
/// detector was last fitted.
pub fn g1(scope: &Scope<'_>, min_training: usize) -> Result<bool, ActionError> {
    let d = quantified_name(scope)?;
    let det = detector(scope, d)?;
    let data = handle_ref::<TrainingData>(scope, "data")?;
    let window = handle_ref::<Window>(scope, "window")?;
    Ok(data.len() >= min_training.max(det.min_samples())
        && window.version() >= 1
        && window.version() > det.trained_version())
}

/// Detection guard: the detector has been fitted at least once.
pub fn g2(scope: &Scope<'_>) -> Result<bool, ActionError> {
    let d = quantified_name(scope)?;
    Ok(detector(scope, d)?.trained_version() >= 0)
}

fn event_pattern() -> EventPattern {
    EventPattern::new(
        EVENT_NAME,
        vec![
            Slot::Bound(Expr::var("userId")),
            Slot::Capture("eventDate".into(), CaptureType::Text),
            Slot::Capture("eventId".into(), CaptureType::Text),
        ],
    )
}

fn loop_automaton(name: &str, guard: Option<Guard>, action: Action) -> AstdSpec {
    AstdSpec::automaton(name, Automaton::single_loop("S0", event_pattern(), guard, Some(action)))
}

fn training_action() -> Action {
    Action::new(|ctx| {
        let d = ctx.require_text("d")?.to_string();
        let (minutes, version) = {
            let scope = ctx.scope();
            let data = handle_ref::<TrainingData>(&scope, "data")?;
            let window = handle_ref::<Window>(&scope, "window")?;
            (data.training_set(), window.version())
        };
        let map = ctx
            .get_mut("mapDetectors")?
            .as_map_mut()
            .ok_or_else(|| ActionError::new("`mapDetectors` is not a map"))?;
        let cell = map
            .get_mut(&d)
            .and_then(Value::as_handle_mut)
            .and_then(|h| h.downcast_mut::<DetectorCell>())
            .ok_or_else(|| ActionError::new(format!("no detector named `{d}`")))?;
        cell.0.fit_partial(&minutes, version).map_err(err)?;
        emit(ctx, Emission::Retrained { detector: d, version });
        Ok(())
    })
}

fn detection_action(date_format: Arc<str>) -> Action {
    Action::new(move |ctx| {
        let d = ctx.require_text("d")?.to_string();
        let date = ctx.require_text("eventDate")?;
        let ts = parse_timestamp(date, &date_format).map_err(err)?;
        let score = {
            let scope = ctx.scope();
            detector(&scope, &d)?.score_partial(minute_of_day(&ts)).map_err(err)?
        };
        update_handle::<ScoreBoard, _>(ctx, "scores", |board| {
            board.push(d, score.binary, score.raw);
            Ok(())
        })
    })
}

fn vote_action(strategy: Arc<dyn VotingStrategy>) -> Action {
    Action::new(move |ctx| {
        let event_id = ctx.require_text("eventId")?.to_string();
        let event_date = ctx.require_text("eventDate")?.to_string();
        let user = ctx.require("userId")?;
        let user_id = user.as_text().map(str::to_string).unwrap_or_else(|| user.render());
        let ballots = {
            let scope = ctx.scope();
            handle_ref::<ScoreBoard>(&scope, "scores")?.ballots().to_vec()
        };
        if ballots.is_empty() {
            return Ok(());
        }
        let mut fresh = Vec::new();
        let alert = update_handle::<ScoreBoard, _>(ctx, "scores", |board| {
            Ok(vote_with(strategy.as_ref(), board, &mut fresh, &event_id, &event_date, &user_id))
        })?;
        if !fresh.is_empty() {
            update_handle::<AlertLog, _>(ctx, "alerts", |log| {
                log.0.append(&mut fresh);
                Ok(())
            })?;
        }
        let scored = ScoredEvent {
            event_id,
            user_id,
            event_date,
            votes: ballots.iter().filter(|b| b.binary == 1).count() as u32,
            cast: ballots.len() as u32,
            alert: alert.is_some(),
            detectors: ballots
                .iter()
                .map(|b| (b.detector.clone(), DetectorVote { binary: b.binary, raw: b.raw }))
                .collect(),
        };
        emit(ctx, Emission::Scored(scored, alert));
        Ok(())
    })
}

fn parser_action(date_format: Arc<str>) -> Action {
    Action::new(move |ctx| {
        let ts = parse_timestamp(ctx.require_text("eventDate")?, &date_format).map_err(err)?;
        let mut data = {
            let scope = ctx.scope();
            handle_ref::<TrainingData>(&scope, "data")?.clone()
        };
        let outcome = update_handle::<Window, _>(ctx, "window", |w| Ok(formatting_data(&mut data, w, &ts)))?;
        update_handle::<TrainingData, _>(ctx, "data", |d| {
            *d = data;
            Ok(())
        })?;
        if let Ingest::Late { .. } = outcome {
            emit(ctx, Emission::Late);
        }
        Ok(())
    })
}

/// Builds the operator tree for `config`, voting by strict majority.
pub fn build_spec(config: &PipelineConfig) -> Result<Program, PipelineError> {
    build_spec_with(config, &DetectorRegistry::default(), Arc::new(MajorityVote))
}

pub fn build_spec_with(
    config: &PipelineConfig,
    registry: &DetectorRegistry,
    strategy: Arc<dyn VotingStrategy>,
) -> Result<Program, PipelineError> {
    config.validate(registry)?;
    let date_format: Arc<str> = Arc::from(config.date_format.as_str());
    let min_training = config.min_training_instances;

    let training = loop_automaton(
        "training",
        Some(Guard::new(move |s| g1(s, min_training))),
        training_action(),
    );
    let detection = loop_automaton("detection", Some(Guard::new(g2)), detection_action(date_format.clone()));
    let instance = AstdSpec::flow(DETECTOR_INSTANCE, training, detection).with_params(["d"]);

    let names: Vec<Key> = config.detectors.keys().map(|n| Key::Text(n.clone())).collect();
    let detectors_cfg = config.detectors.clone();
    let registry_cl = registry.clone();
    let detectors = AstdSpec::qflow(
        "detectors",
        "d",
        names,
        AstdSpec::call("detectorCall", DETECTOR_INSTANCE, vec![("d".into(), Expr::var("d"))]),
    )
    .with_attr(
        "mapDetectors",
        Init::factory(move || {
            let built = registry_cl.build_all(&detectors_cfg).expect("validated configuration");
            Value::Map(built.into_iter().map(|(k, d)| (k, Value::handle(DetectorCell(d)))).collect())
        }),
    );
    let vote = loop_automaton("majorityVote", None, vote_action(strategy));
    let combination = AstdSpec::flow("Combination", detectors, vote)
        .with_attr("scores", Init::factory(|| Value::handle(ScoreBoard::new())));

    let parser = loop_automaton("DataParser", None, parser_action(date_format));
    let window_cfg = config.window_parameters;
    let per_user = AstdSpec::flow("detectionPerUser", combination, parser)
        .with_attr("window", Init::factory(move || Value::handle(Window::new(window_cfg))))
        .with_attr("data", Init::factory(|| Value::handle(TrainingData::new())))
        .with_attr("alerts", Init::factory(|| Value::handle(AlertLog::default())));

    let root = AstdSpec::qinterleave("combinedModels", "userId", Domain::Unbounded, per_user);
    Ok(Program::with_library(root, vec![instance])?)
}

/// What one event produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub alerts: Vec<Alert>,
    pub scored: Option<ScoredEvent>,
    pub retrains: Vec<(String, i64)>,
    pub late: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub events: u64,
    pub processed: u64,
    pub skipped: u64,
    pub alerts: u64,
    pub retrains: u64,
    pub late: u64,
}

/// A running instance of the pattern.
#[derive(Clone)]
pub struct Runtime {
    engine: Engine,
    state: AstdState,
    env: Env,
    stats: RunStats,
}

impl Runtime {
    pub fn new(config: &PipelineConfig) -> Result<Self, PipelineError> {
        Runtime::from_engine(Engine::new(build_spec(config)?))
    }

    pub fn from_engine(engine: Engine) -> Result<Self, PipelineError> {
        let state = engine.init()?;
        Ok(Runtime { engine, state, env: Env::new(), stats: RunStats::default() })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn state(&self) -> &AstdState {
        &self.state
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn users(&self) -> Vec<Key> {
        self.state.instance_keys()
    }

    /// Routes the event to its user's instance and steps the tree. A failed
    /// step leaves the state untouched and counts as skipped.
    pub fn process_event(&mut self, event: &Event) -> Result<StepReport, PipelineError> {
        self.stats.events += 1;
        let outcome = self.engine.apply(&mut self.state, &mut self.env, event);
        let emitted = match outcome {
            Ok(Some(emitted)) => emitted,
            Ok(None) => {
                self.stats.skipped += 1;
                return Err(PipelineError::Refused(format!("{event:?}")));
            }
            Err(e) => {
                self.stats.skipped += 1;
                return Err(e.into());
            }
        };
        self.stats.processed += 1;
        let mut report = StepReport::default();
        for v in emitted {
            let Some(e) = v.as_handle().and_then(|h| h.downcast_ref::<Emission>()) else {
                continue;
            };
            match e {
                Emission::Scored(s, alert) => {
                    report.scored = Some(s.clone());
                    report.alerts.extend(alert.iter().cloned());
                }
                Emission::Retrained { detector, version } => report.retrains.push((detector.clone(), *version)),
                Emission::Late => report.late = true,
            }
        }
        self.stats.alerts += report.alerts.len() as u64;
        self.stats.retrains += report.retrains.len() as u64;
        self.stats.late += u64::from(report.late);
        Ok(report)
    }

    pub fn process(&mut self, user: &str, date: &str, event_id: &str) -> Result<StepReport, PipelineError> {
        self.process_event(&Event::new(EVENT_NAME, vec![user.into(), date.into(), event_id.into()]))
    }

    fn user_attr<T: Clone + 'static>(&self, user: &Key, attr: &str) -> Option<T> {
        self.state
            .instance(user)?
            .env()
            .get(attr)?
            .as_handle()?
            .downcast_ref::<T>()
            .cloned()
    }

    pub fn user_window(&self, user: &Key) -> Option<Window> {
        self.user_attr(user, "window")
    }

    pub fn user_data(&self, user: &Key) -> Option<TrainingData> {
        self.user_attr(user, "data")
    }

    pub fn user_alerts(&self, user: &Key) -> Vec<Alert> {
        self.user_attr::<AlertLog>(user, "alerts").map(|l| l.0).unwrap_or_default()
    }

    /// Alerts of every user, in user-creation order.
    pub fn alerts(&self) -> Vec<Alert> {
        self.users().iter().flat_map(|u| self.user_alerts(u)).collect()
    }

    pub fn dump(&self) -> Result<String, PipelineError> {
        Ok(self.engine.dump(&self.state)?)
    }

    /// Canonical dump of one user's sub-state.
    pub fn dump_user(&self, user: &Key) -> Option<String> {
        let body = match &self.engine.program().root.body {
            crate::engine::Body::QInterleave { body, .. } => body,
            _ => return None,
        };
        self.engine.dump_spec(body, self.state.instance(user)?).ok()
    }
}
