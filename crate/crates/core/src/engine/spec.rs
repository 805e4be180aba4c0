//! Operator trees: the static side of a specification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::env::Env;
use super::value::{Key, Value};
use super::EngineError;

/// A named input occurrence with positional arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub name: String,
    pub args: Vec<Value>,
}

impl Event {
    pub fn new(name: impl Into<String>, args: Vec<Value>) -> Self {
        Event { name: name.into(), args }
    }
}

/// Read-only view used by guards and expression evaluation. Captures shadow
/// the environment.
pub struct Scope<'a> {
    pub env: &'a Env,
    pub captures: &'a Env,
}

impl<'a> Scope<'a> {
    pub fn get(&self, name: &str) -> Option<&'a Value> {
        self.captures.get(name).or_else(|| self.env.get(name))
    }

    pub fn require(&self, name: &str) -> Result<&'a Value, ActionError> {
        self.get(name)
            .ok_or_else(|| ActionError::new(format!("unbound variable `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ActionError(pub String);

impl ActionError {
    pub fn new(msg: impl Into<String>) -> Self {
        ActionError(msg.into())
    }
}

/// Mutable view handed to actions.
///
/// Reads see captures first, then the combined environment. Writes are only
/// allowed to variables already bound in the environment and not frozen
/// (quantification variables and parameters are read-only).
pub struct ActionCtx<'a> {
    env: &'a mut Env,
    captures: &'a Env,
    frozen: &'a BTreeSet<String>,
    emitted: &'a mut Vec<Value>,
}

impl<'a> ActionCtx<'a> {
    pub(crate) fn new(
        env: &'a mut Env,
        captures: &'a Env,
        frozen: &'a BTreeSet<String>,
        emitted: &'a mut Vec<Value>,
    ) -> Self {
        ActionCtx { env, captures, frozen, emitted }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.captures.get(name).or_else(|| self.env.get(name))
    }

    pub fn require(&self, name: &str) -> Result<&Value, ActionError> {
        self.get(name)
            .ok_or_else(|| ActionError::new(format!("unbound variable `{name}`")))
    }

    pub fn require_text(&self, name: &str) -> Result<&str, ActionError> {
        self.require(name)?
            .as_text()
            .ok_or_else(|| ActionError::new(format!("`{name}` is not text")))
    }

    fn check_writable(&self, name: &str) -> Result<(), ActionError> {
        if self.frozen.contains(name) || self.captures.contains(name) {
            return Err(ActionError::new(format!("`{name}` is read-only")));
        }
        if !self.env.contains(name) {
            return Err(ActionError::new(format!("assignment to undeclared `{name}`")));
        }
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Value, ActionError> {
        self.check_writable(name)?;
        Ok(self.env.get_mut(name).expect("checked above"))
    }

    pub fn set(&mut self, name: &str, value: Value) -> Result<(), ActionError> {
        self.check_writable(name)?;
        self.env.insert(name, value);
        Ok(())
    }

    /// Publish a record to the caller of `step`. Emissions are discarded if
    /// the step does not commit.
    pub fn emit(&mut self, record: Value) {
        self.emitted.push(record);
    }

    pub fn scope(&self) -> Scope<'_> {
        Scope { env: self.env, captures: self.captures }
    }
}

pub type GuardFn = dyn Fn(&Scope<'_>) -> Result<bool, ActionError> + Send + Sync;
pub type ActionFn = dyn Fn(&mut ActionCtx<'_>) -> Result<(), ActionError> + Send + Sync;
pub type FactoryFn = dyn Fn() -> Value + Send + Sync;

#[derive(Clone)]
pub struct Guard(pub Arc<GuardFn>);

impl Guard {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&Scope<'_>) -> Result<bool, ActionError> + Send + Sync + 'static,
    {
        Guard(Arc::new(f))
    }
}

#[derive(Clone)]
pub struct Action(pub Arc<ActionFn>);

impl Action {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&mut ActionCtx<'_>) -> Result<(), ActionError> + Send + Sync + 'static,
    {
        Action(Arc::new(f))
    }
}

impl fmt::Debug for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Guard(..)")
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Action(..)")
    }
}

#[derive(Clone, Debug)]
pub enum Expr {
    Const(Value),
    Var(String),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn eval(&self, scope: &Scope<'_>) -> Result<Value, ActionError> {
        match self {
            Expr::Const(v) => Ok(v.clone()),
            Expr::Var(name) => scope.require(name).cloned(),
        }
    }
}

/// Initial value of an attribute.
#[derive(Clone)]
pub enum Init {
    Const(Value),
    /// Fresh host objects (windows, detectors) need a constructor per instance.
    Factory(Arc<FactoryFn>),
}

impl Init {
    pub fn factory<F: Fn() -> Value + Send + Sync + 'static>(f: F) -> Self {
        Init::Factory(Arc::new(f))
    }

    pub fn value(&self) -> Value {
        match self {
            Init::Const(v) => v.clone(),
            Init::Factory(f) => f(),
        }
    }
}

impl fmt::Debug for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Const(v) => write!(f, "Const({v:?})"),
            Init::Factory(_) => f.write_str("Factory(..)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaptureType {
    Any,
    Int,
    Real,
    Bool,
    Text,
    Timestamp,
}

impl CaptureType {
    pub fn accepts(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (CaptureType::Any, _)
                | (CaptureType::Int, Value::Int(_))
                | (CaptureType::Real, Value::Real(_) | Value::Int(_))
                | (CaptureType::Bool, Value::Bool(_))
                | (CaptureType::Text, Value::Text(_))
                | (CaptureType::Timestamp, Value::Timestamp(_))
        )
    }
}

#[derive(Clone, Debug)]
pub enum Slot {
    Bound(Expr),
    Capture(String, CaptureType),
}

/// `e(userId, ?eventDate: string, ?eventId: string)`.
#[derive(Clone, Debug)]
pub struct EventPattern {
    pub name: String,
    pub slots: Vec<Slot>,
}

impl EventPattern {
    pub fn new(name: impl Into<String>, slots: Vec<Slot>) -> Self {
        EventPattern { name: name.into(), slots }
    }

    /// Returns the captured bindings if `event` matches in `scope`.
    pub fn matches(&self, event: &Event, scope: &Scope<'_>) -> Result<Option<Env>, ActionError> {
        if event.name != self.name || event.args.len() != self.slots.len() {
            return Ok(None);
        }
        let mut captures = Env::new();
        for (slot, arg) in self.slots.iter().zip(&event.args) {
            match slot {
                Slot::Bound(expr) => {
                    if expr.eval(scope)? != *arg {
                        return Ok(None);
                    }
                }
                Slot::Capture(name, ty) => {
                    if !ty.accepts(arg) {
                        return Ok(None);
                    }
                    captures.insert(name.clone(), arg.clone());
                }
            }
        }
        Ok(Some(captures))
    }
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub source: String,
    pub pattern: EventPattern,
    pub guard: Option<Guard>,
    pub action: Option<Action>,
    pub target: String,
}

#[derive(Clone, Debug)]
pub struct Automaton {
    pub states: Vec<String>,
    pub initial: String,
    pub finals: BTreeSet<String>,
    pub transitions: Vec<Transition>,
}

#[derive(Clone, Debug)]
pub enum Domain {
    Finite(BTreeSet<Key>),
    Unbounded,
}

#[derive(Clone, Debug)]
pub enum Body {
    Automaton(Automaton),
    Flow(Box<AstdSpec>, Box<AstdSpec>),
    QFlow { var: String, domain: BTreeSet<Key>, body: Box<AstdSpec> },
    QInterleave { var: String, domain: Domain, body: Box<AstdSpec> },
    Call { callee: String, args: Vec<(String, Expr)> },
}

/// One node of an operator tree: name, parameters, attributes with their
/// initial values, an optional node action run after every accepted
/// sub-transition, and the operator body.
#[derive(Clone, Debug)]
pub struct AstdSpec {
    pub name: String,
    pub params: Vec<String>,
    pub attrs: Vec<(String, Init)>,
    pub action: Option<Action>,
    pub body: Body,
}

impl AstdSpec {
    pub fn new(name: impl Into<String>, body: Body) -> Self {
        AstdSpec {
            name: name.into(),
            params: Vec::new(),
            attrs: Vec::new(),
            action: None,
            body,
        }
    }

    pub fn with_params<I, S>(mut self, params: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.params = params.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_attr(mut self, name: impl Into<String>, init: Init) -> Self {
        self.attrs.push((name.into(), init));
        self
    }

    pub fn with_action(mut self, action: Action) -> Self {
        self.action = Some(action);
        self
    }

    pub fn attr_names(&self) -> BTreeSet<String> {
        self.attrs.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn init_env(&self) -> Env {
        self.attrs.iter().map(|(n, init)| (n.clone(), init.value())).collect()
    }

    pub fn automaton(name: impl Into<String>, automaton: Automaton) -> Self {
        AstdSpec::new(name, Body::Automaton(automaton))
    }

    pub fn flow(name: impl Into<String>, left: AstdSpec, right: AstdSpec) -> Self {
        AstdSpec::new(name, Body::Flow(Box::new(left), Box::new(right)))
    }

    pub fn qflow<I>(name: impl Into<String>, var: impl Into<String>, domain: I, body: AstdSpec) -> Self
    where
        I: IntoIterator<Item = Key>,
    {
        AstdSpec::new(
            name,
            Body::QFlow { var: var.into(), domain: domain.into_iter().collect(), body: Box::new(body) },
        )
    }

    pub fn qinterleave(
        name: impl Into<String>,
        var: impl Into<String>,
        domain: Domain,
        body: AstdSpec,
    ) -> Self {
        AstdSpec::new(name, Body::QInterleave { var: var.into(), domain, body: Box::new(body) })
    }

    pub fn call(name: impl Into<String>, callee: impl Into<String>, args: Vec<(String, Expr)>) -> Self {
        AstdSpec::new(name, Body::Call { callee: callee.into(), args })
    }
}

impl Automaton {
    /// Single initial-and-final state with one self-loop.
    pub fn single_loop(
        state: impl Into<String>,
        pattern: EventPattern,
        guard: Option<Guard>,
        action: Option<Action>,
    ) -> Self {
        let s = state.into();
        Automaton {
            states: vec![s.clone()],
            initial: s.clone(),
            finals: [s.clone()].into_iter().collect(),
            transitions: vec![Transition { source: s.clone(), pattern, guard, action, target: s }],
        }
    }
}

/// A root operator tree plus the named sub-specifications reachable by Call.
#[derive(Clone, Debug)]
pub struct Program {
    pub root: AstdSpec,
    pub library: BTreeMap<String, AstdSpec>,
}

impl Program {
    pub fn new(root: AstdSpec) -> Result<Self, EngineError> {
        Program::with_library(root, Vec::new())
    }

    /// Validates the tree: unique attribute names, quantification variables
    /// not shadowing attributes, automaton states declared, and every Call
    /// resolving to a library entry without recursion.
    pub fn with_library(root: AstdSpec, library: Vec<AstdSpec>) -> Result<Self, EngineError> {
        let mut lib = BTreeMap::new();
        for spec in library {
            if lib.insert(spec.name.clone(), spec).is_some() {
                return Err(EngineError::Spec("duplicate library specification".into()));
            }
        }
        let program = Program { root, library: lib };
        let mut stack = Vec::new();
        program.validate(&program.root, &mut stack)?;
        for spec in program.library.values() {
            program.validate(spec, &mut vec![spec.name.clone()])?;
        }
        Ok(program)
    }

    pub fn resolve(&self, name: &str) -> Result<&AstdSpec, EngineError> {
        self.library
            .get(name)
            .ok_or_else(|| EngineError::Spec(format!("unresolved call to `{name}`")))
    }

    fn validate(&self, spec: &AstdSpec, calls: &mut Vec<String>) -> Result<(), EngineError> {
        let names = spec.attr_names();
        if names.len() != spec.attrs.len() {
            return Err(EngineError::Spec(format!("duplicate attribute in `{}`", spec.name)));
        }
        match &spec.body {
            Body::Automaton(a) => {
                let states: BTreeSet<&String> = a.states.iter().collect();
                let known = |s: &String| states.contains(s);
                if !known(&a.initial)
                    || !a.finals.iter().all(known)
                    || !a.transitions.iter().all(|t| known(&t.source) && known(&t.target))
                {
                    return Err(EngineError::Spec(format!(
                        "automaton `{}` references an undeclared state",
                        spec.name
                    )));
                }
                Ok(())
            }
            Body::Flow(l, r) => {
                self.validate(l, calls)?;
                self.validate(r, calls)
            }
            Body::QFlow { var, body, .. } | Body::QInterleave { var, body, .. } => {
                if names.contains(var) {
                    return Err(EngineError::Spec(format!(
                        "quantified variable `{var}` shadows an attribute of `{}`",
                        spec.name
                    )));
                }
                self.validate(body, calls)
            }
            Body::Call { callee, args } => {
                let target = self.resolve(callee)?;
                if calls.contains(callee) {
                    return Err(EngineError::Spec(format!("recursive call to `{callee}`")));
                }
                if args.len() != target.params.len() {
                    return Err(EngineError::Spec(format!(
                        "call to `{callee}` passes {} arguments, expected {}",
                        args.len(),
                        target.params.len()
                    )));
                }
                calls.push(callee.clone());
                let res = self.validate(target, calls);
                calls.pop();
                res
            }
        }
    }
}
