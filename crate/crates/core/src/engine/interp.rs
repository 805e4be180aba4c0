use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use indexmap::IndexMap;

use super::env::Env;
use super::spec::{ActionCtx, AstdSpec, Automaton, Body, Domain, Event, Program, Scope};
use super::state::AstdState;
use super::value::{Key, Value};
use super::EngineError;

/// Chooses the iteration order of a quantified flow's instances. Receives the
/// node name and the canonical (ascending) domain order.
pub type OrderHook = dyn Fn(&str, &[Key]) -> Vec<Key> + Send + Sync;

#[derive(Debug)]
pub enum StepOutcome {
    Accepted { state: AstdState, env: Env, emitted: Vec<Value> },
    Refused,
}

impl StepOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, StepOutcome::Accepted { .. })
    }
}

type Inner = Option<(AstdState, Env)>;

/// Interpreter for a validated [`Program`].
///
/// Steps are pure: they build a new state and enclosing environment and
/// leave the inputs untouched, so a refusal or a failing action can never
/// leave a half-updated tree behind.
#[derive(Clone)]
pub struct Engine {
    program: Arc<Program>,
    order: Option<Arc<OrderHook>>,
}

impl Engine {
    pub fn new(program: Program) -> Self {
        Engine { program: Arc::new(program), order: None }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Test hook: override the canonical quantified-flow iteration order.
    pub fn with_qflow_order<F>(mut self, hook: F) -> Self
    where
        F: Fn(&str, &[Key]) -> Vec<Key> + Send + Sync + 'static,
    {
        self.order = Some(Arc::new(hook));
        self
    }

    pub fn init(&self) -> Result<AstdState, EngineError> {
        self.init_spec(&self.program.root)
    }

    pub fn init_spec(&self, spec: &AstdSpec) -> Result<AstdState, EngineError> {
        let env = spec.init_env();
        Ok(match &spec.body {
            Body::Automaton(a) => AstdState::Automaton { current: a.initial.clone(), env },
            Body::Flow(l, r) => AstdState::Flow {
                env,
                left: Box::new(self.init_spec(l)?),
                right: Box::new(self.init_spec(r)?),
            },
            Body::QFlow { domain, body, .. } => {
                let instances = domain
                    .iter()
                    .map(|k| Ok((k.clone(), self.init_spec(body)?)))
                    .collect::<Result<BTreeMap<_, _>, EngineError>>()?;
                AstdState::QFlow { env, instances }
            }
            Body::QInterleave { domain, body, .. } => {
                let mut instances = IndexMap::new();
                if let Domain::Finite(values) = domain {
                    for k in values {
                        instances.insert(k.clone(), Arc::new(self.init_spec(body)?));
                    }
                }
                AstdState::QInterleave { env, instances }
            }
            Body::Call { callee, .. } => {
                let target = self.program.resolve(callee)?;
                AstdState::Call { env, inner: Box::new(self.init_spec(target)?) }
            }
        })
    }

    pub fn is_final(&self, state: &AstdState) -> Result<bool, EngineError> {
        self.is_final_spec(&self.program.root, state)
    }

    pub fn is_final_spec(&self, spec: &AstdSpec, state: &AstdState) -> Result<bool, EngineError> {
        match (&spec.body, state) {
            (Body::Automaton(a), AstdState::Automaton { current, .. }) => {
                Ok(a.finals.contains(current))
            }
            (Body::Flow(l, r), AstdState::Flow { left, right, .. }) => {
                Ok(self.is_final_spec(l, left)? && self.is_final_spec(r, right)?)
            }
            (Body::QFlow { body, .. }, AstdState::QFlow { instances, .. }) => {
                for s in instances.values() {
                    if !self.is_final_spec(body, s)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            (Body::QInterleave { body, .. }, AstdState::QInterleave { instances, .. }) => {
                for s in instances.values() {
                    if !self.is_final_spec(body, s)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            (Body::Call { callee, .. }, AstdState::Call { inner, .. }) => {
                self.is_final_spec(self.program.resolve(callee)?, inner)
            }
            _ => Err(shape(spec, state)),
        }
    }

    pub fn step(&self, state: &AstdState, event: &Event, env: &Env) -> Result<StepOutcome, EngineError> {
        self.step_spec(&self.program.root, state, event, env)
    }

    pub fn step_spec(
        &self,
        spec: &AstdSpec,
        state: &AstdState,
        event: &Event,
        env: &Env,
    ) -> Result<StepOutcome, EngineError> {
        let mut emitted = Vec::new();
        let frozen = BTreeSet::new();
        Ok(match self.step_node(spec, state, event, env, &frozen, &mut emitted)? {
            Some((state, env)) => StepOutcome::Accepted { state, env, emitted },
            None => StepOutcome::Refused,
        })
    }

    /// Steps the root and commits on acceptance. Returns the emitted records,
    /// or `None` when the event was refused.
    pub fn apply(
        &self,
        state: &mut AstdState,
        env: &mut Env,
        event: &Event,
    ) -> Result<Option<Vec<Value>>, EngineError> {
        match self.step(state, event, env)? {
            StepOutcome::Accepted { state: s, env: e, emitted } => {
                *state = s;
                *env = e;
                Ok(Some(emitted))
            }
            StepOutcome::Refused => Ok(None),
        }
    }

    // Θ: E_g = E_e ⊕ E; the body moves E_g to E''_g; the node action maps
    // E''_g to E'_g; E' = V ◁ E'_g and E'_e = E_e ⊕ (V ⩤ E'_g).
    fn step_node(
        &self,
        spec: &AstdSpec,
        state: &AstdState,
        event: &Event,
        env_e: &Env,
        frozen: &BTreeSet<String>,
        emitted: &mut Vec<Value>,
    ) -> Result<Inner, EngineError> {
        let env_g = env_e.overridden_by(state.env());
        let inner = match (&spec.body, state) {
            (Body::Automaton(a), AstdState::Automaton { current, env }) => {
                self.step_automaton(spec, a, current, env, event, env_g, frozen, emitted)?
            }
            (Body::Flow(l, r), AstdState::Flow { env, left, right }) => {
                self.step_flow(l, r, env, left, right, event, env_g, frozen, emitted)?
            }
            (Body::QFlow { var, body, .. }, AstdState::QFlow { env, instances }) => {
                self.step_qflow(spec, var, body, env, instances, event, env_g, frozen, emitted)?
            }
            (Body::QInterleave { var, domain, body }, AstdState::QInterleave { env, instances }) => {
                self.step_qinterleave(var, domain, body, env, instances, event, env_g, frozen, emitted)?
            }
            (Body::Call { callee, args }, AstdState::Call { env, inner }) => {
                self.step_call(spec, callee, args, env, inner, event, env_g, frozen, emitted)?
            }
            _ => return Err(shape(spec, state)),
        };
        let Some((mut next, mut env_g)) = inner else {
            return Ok(None);
        };
        if let Some(action) = &spec.action {
            let captures = Env::new();
            let mut ctx = ActionCtx::new(&mut env_g, &captures, frozen, emitted);
            (action.0)(&mut ctx).map_err(|e| EngineError::Action { node: spec.name.clone(), source: e })?;
        }
        let vars = spec.attr_names();
        next.set_env(env_g.restrict(&vars));
        let env_e_next = env_e.overridden_by(&env_g.subtract(&vars));
        Ok(Some((next, env_e_next)))
    }

    #[allow(clippy::too_many_arguments)]
    fn step_automaton(
        &self,
        spec: &AstdSpec,
        automaton: &Automaton,
        current: &str,
        local: &Env,
        event: &Event,
        mut env_g: Env,
        frozen: &BTreeSet<String>,
        emitted: &mut Vec<Value>,
    ) -> Result<Inner, EngineError> {
        let node_err = |e| EngineError::Action { node: spec.name.clone(), source: e };
        for t in automaton.transitions.iter().filter(|t| t.source == current) {
            let empty = Env::new();
            let scope = Scope { env: &env_g, captures: &empty };
            let Some(captures) = t.pattern.matches(event, &scope).map_err(node_err)? else {
                continue;
            };
            if let Some(guard) = &t.guard {
                let scope = Scope { env: &env_g, captures: &captures };
                if !(guard.0)(&scope).map_err(node_err)? {
                    continue;
                }
            }
            if let Some(action) = &t.action {
                let mut ctx = ActionCtx::new(&mut env_g, &captures, frozen, emitted);
                (action.0)(&mut ctx).map_err(node_err)?;
            }
            let next = AstdState::Automaton { current: t.target.clone(), env: local.clone() };
            return Ok(Some((next, env_g)));
        }
        Ok(None)
    }

    #[allow(clippy::too_many_arguments)]
    fn step_flow(
        &self,
        left_spec: &AstdSpec,
        right_spec: &AstdSpec,
        local: &Env,
        left: &AstdState,
        right: &AstdState,
        event: &Event,
        env_g: Env,
        frozen: &BTreeSet<String>,
        emitted: &mut Vec<Value>,
    ) -> Result<Inner, EngineError> {
        let (left_next, env_g) = match self.step_node(left_spec, left, event, &env_g, frozen, emitted)? {
            Some((s, e)) => (Some(s), e),
            None => (None, env_g),
        };
        let (right_next, env_g) = match self.step_node(right_spec, right, event, &env_g, frozen, emitted)? {
            Some((s, e)) => (Some(s), e),
            None => (None, env_g),
        };
        if left_next.is_none() && right_next.is_none() {
            return Ok(None);
        }
        let next = AstdState::Flow {
            env: local.clone(),
            left: Box::new(left_next.unwrap_or_else(|| left.clone())),
            right: Box::new(right_next.unwrap_or_else(|| right.clone())),
        };
        Ok(Some((next, env_g)))
    }

    #[allow(clippy::too_many_arguments)]
    fn step_qflow(
        &self,
        spec: &AstdSpec,
        var: &str,
        body: &AstdSpec,
        local: &Env,
        instances: &BTreeMap<Key, AstdState>,
        event: &Event,
        env_g: Env,
        frozen: &BTreeSet<String>,
        emitted: &mut Vec<Value>,
    ) -> Result<Inner, EngineError> {
        let canonical: Vec<Key> = instances.keys().cloned().collect();
        let order = match &self.order {
            Some(hook) => {
                let order = hook(&spec.name, &canonical);
                let mut sorted = order.clone();
                sorted.sort();
                if sorted != canonical {
                    return Err(EngineError::Spec(format!(
                        "iteration order for `{}` is not a permutation of its domain",
                        spec.name
                    )));
                }
                order
            }
            None => canonical,
        };
        let mut frozen_inner = frozen.clone();
        frozen_inner.insert(var.to_string());
        let mut next = instances.clone();
        let mut es = env_g;
        let mut fired = false;
        for key in order {
            let mut env_i = es.clone();
            let shadowed = env_i.insert(var, key.to_value());
            if let Some((s, mut e)) =
                self.step_node(body, &instances[&key], event, &env_i, &frozen_inner, emitted)?
            {
                restore(&mut e, var, shadowed);
                next.insert(key, s);
                es = e;
                fired = true;
            }
        }
        if !fired {
            return Ok(None);
        }
        Ok(Some((AstdState::QFlow { env: local.clone(), instances: next }, es)))
    }

    #[allow(clippy::too_many_arguments)]
    fn step_qinterleave(
        &self,
        var: &str,
        domain: &Domain,
        body: &AstdSpec,
        local: &Env,
        instances: &IndexMap<Key, Arc<AstdState>>,
        event: &Event,
        env_g: Env,
        frozen: &BTreeSet<String>,
        emitted: &mut Vec<Value>,
    ) -> Result<Inner, EngineError> {
        let routing = event
            .args
            .first()
            .ok_or_else(|| EngineError::Input(format!("event `{}` carries no routing value", event.name)))?;
        let key = Key::from_value(routing).ok_or_else(|| {
            EngineError::Input(format!("routing value of type {} cannot select an instance", routing.type_name()))
        })?;
        let fresh;
        let current = match instances.get(&key) {
            Some(s) => s.as_ref(),
            None => match domain {
                Domain::Finite(_) => return Ok(None),
                Domain::Unbounded => {
                    fresh = self.init_spec(body)?;
                    &fresh
                }
            },
        };
        let mut env_i = env_g;
        let shadowed = env_i.insert(var, key.to_value());
        let mut frozen_inner = frozen.clone();
        frozen_inner.insert(var.to_string());
        let Some((s, mut e)) = self.step_node(body, current, event, &env_i, &frozen_inner, emitted)? else {
            return Ok(None);
        };
        restore(&mut e, var, shadowed);
        let mut next = instances.clone();
        next.insert(key, Arc::new(s));
        Ok(Some((AstdState::QInterleave { env: local.clone(), instances: next }, e)))
    }

    #[allow(clippy::too_many_arguments)]
    fn step_call(
        &self,
        spec: &AstdSpec,
        callee: &str,
        args: &[(String, super::spec::Expr)],
        local: &Env,
        inner: &AstdState,
        event: &Event,
        env_g: Env,
        frozen: &BTreeSet<String>,
        emitted: &mut Vec<Value>,
    ) -> Result<Inner, EngineError> {
        let target = self.program.resolve(callee)?;
        if args.len() != target.params.len() {
            return Err(EngineError::Spec(format!("arity mismatch calling `{callee}`")));
        }
        let mut bound = Vec::with_capacity(args.len());
        {
            let empty = Env::new();
            let scope = Scope { env: &env_g, captures: &empty };
            for (param, expr) in args {
                if !target.params.contains(param) {
                    return Err(EngineError::Spec(format!("`{callee}` has no parameter `{param}`")));
                }
                let v = expr
                    .eval(&scope)
                    .map_err(|e| EngineError::Action { node: spec.name.clone(), source: e })?;
                bound.push((param.clone(), v));
            }
        }
        let mut env_c = env_g;
        let mut frozen_inner = frozen.clone();
        let mut shadowed = Vec::new();
        for (param, v) in bound {
            shadowed.push((param.clone(), env_c.insert(param.clone(), v)));
            frozen_inner.insert(param);
        }
        let Some((s, mut e)) = self.step_node(target, inner, event, &env_c, &frozen_inner, emitted)? else {
            return Ok(None);
        };
        for (param, prev) in shadowed.into_iter().rev() {
            restore(&mut e, &param, prev);
        }
        Ok(Some((AstdState::Call { env: local.clone(), inner: Box::new(s) }, e)))
    }

    /// Canonical nested text form of a state, with stable key ordering.
    pub fn dump(&self, state: &AstdState) -> Result<String, EngineError> {
        let mut out = String::new();
        self.dump_node(&self.program.root, state, 0, &mut out)?;
        Ok(out)
    }

    pub fn dump_spec(&self, spec: &AstdSpec, state: &AstdState) -> Result<String, EngineError> {
        let mut out = String::new();
        self.dump_node(spec, state, 0, &mut out)?;
        Ok(out)
    }

    fn dump_node(&self, spec: &AstdSpec, state: &AstdState, depth: usize, out: &mut String) -> Result<(), EngineError> {
        let pad = "  ".repeat(depth);
        let _ = write!(out, "{pad}{} {}", state.kind(), spec.name);
        if let AstdState::Automaton { current, .. } = state {
            let _ = write!(out, " @{current}");
        }
        let _ = writeln!(out, " {}", state.env().render());
        match (&spec.body, state) {
            (Body::Automaton(_), AstdState::Automaton { .. }) => {}
            (Body::Flow(l, r), AstdState::Flow { left, right, .. }) => {
                self.dump_node(l, left, depth + 1, out)?;
                self.dump_node(r, right, depth + 1, out)?;
            }
            (Body::QFlow { var, body, .. }, AstdState::QFlow { instances, .. }) => {
                for (k, s) in instances {
                    let _ = writeln!(out, "{pad}  [{var} = {k}]");
                    self.dump_node(body, s, depth + 2, out)?;
                }
            }
            (Body::QInterleave { var, body, .. }, AstdState::QInterleave { instances, .. }) => {
                let mut keys: Vec<&Key> = instances.keys().collect();
                keys.sort();
                for k in keys {
                    let _ = writeln!(out, "{pad}  [{var} = {k}]");
                    self.dump_node(body, &instances[k], depth + 2, out)?;
                }
            }
            (Body::Call { callee, .. }, AstdState::Call { inner, .. }) => {
                self.dump_node(self.program.resolve(callee)?, inner, depth + 1, out)?;
            }
            _ => return Err(shape(spec, state)),
        }
        Ok(())
    }
}

fn restore(env: &mut Env, var: &str, previous: Option<Value>) {
    match previous {
        Some(v) => {
            env.insert(var, v);
        }
        None => {
            env.remove(var);
        }
    }
}

fn shape(spec: &AstdSpec, state: &AstdState) -> EngineError {
    EngineError::ShapeMismatch { node: spec.name.clone(), state: state.kind() }
}
