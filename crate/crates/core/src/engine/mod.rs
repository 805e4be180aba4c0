//! Interpreter for ASTD operator trees: automata, binary flow, quantified
//! flow, quantified interleave and call.
//!
//! A specification is an [`AstdSpec`] tree wrapped in a validated
//! [`Program`]. The runtime state is an [`AstdState`] tree of the same
//! shape. Every node carries attributes; stepping a node threads the
//! enclosing environment through its body and splits the result back into
//! local attributes and enclosing variables.
//!
//! Quantified flows iterate their domain in ascending order, which makes the
//! engine a deterministic refinement of the non-deterministic permutation
//! choice. A flow or quantified flow in which no sub-instance can fire
//! refuses the event.

mod env;
mod interp;
mod spec;
mod state;
mod value;

pub use env::Env;
pub use interp::{Engine, OrderHook, StepOutcome};
pub use spec::{
    Action, ActionCtx, ActionError, AstdSpec, Automaton, Body, CaptureType, Domain, Event,
    EventPattern, Expr, Guard, Init, Program, Scope, Slot, Transition,
};
pub use state::AstdState;
pub use value::{Handle, HostObject, Key, Value};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("specification error: {0}")]
    Spec(String),
    #[error("state shape does not match node `{node}` (found {state} state)")]
    ShapeMismatch { node: String, state: &'static str },
    #[error("input error: {0}")]
    Input(String),
    #[error("action failed in `{node}`: {source}")]
    Action {
        node: String,
        #[source]
        source: ActionError,
    },
}
