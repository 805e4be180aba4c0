use std::collections::BTreeMap;
use std::sync::Arc;

use indexmap::IndexMap;

use super::env::Env;
use super::value::Key;

/// Runtime state tree mirroring an [`AstdSpec`](super::AstdSpec).
#[derive(Debug, Clone, PartialEq)]
pub enum AstdState {
    Automaton { current: String, env: Env },
    Flow { env: Env, left: Box<AstdState>, right: Box<AstdState> },
    /// One entry per element of the quantification domain.
    QFlow { env: Env, instances: BTreeMap<Key, AstdState> },
    /// Instances in creation order; unbounded domains populate lazily.
    QInterleave { env: Env, instances: IndexMap<Key, Arc<AstdState>> },
    Call { env: Env, inner: Box<AstdState> },
}

impl AstdState {
    pub fn env(&self) -> &Env {
        match self {
            AstdState::Automaton { env, .. }
            | AstdState::Flow { env, .. }
            | AstdState::QFlow { env, .. }
            | AstdState::QInterleave { env, .. }
            | AstdState::Call { env, .. } => env,
        }
    }

    pub(crate) fn set_env(&mut self, new_env: Env) {
        match self {
            AstdState::Automaton { env, .. }
            | AstdState::Flow { env, .. }
            | AstdState::QFlow { env, .. }
            | AstdState::QInterleave { env, .. }
            | AstdState::Call { env, .. } => *env = new_env,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AstdState::Automaton { .. } => "automaton",
            AstdState::Flow { .. } => "flow",
            AstdState::QFlow { .. } => "qflow",
            AstdState::QInterleave { .. } => "qinterleave",
            AstdState::Call { .. } => "call",
        }
    }

    /// Instance of a quantified node, if present.
    pub fn instance(&self, key: &Key) -> Option<&AstdState> {
        match self {
            AstdState::QFlow { instances, .. } => instances.get(key),
            AstdState::QInterleave { instances, .. } => instances.get(key).map(|s| s.as_ref()),
            _ => None,
        }
    }

    pub fn instance_keys(&self) -> Vec<Key> {
        match self {
            AstdState::QFlow { instances, .. } => instances.keys().cloned().collect(),
            AstdState::QInterleave { instances, .. } => instances.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }
}
