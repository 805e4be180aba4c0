use std::collections::btree_map;
use std::collections::{BTreeMap, BTreeSet};

use super::value::Value;

/// Finite map from variable names to values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env {
    bindings: BTreeMap<String, Value>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.bindings.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) -> Option<Value> {
        self.bindings.insert(name.into(), value)
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.bindings.remove(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, String, Value> {
        self.bindings.iter()
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.bindings.keys().cloned().collect()
    }

    /// `self ⊕ other`: bindings of `other` win.
    pub fn overridden_by(&self, other: &Env) -> Env {
        let mut out = self.clone();
        for (k, v) in &other.bindings {
            out.bindings.insert(k.clone(), v.clone());
        }
        out
    }

    /// Keep only the variables in `vars`.
    pub fn restrict(&self, vars: &BTreeSet<String>) -> Env {
        Env {
            bindings: self
                .bindings
                .iter()
                .filter(|(k, _)| vars.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Drop the variables in `vars`.
    pub fn subtract(&self, vars: &BTreeSet<String>) -> Env {
        Env {
            bindings: self
                .bindings
                .iter()
                .filter(|(k, _)| !vars.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let parts: Vec<String> = self
            .bindings
            .iter()
            .map(|(k, v)| format!("{k} = {}", v.render()))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

impl<K: Into<String>> FromIterator<(K, Value)> for Env {
    fn from_iter<I: IntoIterator<Item = (K, Value)>>(iter: I) -> Self {
        Env {
            bindings: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}
