//! Events, alphabets, and per-step label sets.
//!
//! Events are named symbols shared across machines, environments, and
//! formulas. A machine's alphabet is an ordered, duplicate-free collection of
//! events; ordering is the declaration order of the source file, which keeps
//! every derived artifact (projections, compositions, DFAs) deterministic.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// An event symbol. Cheap to clone, compared by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event(Arc<str>);

impl Event {
    pub fn new(name: &str) -> Self {
        Event(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Event {
    fn from(s: &str) -> Self {
        Event::new(s)
    }
}

/// An ordered set of events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventAlphabet {
    events: Vec<Event>,
}

impl EventAlphabet {
    /// Builds an alphabet, rejecting duplicates.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if events[..i].contains(e) {
                return Err(Error::invalid(format!("duplicate event '{e}' in alphabet")));
            }
        }
        Ok(EventAlphabet { events })
    }

    pub fn from_names(names: &[&str]) -> Result<Self> {
        EventAlphabet::new(names.iter().map(|n| Event::new(n)).collect())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.events.contains(e)
    }

    pub fn index_of(&self, e: &Event) -> Option<usize> {
        self.events.iter().position(|x| x == e)
    }

    pub fn get(&self, idx: usize) -> &Event {
        &self.events[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// True when every event of `other` is also in `self`.
    pub fn is_superset_of(&self, other: &EventAlphabet) -> bool {
        other.events.iter().all(|e| self.contains(e))
    }

    /// Union preserving the order of `self`, then the new events of `other`.
    pub fn union(&self, other: &EventAlphabet) -> EventAlphabet {
        let mut events = self.events.clone();
        for e in &other.events {
            if !events.contains(e) {
                events.push(e.clone());
            }
        }
        EventAlphabet { events }
    }

    /// Same event set regardless of declaration order?
    pub fn same_set(&self, other: &EventAlphabet) -> bool {
        self.len() == other.len() && self.is_superset_of(other)
    }
}

/// The set of events the environment emits in one time step.
///
/// Stored in a canonical order (sorted by name) so that reading order is a
/// function of the set alone. Each individual agent contributes at most one
/// event per step; that restriction is the environments' responsibility and is
/// asserted there.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet {
    events: Vec<Event>,
}

impl LabelSet {
    pub fn empty() -> Self {
        LabelSet { events: Vec::new() }
    }

    pub fn from_events(mut events: Vec<Event>) -> Self {
        events.sort();
        events.dedup();
        LabelSet { events }
    }

    pub fn singleton(e: Event) -> Self {
        LabelSet { events: vec![e] }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.events.contains(e)
    }

    /// Events in canonical (name-sorted) order.
    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_rejects_duplicates() {
        let err = EventAlphabet::from_names(&["P", "D", "P"]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn label_set_is_order_insensitive() {
        let a = LabelSet::from_events(vec![Event::new("D"), Event::new("P")]);
        let b = LabelSet::from_events(vec![Event::new("P"), Event::new("D")]);
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "{D, P}");
    }

    #[test]
    fn union_keeps_declaration_order() {
        let a = EventAlphabet::from_names(&["P", "D"]).unwrap();
        let b = EventAlphabet::from_names(&["D", "G"]).unwrap();
        let u = a.union(&b);
        let names: Vec<_> = u.iter().map(|e| e.name().to_string()).collect();
        assert_eq!(names, ["P", "D", "G"]);
    }
}
