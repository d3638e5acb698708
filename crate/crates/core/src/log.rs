//! The append-only event log.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use indexmap::IndexSet;

use crate::term::{Event, Term, Usage};

static NEXT_LOG_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_LOG_ID.fetch_add(1, Ordering::Relaxed)
}

/// A set of events. Insertion order is kept for reporting only; equality is
/// set equality.
///
/// Every log instance carries a process-unique id and a version that bumps on
/// each effective insertion, so `(id, version)` identifies one exact event set
/// for memoization.
#[derive(Debug)]
pub struct Log {
    id: u64,
    version: u64,
    events: IndexSet<Event>,
    usages: HashMap<Term, Vec<Usage>>,
}

impl Log {
    pub fn new() -> Log {
        Log {
            id: fresh_id(),
            version: 0,
            events: IndexSet::new(),
            usages: HashMap::new(),
        }
    }

    /// Inserts `e`; returns `false` if it was already logged.
    pub fn add(&mut self, e: Event) -> bool {
        if self.events.contains(&e) {
            return false;
        }
        if let Event::New(t, u) = &e {
            self.usages.entry(t.clone()).or_default().push(u.clone());
        }
        self.events.insert(e);
        self.version += 1;
        true
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.events.contains(e)
    }

    pub fn has_bad(&self, p: &Term) -> bool {
        self.events.contains(&Event::Bad(p.clone()))
    }

    /// Usages ascribed to `t` by `New` events, in logging order.
    pub fn usages_of(&self, t: &Term) -> &[Usage] {
        self.usages.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Every `New` is on a literal and no term has two distinct usages.
    pub fn is_good(&self) -> bool {
        self.usages
            .iter()
            .all(|(t, us)| t.is_literal() && us.windows(2).all(|w| w[0] == w[1]))
    }

    /// `self ⊆ other` as event sets.
    pub fn is_subset_of(&self, other: &Log) -> bool {
        self.events.len() <= other.events.len() && self.events.iter().all(|e| other.contains(e))
    }
}

impl Default for Log {
    fn default() -> Log {
        Log::new()
    }
}

impl Clone for Log {
    /// A clone is a distinct log instance and gets its own id.
    fn clone(&self) -> Log {
        Log {
            id: fresh_id(),
            version: self.version,
            events: self.events.clone(),
            usages: self.usages.clone(),
        }
    }
}

impl PartialEq for Log {
    fn eq(&self, other: &Log) -> bool {
        self.events.len() == other.events.len() && self.is_subset_of(other)
    }
}

impl Eq for Log {}

impl FromIterator<Event> for Log {
    fn from_iter<I: IntoIterator<Item = Event>>(iter: I) -> Log {
        let mut log = Log::new();
        for e in iter {
            log.add(e);
        }
        log
    }
}

/// Functional insertion: a new log holding `e` and every event of `log`.
pub fn log_add(log: &Log, e: Event) -> Log {
    let mut out = log.clone();
    out.add(e);
    out
}

pub fn log_good(log: &Log) -> bool {
    log.is_good()
}

pub fn log_leq(l1: &Log, l2: &Log) -> bool {
    l1.is_subset_of(l2)
}
