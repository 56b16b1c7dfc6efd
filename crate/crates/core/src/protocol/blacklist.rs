use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BlacklistReason {
    PaymentDeclined,
    ShareWithheld,
    TamperEvidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlacklistEntry {
    pub party: String,
    pub reason: BlacklistReason,
    pub since: DateTime<Utc>,
}

impl BlacklistEntry {
    pub fn new(party: impl Into<String>, reason: BlacklistReason, since: DateTime<Utc>) -> Self {
        Self {
            party: party.into(),
            reason,
            since,
        }
    }
}

/// Active exclusions, at most one per party. Entries never expire; only an
/// operator lifts them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blacklist {
    active: BTreeMap<String, BlacklistEntry>,
}

impl Blacklist {
    /// Adds an entry unless the party is already listed. Returns whether a
    /// new entry was created; an existing entry keeps its original reason.
    pub fn add(&mut self, entry: BlacklistEntry) -> bool {
        if self.active.contains_key(&entry.party) {
            return false;
        }
        self.active.insert(entry.party.clone(), entry);
        true
    }

    pub fn lift(&mut self, party: &str) -> Option<BlacklistEntry> {
        self.active.remove(party)
    }

    pub fn is_blacklisted(&self, party: &str) -> bool {
        self.active.contains_key(party)
    }

    pub fn get(&self, party: &str) -> Option<&BlacklistEntry> {
        self.active.get(party)
    }

    pub fn entries(&self) -> impl Iterator<Item = &BlacklistEntry> {
        self.active.values()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}
