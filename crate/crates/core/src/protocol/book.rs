//! In-memory aggregate store for transactions, batches and the blacklist.
//!
//! Every mutating operation comes in two halves: `plan_*` validates and
//! computes a [`Mutation`] without touching the book, and [`ProtocolBook::commit`]
//! applies it. Callers that need durability persist the mutation between the
//! two steps; the unprefixed helpers do both at once.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    accrue_to_batch, create_transaction, BatchId, BatchState, Blacklist, BlacklistEntry, BlacklistReason, Effect,
    Event, NewTransaction, ProtocolError, Result, SettlementBatch, Transaction, TransactionId, TransactionState,
};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Notification {
    pub seller: String,
    pub transaction: TransactionId,
    pub message: String,
    pub at: DateTime<Utc>,
}

/// How large a batch must grow before a transfer is triggered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ThresholdPolicy {
    /// Used when a pair has no history and no override.
    pub default_threshold: Money,
    /// Multiple of the pair's median purchase.
    pub median_multiplier: i64,
    /// Fixed thresholds per (seller, buyer).
    #[serde(default)]
    pub overrides: BTreeMap<String, Money>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            default_threshold: Money(10_000),
            median_multiplier: 10,
            overrides: BTreeMap::new(),
        }
    }
}

impl ThresholdPolicy {
    pub fn fixed(threshold: Money) -> Self {
        Self {
            default_threshold: threshold,
            ..Self::default()
        }
    }

    fn pair_key(seller: &str, buyer: &str) -> String {
        format!("{seller}|{buyer}")
    }

    pub fn set_override(&mut self, seller: &str, buyer: &str, threshold: Money) {
        self.overrides.insert(Self::pair_key(seller, buyer), threshold);
    }

    /// Override if configured, else `median_multiplier` times the median of
    /// `history`, else the default.
    pub fn resolve(&self, seller: &str, buyer: &str, history: &[Money]) -> Money {
        if let Some(t) = self.overrides.get(&Self::pair_key(seller, buyer)) {
            return *t;
        }
        if history.is_empty() || self.median_multiplier <= 0 {
            return self.default_threshold;
        }
        let mut sorted: Vec<i64> = history.iter().map(|m| m.0).collect();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2
        };
        Money(median.saturating_mul(self.median_multiplier))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "outcome")]
pub enum SettlementOutcome {
    Success { reference: String },
    Declined { reason: String },
}

/// A set of upserts produced by a plan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Mutation {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transactions: Vec<Transaction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<SettlementBatch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blacklisted: Vec<BlacklistEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lifted: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notifications: Vec<Notification>,
}

impl Mutation {
    pub fn is_empty(&self) -> bool {
        self == &Mutation::default()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProtocolBook {
    transactions: BTreeMap<TransactionId, Transaction>,
    batches: BTreeMap<BatchId, SettlementBatch>,
    blacklist: Blacklist,
    notifications: Vec<Notification>,
    policy: ThresholdPolicy,
}

// Overlay of pending upserts on top of the committed book.
struct Draft<'a> {
    book: &'a ProtocolBook,
    txns: BTreeMap<TransactionId, Transaction>,
    batches: BTreeMap<BatchId, SettlementBatch>,
    blacklisted: Vec<BlacklistEntry>,
    notifications: Vec<Notification>,
}

impl<'a> Draft<'a> {
    fn new(book: &'a ProtocolBook) -> Self {
        Self {
            book,
            txns: BTreeMap::new(),
            batches: BTreeMap::new(),
            blacklisted: Vec::new(),
            notifications: Vec::new(),
        }
    }

    fn txn(&self, id: TransactionId) -> Result<Transaction> {
        self.txns
            .get(&id)
            .or_else(|| self.book.transactions.get(&id))
            .cloned()
            .ok_or(ProtocolError::UnknownTransaction(id))
    }

    fn batch(&self, id: BatchId) -> Result<SettlementBatch> {
        self.batches
            .get(&id)
            .or_else(|| self.book.batches.get(&id))
            .cloned()
            .ok_or(ProtocolError::UnknownBatch(id))
    }

    fn apply(&mut self, id: TransactionId, event: &Event, at: DateTime<Utc>) -> Result<Transaction> {
        let tr = self.txn(id)?.apply(event, at)?;
        for effect in tr.effects {
            match effect {
                Effect::Blacklist { party, reason } => {
                    let listed =
                        self.book.blacklist.is_blacklisted(&party) || self.blacklisted.iter().any(|e| e.party == party);
                    if !listed {
                        self.blacklisted.push(BlacklistEntry::new(party, reason, at));
                    }
                }
                Effect::NotifySeller {
                    seller,
                    transaction,
                    message,
                } => self.notifications.push(Notification {
                    seller,
                    transaction,
                    message,
                    at,
                }),
            }
        }
        self.txns.insert(id, tr.transaction.clone());
        Ok(tr.transaction)
    }

    fn finish(self) -> Mutation {
        Mutation {
            transactions: self.txns.into_values().collect(),
            batches: self.batches.into_values().collect(),
            blacklisted: self.blacklisted,
            lifted: Vec::new(),
            notifications: self.notifications,
        }
    }
}

impl ProtocolBook {
    pub fn new(policy: ThresholdPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn policy(&self) -> &ThresholdPolicy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: ThresholdPolicy) {
        self.policy = policy;
    }

    pub fn transaction(&self, id: TransactionId) -> Option<&Transaction> {
        self.transactions.get(&id)
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.transactions.values()
    }

    pub fn batch(&self, id: BatchId) -> Option<&SettlementBatch> {
        self.batches.get(&id)
    }

    pub fn batches(&self) -> impl Iterator<Item = &SettlementBatch> {
        self.batches.values()
    }

    pub fn blacklist(&self) -> &Blacklist {
        &self.blacklist
    }

    pub fn notifications(&self) -> &[Notification] {
        &self.notifications
    }

    pub fn commit(&mut self, m: Mutation) {
        for t in m.transactions {
            self.transactions.insert(t.id(), t);
        }
        for b in m.batches {
            self.batches.insert(b.id(), b);
        }
        for e in m.blacklisted {
            self.blacklist.add(e);
        }
        for p in m.lifted {
            self.blacklist.lift(&p);
        }
        self.notifications.extend(m.notifications);
    }

    pub fn plan_create(&self, spec: NewTransaction) -> Result<Mutation> {
        if self.transactions.contains_key(&spec.id) {
            return Err(ProtocolError::DuplicateTransaction(spec.id));
        }
        let txn = create_transaction(spec, &self.blacklist)?;
        Ok(Mutation {
            transactions: vec![txn],
            ..Mutation::default()
        })
    }

    /// Inserts a record as-is, e.g. an imported fixture.
    pub fn plan_import(&self, txn: Transaction) -> Result<Mutation> {
        if self.transactions.contains_key(&txn.id()) {
            return Err(ProtocolError::DuplicateTransaction(txn.id()));
        }
        Ok(Mutation {
            transactions: vec![txn],
            ..Mutation::default()
        })
    }

    /// Applies a sequence of events to one transaction.
    pub fn plan_events(&self, id: TransactionId, events: &[Event], at: DateTime<Utc>) -> Result<Mutation> {
        let mut draft = Draft::new(self);
        for e in events {
            draft.apply(id, e, at)?;
        }
        Ok(draft.finish())
    }

    /// Operator approval: `ToApprove -> Accepted`, then accrual into the
    /// pair's open batch. Triggering moves every member to `Queued`.
    pub fn plan_approve(&self, id: TransactionId, at: DateTime<Utc>) -> Result<Mutation> {
        let mut draft = Draft::new(self);
        let txn = draft.apply(id, &Event::OperatorApprove, at)?;

        let seller = txn.seller().identifier();
        let buyer = txn.buyer().identifier();
        let open = self.batches.values().find(|b| {
            b.state() == BatchState::Open
                && b.seller().identifier() == seller
                && b.buyer().identifier() == buyer
                && b.currency() == txn.currency()
        });
        let batch = match open {
            Some(b) => b.clone(),
            None => {
                let history: Vec<Money> = self
                    .transactions
                    .values()
                    .filter(|t| {
                        t.id() != id
                            && t.seller().identifier() == seller
                            && t.buyer().identifier() == buyer
                            && matches!(
                                t.state(),
                                TransactionState::Accepted
                                    | TransactionState::Queued
                                    | TransactionState::Settled
                                    | TransactionState::Declined
                            )
                    })
                    .map(|t| t.amount())
                    .collect();
                let next_id = self.batches.keys().next_back().map_or(1, |b| b.0 + 1);
                SettlementBatch::open(
                    BatchId(next_id),
                    txn.seller().clone(),
                    txn.buyer().clone(),
                    txn.currency().clone(),
                    self.policy.resolve(seller, buyer, &history),
                    at,
                )
            }
        };
        let threshold = batch.threshold_at_creation();
        let batch = accrue_to_batch(batch, &txn, threshold)?;
        let mut member = txn;
        member.set_batch(batch.id());
        draft.txns.insert(id, member);
        if batch.state() == BatchState::Triggered {
            for &m in batch.transaction_ids() {
                draft.apply(m, &Event::BatchTriggered { batch: batch.id() }, at)?;
            }
        }
        draft.batches.insert(batch.id(), batch);
        Ok(draft.finish())
    }

    /// Records the payment provider's answer for a triggered batch.
    pub fn plan_settlement(
        &self,
        batch_id: BatchId,
        outcome: &SettlementOutcome,
        at: DateTime<Utc>,
    ) -> Result<Mutation> {
        let mut draft = Draft::new(self);
        let mut batch = draft.batch(batch_id)?;
        let event = match outcome {
            SettlementOutcome::Success { reference } => {
                batch.mark_settled(reference.clone())?;
                Event::PaymentOk {
                    reference: reference.clone(),
                }
            }
            SettlementOutcome::Declined { reason } => {
                batch.mark_declined(reason.clone())?;
                Event::PaymentDeclined { reason: reason.clone() }
            }
        };
        for &m in batch.transaction_ids() {
            draft.apply(m, &event, at)?;
        }
        draft.batches.insert(batch_id, batch);
        Ok(draft.finish())
    }

    pub fn plan_blacklist(&self, party: &str, reason: BlacklistReason, at: DateTime<Utc>) -> Mutation {
        if self.blacklist.is_blacklisted(party) {
            return Mutation::default();
        }
        Mutation {
            blacklisted: vec![BlacklistEntry::new(party, reason, at)],
            ..Mutation::default()
        }
    }

    pub fn plan_lift(&self, party: &str) -> Mutation {
        if !self.blacklist.is_blacklisted(party) {
            return Mutation::default();
        }
        Mutation {
            lifted: vec![party.to_string()],
            ..Mutation::default()
        }
    }

    pub fn create(&mut self, spec: NewTransaction) -> Result<&Transaction> {
        let id = spec.id;
        let m = self.plan_create(spec)?;
        self.commit(m);
        Ok(&self.transactions[&id])
    }

    pub fn apply(&mut self, id: TransactionId, event: Event, at: DateTime<Utc>) -> Result<&Transaction> {
        let m = self.plan_events(id, &[event], at)?;
        self.commit(m);
        Ok(&self.transactions[&id])
    }

    /// Approves and returns the batch the transaction landed in.
    pub fn approve(&mut self, id: TransactionId, at: DateTime<Utc>) -> Result<BatchId> {
        let m = self.plan_approve(id, at)?;
        self.commit(m);
        Ok(self.transactions[&id]
            .batch()
            .expect("approved transactions are batched"))
    }

    pub fn settle(
        &mut self,
        batch: BatchId,
        outcome: SettlementOutcome,
        at: DateTime<Utc>,
    ) -> Result<&SettlementBatch> {
        let m = self.plan_settlement(batch, &outcome, at)?;
        self.commit(m);
        Ok(&self.batches[&batch])
    }

    pub fn blacklist_party(&mut self, party: &str, reason: BlacklistReason, at: DateTime<Utc>) -> bool {
        let m = self.plan_blacklist(party, reason, at);
        let added = !m.is_empty();
        self.commit(m);
        added
    }

    pub fn lift_blacklist(&mut self, party: &str) -> bool {
        let m = self.plan_lift(party);
        let lifted = !m.is_empty();
        self.commit(m);
        lifted
    }

    /// Every batch's total equals the sum of its members' amounts.
    pub fn batches_conserved(&self) -> bool {
        self.batches.values().all(|b| {
            b.is_conserved()
                && b.transaction_ids()
                    .iter()
                    .map(|id| self.transactions.get(id).map_or(Money(i64::MIN), |t| t.amount()))
                    .sum::<Money>()
                    == b.total_amount()
        })
    }
}
