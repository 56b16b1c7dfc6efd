use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BatchId, PartyId, ProtocolError, Result, Transaction, TransactionId, TransactionState};
use crate::money::{Currency, Money};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BatchState {
    Open,
    Triggered,
    Settled,
    Declined,
}

impl fmt::Display for BatchState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Accepted purchases between one seller and one buyer waiting for a single
/// money transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SettlementBatch {
    id: BatchId,
    seller: PartyId,
    buyer: PartyId,
    currency: Currency,
    transaction_ids: Vec<TransactionId>,
    // kept in step with transaction_ids so the total can be re-derived
    amounts: Vec<Money>,
    total_amount: Money,
    threshold_at_creation: Money,
    state: BatchState,
    opened_at: DateTime<Utc>,
    #[serde(default)]
    transfer_reference: Option<String>,
    #[serde(default)]
    decline_reason: Option<String>,
}

impl SettlementBatch {
    pub fn open(
        id: BatchId,
        seller: PartyId,
        buyer: PartyId,
        currency: Currency,
        threshold: Money,
        opened_at: DateTime<Utc>,
    ) -> Self {
        Self {
            id,
            seller,
            buyer,
            currency,
            transaction_ids: Vec::new(),
            amounts: Vec::new(),
            total_amount: Money::ZERO,
            threshold_at_creation: threshold,
            state: BatchState::Open,
            opened_at,
            transfer_reference: None,
            decline_reason: None,
        }
    }

    pub fn id(&self) -> BatchId {
        self.id
    }

    pub fn seller(&self) -> &PartyId {
        &self.seller
    }

    pub fn buyer(&self) -> &PartyId {
        &self.buyer
    }

    pub fn currency(&self) -> &Currency {
        &self.currency
    }

    pub fn transaction_ids(&self) -> &[TransactionId] {
        &self.transaction_ids
    }

    pub fn total_amount(&self) -> Money {
        self.total_amount
    }

    pub fn threshold_at_creation(&self) -> Money {
        self.threshold_at_creation
    }

    pub fn state(&self) -> BatchState {
        self.state
    }

    pub fn opened_at(&self) -> DateTime<Utc> {
        self.opened_at
    }

    pub fn transfer_reference(&self) -> Option<&str> {
        self.transfer_reference.as_deref()
    }

    pub fn decline_reason(&self) -> Option<&str> {
        self.decline_reason.as_deref()
    }

    /// The stored total equals the sum of member amounts.
    pub fn is_conserved(&self) -> bool {
        self.amounts.len() == self.transaction_ids.len()
            && self.amounts.iter().copied().sum::<Money>() == self.total_amount
    }

    pub fn mark_settled(&mut self, reference: String) -> Result<()> {
        self.require_triggered()?;
        self.state = BatchState::Settled;
        self.transfer_reference = Some(reference);
        Ok(())
    }

    pub fn mark_declined(&mut self, reason: String) -> Result<()> {
        self.require_triggered()?;
        self.state = BatchState::Declined;
        self.decline_reason = Some(reason);
        Ok(())
    }

    fn require_triggered(&self) -> Result<()> {
        if self.state != BatchState::Triggered {
            return Err(ProtocolError::BatchNotTriggered(self.id, self.state));
        }
        Ok(())
    }
}

/// Adds an accepted purchase to an open batch. Reaching `threshold`
/// (inclusive) flips the batch to `Triggered`; moving the members to `Queued`
/// is the caller's job.
pub fn accrue_to_batch(mut batch: SettlementBatch, txn: &Transaction, threshold: Money) -> Result<SettlementBatch> {
    if batch.state != BatchState::Open {
        return Err(ProtocolError::BatchNotOpen(batch.id, batch.state));
    }
    if txn.state() != TransactionState::Accepted {
        return Err(ProtocolError::NotAccepted(txn.id(), txn.state()));
    }
    if txn.seller().identifier() != batch.seller.identifier() || txn.buyer().identifier() != batch.buyer.identifier() {
        return Err(ProtocolError::PartyMismatch {
            batch: batch.id,
            transaction: txn.id(),
            seller: txn.seller().identifier().to_string(),
            buyer: txn.buyer().identifier().to_string(),
        });
    }
    if txn.currency() != &batch.currency {
        return Err(ProtocolError::CurrencyMismatch {
            expected: batch.currency.clone(),
            found: txn.currency().clone(),
        });
    }
    if batch.transaction_ids.contains(&txn.id()) {
        return Err(ProtocolError::AlreadyBatched(txn.id(), batch.id));
    }
    let total = batch
        .total_amount
        .checked_add(txn.amount())
        .ok_or(ProtocolError::Validation {
            field: "amount",
            reason: "batch total overflows".into(),
        })?;
    batch.transaction_ids.push(txn.id());
    batch.amounts.push(txn.amount());
    batch.total_amount = total;
    if batch.total_amount >= threshold {
        batch.state = BatchState::Triggered;
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{BusinessModel, TransactionId};
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
    }

    fn accepted(id: u64, buyer: &str, amount: i64) -> Transaction {
        Transaction::restore(
            TransactionId(id),
            PartyId::seller("baker@market").unwrap(),
            PartyId::buyer(buyer).unwrap(),
            Money(amount),
            Currency::xof(),
            BusinessModel::CarryThenCash,
            TransactionState::Accepted,
            t0(),
            t0(),
        )
    }

    fn batch() -> SettlementBatch {
        SettlementBatch::open(
            BatchId(1),
            PartyId::seller("baker@market").unwrap(),
            PartyId::buyer("reseller@market").unwrap(),
            Currency::xof(),
            Money(100),
            t0(),
        )
    }

    #[test]
    fn triggers_on_third_accrual() {
        // running sums 30, 60, 110 against 100: first at-or-above is the third
        let amounts = [30, 30, 50];
        let mut sums = Vec::new();
        let mut acc = 0;
        for a in amounts {
            acc += a;
            sums.push(acc);
        }
        let trigger_at = sums.iter().position(|&s| s >= 100).unwrap();
        assert_eq!((trigger_at, sums[trigger_at]), (2, 110));

        let mut b = batch();
        for (i, a) in amounts.into_iter().enumerate() {
            b = accrue_to_batch(b, &accepted(i as u64 + 1, "reseller@market", a), Money(100)).unwrap();
            assert!(b.is_conserved());
            let expect = if i == trigger_at {
                BatchState::Triggered
            } else {
                BatchState::Open
            };
            assert_eq!(b.state(), expect);
        }
        assert_eq!(b.total_amount(), Money(110));
        assert_eq!(b.transaction_ids().len(), 3);
    }

    #[test]
    fn threshold_is_inclusive() {
        let b = accrue_to_batch(batch(), &accepted(1, "reseller@market", 100), Money(100)).unwrap();
        assert_eq!(b.state(), BatchState::Triggered);
    }

    #[test]
    fn validation_errors_are_distinct() {
        let err = accrue_to_batch(batch(), &accepted(1, "someone@else", 10), Money(100)).unwrap_err();
        assert!(matches!(err, ProtocolError::PartyMismatch { .. }));

        let mut pending = accepted(2, "reseller@market", 10);
        pending = Transaction::restore(
            pending.id(),
            pending.seller().clone(),
            pending.buyer().clone(),
            pending.amount(),
            Currency::xof(),
            BusinessModel::CarryThenCash,
            TransactionState::ToApprove,
            t0(),
            t0(),
        );
        assert!(matches!(
            accrue_to_batch(batch(), &pending, Money(100)),
            Err(ProtocolError::NotAccepted(..))
        ));

        let full = accrue_to_batch(batch(), &accepted(3, "reseller@market", 500), Money(100)).unwrap();
        assert!(matches!(
            accrue_to_batch(full, &accepted(4, "reseller@market", 5), Money(100)),
            Err(ProtocolError::BatchNotOpen(_, BatchState::Triggered))
        ));

        let b = accrue_to_batch(batch(), &accepted(5, "reseller@market", 5), Money(100)).unwrap();
        assert!(matches!(
            accrue_to_batch(b, &accepted(5, "reseller@market", 5), Money(100)),
            Err(ProtocolError::AlreadyBatched(..))
        ));
    }

    #[test]
    fn settle_requires_trigger() {
        let mut b = batch();
        assert!(b.mark_settled("x".into()).is_err());
        let mut b2 = accrue_to_batch(b.clone(), &accepted(1, "reseller@market", 100), Money(100)).unwrap();
        b2.mark_settled("ref".into()).unwrap();
        assert_eq!(b2.transfer_reference(), Some("ref"));
        assert!(b2.mark_declined("late".into()).is_err());
        b = accrue_to_batch(b, &accepted(2, "reseller@market", 100), Money(100)).unwrap();
        b.mark_declined("no funds".into()).unwrap();
        assert_eq!(b.state(), BatchState::Declined);
    }
}
