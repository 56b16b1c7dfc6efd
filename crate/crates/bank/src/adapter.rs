//! Payment provider boundary. Only a scriptable mock ships.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use pgs_core::protocol::{BatchId, SettlementBatch, SettlementOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdapterError {
    #[error("payment provider {0} timed out")]
    Timeout(String),
}

/// Instruction for the mock's next answer on a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "outcome")]
pub enum MockBehavior {
    Success,
    Declined {
        reason: String,
    },
    /// The transfer goes through but the answer is lost.
    Timeout,
}

pub trait PaymentAdapter: Send {
    fn name(&self) -> &str;

    /// Must be idempotent per batch id: resubmitting a batch never moves
    /// money twice.
    fn submit_transfer(&mut self, batch: &SettlementBatch) -> Result<SettlementOutcome, AdapterError>;

    /// Scripts the next answer for `batch`. Real providers ignore this.
    fn script(&mut self, _batch: BatchId, _behavior: MockBehavior) -> bool {
        false
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockAdapter {
    default: Option<MockBehavior>,
    scripted: BTreeMap<BatchId, MockBehavior>,
    submissions: BTreeMap<BatchId, u32>,
    transfers: BTreeMap<BatchId, String>,
    declined: BTreeMap<BatchId, String>,
}

impl MockAdapter {
    /// Answers `Success` unless scripted otherwise.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(behavior: MockBehavior) -> Self {
        Self {
            default: Some(behavior),
            ..Self::default()
        }
    }

    pub fn submissions(&self, batch: BatchId) -> u32 {
        self.submissions.get(&batch).copied().unwrap_or(0)
    }

    /// Number of distinct transfers actually executed.
    pub fn transfer_count(&self) -> usize {
        self.transfers.len()
    }

    pub fn transfer_reference(&self, batch: BatchId) -> Option<&str> {
        self.transfers.get(&batch).map(String::as_str)
    }
}

impl PaymentAdapter for MockAdapter {
    fn name(&self) -> &str {
        "mock"
    }

    fn submit_transfer(&mut self, batch: &SettlementBatch) -> Result<SettlementOutcome, AdapterError> {
        let id = batch.id();
        *self.submissions.entry(id).or_default() += 1;
        if let Some(reference) = self.transfers.get(&id) {
            return Ok(SettlementOutcome::Success {
                reference: reference.clone(),
            });
        }
        if let Some(reason) = self.declined.get(&id) {
            return Ok(SettlementOutcome::Declined { reason: reason.clone() });
        }
        let behavior = self
            .scripted
            .remove(&id)
            .or_else(|| self.default.clone())
            .unwrap_or(MockBehavior::Success);
        let reference = format!("MOCK-{}-{}", id, batch.total_amount());
        match behavior {
            MockBehavior::Success => {
                self.transfers.insert(id, reference.clone());
                Ok(SettlementOutcome::Success { reference })
            }
            MockBehavior::Declined { reason } => {
                self.declined.insert(id, reason.clone());
                Ok(SettlementOutcome::Declined { reason })
            }
            MockBehavior::Timeout => {
                self.transfers.insert(id, reference);
                Err(AdapterError::Timeout(self.name().into()))
            }
        }
    }

    fn script(&mut self, batch: BatchId, behavior: MockBehavior) -> bool {
        self.scripted.insert(batch, behavior);
        true
    }
}

/// A [`MockAdapter`] that stays inspectable after being handed to the bank.
#[derive(Debug, Clone, Default)]
pub struct SharedMock(Arc<Mutex<MockAdapter>>);

impl SharedMock {
    pub fn new(mock: MockAdapter) -> Self {
        Self(Arc::new(Mutex::new(mock)))
    }

    pub fn lock(&self) -> MutexGuard<'_, MockAdapter> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl PaymentAdapter for SharedMock {
    fn name(&self) -> &str {
        "mock"
    }

    fn submit_transfer(&mut self, batch: &SettlementBatch) -> Result<SettlementOutcome, AdapterError> {
        self.lock().submit_transfer(batch)
    }

    fn script(&mut self, batch: BatchId, behavior: MockBehavior) -> bool {
        self.lock().script(batch, behavior)
    }
}
