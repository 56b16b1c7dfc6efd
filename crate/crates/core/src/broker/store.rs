use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BrokerError, EnvelopeId, ShareEnvelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Connectivity {
    Online,
    Offline,
}

/// What the bank said about one upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum UploadAck {
    Stored,
    /// The bank already had this exact envelope.
    Duplicate,
}

/// The bank's share intake as seen by a broker.
pub trait BankEndpoint {
    fn upload(&mut self, envelope: &ShareEnvelope) -> Result<UploadAck, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveryReceipt {
    pub envelope: EnvelopeId,
    pub checksum: String,
    pub delivered_at: DateTime<Utc>,
    pub ack: UploadAck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveryFailure {
    pub envelope: EnvelopeId,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveryReport {
    pub delivered: Vec<DeliveryReceipt>,
    pub failed: Vec<DeliveryFailure>,
}

/// What `collect` did with an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collected {
    Queued,
    /// Byte-identical to one already pending or delivered.
    AlreadyHeld,
}

/// A broker's holding area. Envelopes wait here until the broker is online
/// and are removed only once the bank acknowledges them.
#[derive(Debug, Clone)]
pub struct BrokerStore {
    pending: BTreeMap<EnvelopeId, ShareEnvelope>,
    delivered: BTreeMap<EnvelopeId, DeliveryReceipt>,
    connectivity: Connectivity,
}

impl Default for BrokerStore {
    fn default() -> Self {
        Self::new()
    }
}

impl BrokerStore {
    /// A new store starts offline.
    pub fn new() -> Self {
        Self {
            pending: BTreeMap::new(),
            delivered: BTreeMap::new(),
            connectivity: Connectivity::Offline,
        }
    }

    pub(crate) fn from_parts(
        pending: BTreeMap<EnvelopeId, ShareEnvelope>,
        delivered: BTreeMap<EnvelopeId, DeliveryReceipt>,
        connectivity: Connectivity,
    ) -> Self {
        Self {
            pending,
            delivered,
            connectivity,
        }
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn set_connectivity(&mut self, c: Connectivity) {
        self.connectivity = c;
    }

    pub fn pending(&self) -> impl Iterator<Item = &ShareEnvelope> {
        self.pending.values()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn get_pending_mut(&mut self, id: &EnvelopeId) -> Option<&mut ShareEnvelope> {
        self.pending.get_mut(id)
    }

    pub fn receipts(&self) -> impl Iterator<Item = &DeliveryReceipt> {
        self.delivered.values()
    }

    pub fn collect(&mut self, envelope: ShareEnvelope) -> Result<Collected, BrokerError> {
        envelope.verify()?;
        let id = envelope.id();
        if let Some(held) = self.pending.get(&id) {
            return if held == &envelope {
                Ok(Collected::AlreadyHeld)
            } else {
                Err(BrokerError::Conflict(id))
            };
        }
        if let Some(receipt) = self.delivered.get(&id) {
            return if receipt.checksum == envelope.meta().checksum {
                Ok(Collected::AlreadyHeld)
            } else {
                Err(BrokerError::Conflict(id))
            };
        }
        self.pending.insert(id, envelope);
        Ok(Collected::Queued)
    }

    /// Uploads every pending envelope. Each is re-verified first, so damage
    /// picked up while held is reported instead of forwarded.
    pub fn deliver_all(
        &mut self,
        bank: &mut dyn BankEndpoint,
        now: DateTime<Utc>,
    ) -> Result<DeliveryReport, BrokerError> {
        if self.connectivity != Connectivity::Online {
            return Err(BrokerError::NotConnected);
        }
        let mut report = DeliveryReport::default();
        let ids: Vec<EnvelopeId> = self.pending.keys().cloned().collect();
        for id in ids {
            let envelope = &self.pending[&id];
            if let Err(e) = envelope.verify() {
                report.failed.push(DeliveryFailure {
                    envelope: id,
                    error: e.to_string(),
                });
                continue;
            }
            match bank.upload(envelope) {
                Ok(ack) => {
                    let receipt = DeliveryReceipt {
                        envelope: id.clone(),
                        checksum: envelope.meta().checksum.clone(),
                        delivered_at: now,
                        ack,
                    };
                    self.pending.remove(&id);
                    self.delivered.insert(id, receipt.clone());
                    report.delivered.push(receipt);
                }
                Err(error) => report.failed.push(DeliveryFailure { envelope: id, error }),
            }
        }
        Ok(report)
    }

    pub(crate) fn parts(
        &self,
    ) -> (
        &BTreeMap<EnvelopeId, ShareEnvelope>,
        &BTreeMap<EnvelopeId, DeliveryReceipt>,
    ) {
        (&self.pending, &self.delivered)
    }
}
