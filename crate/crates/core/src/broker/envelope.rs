use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BrokerError;
use crate::money::{Currency, Money};
use crate::pnm;
use crate::protocol::{BusinessModel, NewTransaction, TransactionId};
use crate::vc::Share;

pub const SHARE_FILE: &str = "share.pbm";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SenderRole {
    Buyer,
    Seller,
}

impl fmt::Display for SenderRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SenderRole::Buyer => "buyer",
            SenderRole::Seller => "seller",
        })
    }
}

/// Purchase terms both parties carry with their share, so the bank can open
/// the transaction from whichever share reaches it first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PurchaseTerms {
    pub seller: String,
    pub buyer: String,
    pub amount: Money,
    pub currency: Currency,
    pub business_model: BusinessModel,
    pub captcha_nonce: String,
    pub created_at: DateTime<Utc>,
}

impl PurchaseTerms {
    pub fn to_new_transaction(&self, id: TransactionId) -> NewTransaction {
        NewTransaction {
            id,
            seller: self.seller.clone(),
            buyer: self.buyer.clone(),
            amount: self.amount,
            currency: self.currency.clone(),
            business_model: self.business_model,
            captcha_nonce: self.captcha_nonce.clone(),
            created_at: self.created_at,
        }
    }
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnvelopeMeta {
    pub transaction_id: TransactionId,
    pub sender_role: SenderRole,
    /// Lowercase hex SHA-256 of the PBM payload.
    pub checksum: String,
    pub captcha_issued_at: DateTime<Utc>,
    pub share_generated_at: DateTime<Utc>,
    pub created_at: DateTime<Utc>,
    pub terms: PurchaseTerms,
}

/// `<transaction>-<role>`; unique within a store because conflicting
/// duplicates are refused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvelopeId(String);

impl EnvelopeId {
    pub fn new(txn: TransactionId, role: SenderRole) -> Self {
        Self(format!("{txn}-{role}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EnvelopeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn checksum_hex(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

/// A share in transit with its routing and integrity metadata.
#[derive(Clone, PartialEq, Eq)]
pub struct ShareEnvelope {
    meta: EnvelopeMeta,
    payload: Vec<u8>,
}

impl fmt::Debug for ShareEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShareEnvelope")
            .field("meta", &self.meta)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

impl ShareEnvelope {
    /// Serializes the share and stamps the checksum.
    pub fn seal(
        transaction_id: TransactionId,
        sender_role: SenderRole,
        share: &Share,
        terms: PurchaseTerms,
        captcha_issued_at: DateTime<Utc>,
        share_generated_at: DateTime<Utc>,
        created_at: DateTime<Utc>,
    ) -> Self {
        let payload = pnm::encode_pbm(&share.to_image());
        Self {
            meta: EnvelopeMeta {
                transaction_id,
                sender_role,
                checksum: checksum_hex(&payload),
                captcha_issued_at,
                share_generated_at,
                created_at,
                terms,
            },
            payload,
        }
    }

    /// Reassembles an envelope from parts without checking it.
    pub fn from_parts(meta: EnvelopeMeta, payload: Vec<u8>) -> Self {
        Self { meta, payload }
    }

    pub fn id(&self) -> EnvelopeId {
        EnvelopeId::new(self.meta.transaction_id, self.meta.sender_role)
    }

    pub fn meta(&self) -> &EnvelopeMeta {
        &self.meta
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Raw access to the payload, e.g. to simulate damage in transit.
    pub fn payload_mut(&mut self) -> &mut Vec<u8> {
        &mut self.payload
    }

    pub fn transaction_id(&self) -> TransactionId {
        self.meta.transaction_id
    }

    pub fn sender_role(&self) -> SenderRole {
        self.meta.sender_role
    }

    pub fn verify(&self) -> Result<(), BrokerError> {
        let actual = checksum_hex(&self.payload);
        if !actual.eq_ignore_ascii_case(&self.meta.checksum) {
            return Err(BrokerError::Integrity {
                envelope: self.id(),
                expected: self.meta.checksum.clone(),
                actual,
            });
        }
        Ok(())
    }

    pub fn share(&self) -> Result<Share, BrokerError> {
        let image = pnm::decode_pbm(&self.payload)?;
        Ok(Share::from_image(&image).map_err(pnm::PnmError::from)?)
    }

    /// Writes `share.pbm` and `meta.json` into `dir`, creating it.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), BrokerError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SHARE_FILE), &self.payload)?;
        let meta = serde_json::to_vec_pretty(&self.meta)?;
        fs::write(dir.join(META_FILE), meta)?;
        Ok(())
    }

    /// Loads an envelope directory. The checksum is not checked here.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self, BrokerError> {
        let dir = dir.as_ref();
        let payload = fs::read(dir.join(SHARE_FILE))?;
        let meta: EnvelopeMeta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)?;
        Ok(Self { meta, payload })
    }
}
