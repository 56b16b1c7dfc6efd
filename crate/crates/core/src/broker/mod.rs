//! Store-and-forward of share envelopes from phones to the bank.

mod envelope;
pub mod spool;
mod store;

pub use envelope::{
    checksum_hex, EnvelopeId, EnvelopeMeta, PurchaseTerms, SenderRole, ShareEnvelope, META_FILE, SHARE_FILE,
};
pub use store::{
    BankEndpoint, BrokerStore, Collected, Connectivity, DeliveryFailure, DeliveryReceipt, DeliveryReport, UploadAck,
};

use thiserror::Error;

use crate::pnm::PnmError;

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("envelope {envelope} failed its checksum (expected {expected}, got {actual})")]
    Integrity {
        envelope: EnvelopeId,
        expected: String,
        actual: String,
    },
    #[error("a different envelope {0} is already held")]
    Conflict(EnvelopeId),
    #[error("broker is offline")]
    NotConnected,
    #[error("share payload: {0}")]
    Payload(#[from] PnmError),
    #[error("metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::money::{Currency, Money};
    use crate::protocol::{BusinessModel, TransactionId};
    use crate::vc::{generate_shares, BinaryImage, Pixel, ShareSeed};
    use chrono::{DateTime, TimeZone, Utc};

    pub(crate) fn t(s: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap() + chrono::Duration::seconds(s)
    }

    pub(crate) fn envelope(txn: u64, role: SenderRole, seed: u64) -> ShareEnvelope {
        let secret =
            BinaryImage::from_fn(8, 4, |x, y| if (x + y) % 3 == 0 { Pixel::Black } else { Pixel::White }).unwrap();
        let (a, b) = generate_shares(&secret, ShareSeed::from_u64(seed)).unwrap();
        let share = if role == SenderRole::Seller { a } else { b };
        let terms = PurchaseTerms {
            seller: "seller2@alphaplus.com".into(),
            buyer: "buyer1@alphaplus.com".into(),
            amount: Money(1500),
            currency: Currency::xof(),
            business_model: BusinessModel::CarryThenCash,
            captcha_nonce: "00ff".into(),
            created_at: t(0),
        };
        ShareEnvelope::seal(TransactionId(txn), role, &share, terms, t(0), t(5), t(5))
    }

    #[test]
    fn seal_verify_and_decode() {
        let e = envelope(1, SenderRole::Seller, 3);
        e.verify().unwrap();
        assert_eq!(e.id().as_str(), "1-seller");
        assert_eq!(e.meta().checksum, checksum_hex(e.payload()));
        let share = e.share().unwrap();
        assert_eq!(share.secret_width(), 8);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = envelope(2, SenderRole::Buyer, 4);
        e.write_dir(dir.path()).unwrap();
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(META_FILE)).unwrap()).unwrap();
        assert_eq!(json["transactionId"], 2);
        assert_eq!(json["senderRole"], "buyer");
        assert_eq!(ShareEnvelope::read_dir(dir.path()).unwrap(), e);
    }
}
