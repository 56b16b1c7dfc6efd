//! Broker commands over an on-disk spool directory.

use std::path::Path;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use pgs_core::broker::{spool, Collected, Connectivity, DeliveryReport, EnvelopeId, ShareEnvelope};

use crate::client::BankClient;

pub fn status(dir: &Path) -> Result<Vec<String>> {
    let store = spool::load(dir)?;
    let mut lines = vec![format!(
        "connectivity: {}",
        match store.connectivity() {
            Connectivity::Online => "online",
            Connectivity::Offline => "offline",
        }
    )];
    lines.push(format!("pending: {}", store.pending_count()));
    for e in store.pending() {
        lines.push(format!("  {} {}", e.id().as_str(), e.meta().checksum));
    }
    let receipts: Vec<_> = store.receipts().collect();
    lines.push(format!("delivered: {}", receipts.len()));
    for r in receipts {
        lines.push(format!("  {} at {}", r.envelope.as_str(), r.delivered_at.to_rfc3339()));
    }
    Ok(lines)
}

pub fn set_connectivity(dir: &Path, c: Connectivity) -> Result<()> {
    let mut store = spool::load(dir)?;
    store.set_connectivity(c);
    spool::save(&store, dir)?;
    Ok(())
}

/// Verifies and queues envelope directories. Stops at the first refusal
/// without saving anything.
pub fn collect(dir: &Path, envelopes: &[impl AsRef<Path>]) -> Result<Vec<(EnvelopeId, Collected)>> {
    let mut store = spool::load(dir)?;
    let mut out = Vec::new();
    for path in envelopes {
        let path = path.as_ref();
        let e = ShareEnvelope::read_dir(path).with_context(|| format!("reading envelope {}", path.display()))?;
        let id = e.id();
        let what = store
            .collect(e)
            .with_context(|| format!("collecting {}", path.display()))?;
        out.push((id, what));
    }
    spool::save(&store, dir)?;
    Ok(out)
}

/// Uploads everything pending. The spool is saved even when some uploads
/// fail, so acknowledged envelopes are never sent again.
pub fn deliver(dir: &Path, bank: &mut BankClient, now: DateTime<Utc>) -> Result<DeliveryReport> {
    let mut store = spool::load(dir)?;
    let report = store.deliver_all(bank, now)?;
    spool::save(&store, dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pgs_core::broker::{PurchaseTerms, SenderRole};
    use pgs_core::money::{Currency, Money};
    use pgs_core::protocol::{BusinessModel, TransactionId};
    use pgs_core::vc::{generate_shares, BinaryImage, Pixel, ShareSeed};

    fn envelope_dir(root: &Path, txn: u64) -> std::path::PathBuf {
        let secret = BinaryImage::filled(3, 2, Pixel::Black).unwrap();
        let (a, _) = generate_shares(&secret, ShareSeed::from_u64(txn)).unwrap();
        let now = Utc::now();
        let terms = PurchaseTerms {
            seller: "s@x".into(),
            buyer: "b@x".into(),
            amount: Money(10),
            currency: Currency::xof(),
            business_model: BusinessModel::CarryThenCash,
            captcha_nonce: "n".into(),
            created_at: now,
        };
        let e = ShareEnvelope::seal(TransactionId(txn), SenderRole::Seller, &a, terms, now, now, now);
        let dir = root.join(format!("env{txn}"));
        e.write_dir(&dir).unwrap();
        dir
    }

    #[test]
    fn collect_persists_and_refuses_damaged_envelopes() {
        let root = tempfile::tempdir().unwrap();
        let spool_dir = root.path().join("spool");
        let one = envelope_dir(root.path(), 1);
        let got = collect(&spool_dir, &[&one, &one]).unwrap();
        assert_eq!(got[0].1, Collected::Queued);
        assert_eq!(got[1].1, Collected::AlreadyHeld);
        assert!(status(&spool_dir).unwrap().contains(&"pending: 1".to_string()));

        let two = envelope_dir(root.path(), 2);
        let share = two.join(pgs_core::broker::SHARE_FILE);
        let mut bytes = std::fs::read(&share).unwrap();
        *bytes.last_mut().unwrap() ^= 0x01;
        std::fs::write(&share, bytes).unwrap();
        assert!(collect(&spool_dir, &[&two]).is_err());
        assert_eq!(spool::load(&spool_dir).unwrap().pending_count(), 1);
    }

    #[test]
    fn offline_spool_refuses_delivery() {
        let root = tempfile::tempdir().unwrap();
        let spool_dir = root.path().join("spool");
        collect(&spool_dir, &[envelope_dir(root.path(), 1)]).unwrap();
        let mut bank = BankClient::new("http://127.0.0.1:9").unwrap();
        let err = deliver(&spool_dir, &mut bank, Utc::now()).unwrap_err();
        assert!(err.to_string().contains("offline"));
        set_connectivity(&spool_dir, Connectivity::Online).unwrap();
        assert_eq!(status(&spool_dir).unwrap()[0], "connectivity: online");
    }
}
