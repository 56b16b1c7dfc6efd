//! On-disk broker state: `state.json` plus one envelope directory per
//! pending share under `pending/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BrokerError, BrokerStore, Connectivity, DeliveryReceipt, ShareEnvelope};

const STATE_FILE: &str = "state.json";
const PENDING_DIR: &str = "pending";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SpoolState {
    connectivity: Connectivity,
    #[serde(default)]
    delivered: Vec<DeliveryReceipt>,
}

/// Loads a spool; a missing directory yields an empty offline store.
pub fn load(dir: impl AsRef<Path>) -> Result<BrokerStore, BrokerError> {
    let dir = dir.as_ref();
    let state_path = dir.join(STATE_FILE);
    if !state_path.exists() {
        return Ok(BrokerStore::new());
    }
    let state: SpoolState = serde_json::from_slice(&fs::read(state_path)?)?;
    let mut pending = BTreeMap::new();
    let pending_dir = dir.join(PENDING_DIR);
    if pending_dir.is_dir() {
        for entry in fs::read_dir(pending_dir)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                let envelope = ShareEnvelope::read_dir(entry.path())?;
                pending.insert(envelope.id(), envelope);
            }
        }
    }
    let delivered = state.delivered.into_iter().map(|r| (r.envelope.clone(), r)).collect();
    Ok(BrokerStore::from_parts(pending, delivered, state.connectivity))
}

/// Rewrites the spool to match `store`.
pub fn save(store: &BrokerStore, dir: impl AsRef<Path>) -> Result<(), BrokerError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let pending_dir = dir.join(PENDING_DIR);
    if pending_dir.exists() {
        fs::remove_dir_all(&pending_dir)?;
    }
    fs::create_dir_all(&pending_dir)?;
    let (pending, delivered) = store.parts();
    for (id, envelope) in pending {
        envelope.write_dir(pending_dir.join(id.as_str()))?;
    }
    let state = SpoolState {
        connectivity: store.connectivity(),
        delivered: delivered.values().cloned().collect(),
    };
    fs::write(dir.join(STATE_FILE), serde_json::to_vec_pretty(&state)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::tests::envelope;
    use super::super::SenderRole;
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load(dir.path()).unwrap().pending_count(), 0);

        let mut store = BrokerStore::new();
        store.collect(envelope(3, SenderRole::Buyer, 9)).unwrap();
        store.collect(envelope(3, SenderRole::Seller, 10)).unwrap();
        store.set_connectivity(Connectivity::Online);
        save(&store, dir.path()).unwrap();

        let back = load(dir.path()).unwrap();
        assert_eq!(back.connectivity(), Connectivity::Online);
        let a: Vec<_> = store.pending().cloned().collect();
        let b: Vec<_> = back.pending().cloned().collect();
        assert_eq!(a, b);
        for e in back.pending() {
            e.verify().unwrap();
        }
    }
}
