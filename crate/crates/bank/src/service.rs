//! Bank-side state and operations, independent of the HTTP layer.
//!
//! All state sits behind one lock, so every transaction and batch change is
//! linearized. Pairing jobs copy their inputs out, reconstruct without the
//! lock, and re-check the transaction before committing, so jobs for
//! different transactions overlap.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::thread;
use std::time::Duration as StdDuration;

use chrono::{DateTime, SecondsFormat, Utc};
use pgs_core::broker::{SenderRole, ShareEnvelope, UploadAck};
use pgs_core::imaging::{capture_window, CaptureWindow};
use pgs_core::money::{Currency, Money};
use pgs_core::protocol::{
    create_transaction, goods_released, BatchId, BatchState, BlacklistEntry, BusinessModel, Event, Mutation,
    Notification, PartyId, ProtocolBook, ProtocolError, ReconstructionFailure, SettlementBatch, Transaction,
    TransactionId, TransactionState,
};
use pgs_core::vc::{self, BinaryImage, VcError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{AdapterError, MockAdapter, MockBehavior, PaymentAdapter};
use crate::auth::{AuthError, Clock, Principal, SystemClock, TokenIssuer, TokenResponse};
use crate::config::BankConfig;
use crate::journal::{Journal, JournalRecord};

pub const DEFAULT_PAGE_SIZE: usize = 10;
pub const CSV_HEADER: &str = "Id,Seller,Buyer,Timestamp,Amount";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Auth(AuthError::Expired(_)) => "token_expired",
            ServiceError::Auth(AuthError::InvalidClient) => "invalid_client",
            ServiceError::Auth(AuthError::UnsupportedGrant(_)) => "unsupported_grant_type",
            ServiceError::Auth(_) => "unauthorized",
            ServiceError::Forbidden(_) => "forbidden",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Integrity(_) => "integrity_error",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Precondition(_) => "precondition_failed",
            ServiceError::Validation(_) => "validation_error",
            ServiceError::Protocol(e) => match e {
                ProtocolError::BlacklistedParty(_) => "blacklisted",
                ProtocolError::Validation { .. } => "validation_error",
                ProtocolError::IllegalTransition { .. } => "illegal_transition",
                ProtocolError::UnknownTransaction(_) | ProtocolError::UnknownBatch(_) => "not_found",
                ProtocolError::DuplicateTransaction(_) => "conflict",
                _ => "batch_state",
            },
            ServiceError::Adapter(AdapterError::Timeout(_)) => "adapter_timeout",
            ServiceError::Storage(_) => "storage_error",
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ReconstructionOutcome {
    Ok,
    TamperDetected,
    DimensionMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReconstructionRecord {
    pub transaction_id: TransactionId,
    pub outcome: ReconstructionOutcome,
    /// `None` when the share claims to predate its captcha.
    pub captcha_window: Option<CaptureWindow>,
    /// Count of stacked blocks by black-subpixel weight 0, 1, 2.
    pub block_weight_histogram: Vec<usize>,
    pub empty_blocks: usize,
    pub malformed_blocks: usize,
    pub failure: Option<ReconstructionFailure>,
    pub at: DateTime<Utc>,
}

impl ReconstructionRecord {
    pub fn is_approvable(&self) -> bool {
        self.failure.is_none()
    }
}

/// Stacks and decodes a pair of envelopes and checks the capture window.
pub fn reconstruct(
    seller: &ShareEnvelope,
    buyer: &ShareEnvelope,
    window_secs: u32,
    at: DateTime<Utc>,
) -> ReconstructionRecord {
    let mut record = ReconstructionRecord {
        transaction_id: seller.transaction_id(),
        outcome: ReconstructionOutcome::Ok,
        captcha_window: None,
        block_weight_histogram: Vec::new(),
        empty_blocks: 0,
        malformed_blocks: 0,
        failure: None,
        at,
    };
    match (seller.share(), buyer.share()) {
        (Ok(s), Ok(b)) => match vc::stack(&[&s, &b]) {
            Ok(stacked) => {
                record.block_weight_histogram = stacked.weight_histogram();
                if let Err(VcError::TamperDetected {
                    empty_blocks,
                    malformed_blocks,
                }) = vc::decode(&stacked)
                {
                    record.outcome = ReconstructionOutcome::TamperDetected;
                    record.empty_blocks = empty_blocks.len();
                    record.malformed_blocks = malformed_blocks.len();
                }
            }
            Err(_) => record.outcome = ReconstructionOutcome::DimensionMismatch,
        },
        _ => record.outcome = ReconstructionOutcome::TamperDetected,
    }
    let issued = seller.meta().captcha_issued_at.min(buyer.meta().captcha_issued_at);
    let generated = seller.meta().share_generated_at.max(buyer.meta().share_generated_at);
    record.captcha_window = capture_window(issued, window_secs, generated).ok();
    record.failure = match (record.outcome, record.captcha_window) {
        (ReconstructionOutcome::TamperDetected, _) => Some(ReconstructionFailure::TamperDetected),
        (ReconstructionOutcome::DimensionMismatch, _) => Some(ReconstructionFailure::DimensionMismatch),
        (_, None) => Some(ReconstructionFailure::ClockSkew),
        (_, Some(CaptureWindow::Expired)) => Some(ReconstructionFailure::CaptchaExpired),
        (_, Some(CaptureWindow::WithinWindow)) => None,
    };
    record
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionView {
    pub id: TransactionId,
    pub seller: String,
    pub buyer: String,
    /// Minor units.
    pub amount: Money,
    pub amount_text: String,
    pub currency: Currency,
    pub business_model: BusinessModel,
    pub state: TransactionState,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub batch: Option<BatchId>,
    pub note: Option<String>,
    pub settlement_reference: Option<String>,
    pub goods_released: bool,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchView {
    pub id: BatchId,
    pub seller: String,
    pub buyer: String,
    pub currency: Currency,
    pub transaction_ids: Vec<TransactionId>,
    pub total_amount: Money,
    pub threshold: Money,
    pub state: BatchState,
    pub opened_at: DateTime<Utc>,
    pub transfer_reference: Option<String>,
    pub decline_reason: Option<String>,
}

impl From<&SettlementBatch> for BatchView {
    fn from(b: &SettlementBatch) -> Self {
        Self {
            id: b.id(),
            seller: b.seller().identifier().into(),
            buyer: b.buyer().identifier().into(),
            currency: b.currency().clone(),
            transaction_ids: b.transaction_ids().to_vec(),
            total_amount: b.total_amount(),
            threshold: b.threshold_at_creation(),
            state: b.state(),
            opened_at: b.opened_at(),
            transfer_reference: b.transfer_reference().map(Into::into),
            decline_reason: b.decline_reason().map(Into::into),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum PairingStatus {
    /// Still waiting for the other party's share.
    AwaitingShare,
    Queued,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UploadReceipt {
    pub ack: UploadAck,
    pub envelope: String,
    pub pairing: PairingStatus,
    pub transaction: TransactionView,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionResult {
    pub transaction: TransactionView,
    pub batch: Option<BatchView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Page<T> {
    pub items: Vec<T>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

/// A transaction loaded verbatim, bypassing the share flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImportedTransaction {
    pub id: TransactionId,
    pub seller: String,
    pub buyer: String,
    pub amount: Money,
    pub currency: Currency,
    #[serde(default = "default_model")]
    pub business_model: BusinessModel,
    pub state: TransactionState,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub updated_at: Option<DateTime<Utc>>,
}

fn default_model() -> BusinessModel {
    BusinessModel::CarryThenCash
}

/// Everything needed to show a reconstruction side by side.
#[derive(Debug, Clone)]
pub struct ReconstructionImages {
    pub record: Option<ReconstructionRecord>,
    pub seller_share: BinaryImage,
    pub buyer_share: BinaryImage,
    /// `None` when the shares differ in size.
    pub stacked: Option<BinaryImage>,
    /// `None` unless the stack decoded cleanly.
    pub decoded: Option<BinaryImage>,
}

#[derive(Default)]
struct EnvelopePair {
    seller: Option<ShareEnvelope>,
    buyer: Option<ShareEnvelope>,
}

impl EnvelopePair {
    fn slot(&mut self, role: SenderRole) -> &mut Option<ShareEnvelope> {
        match role {
            SenderRole::Seller => &mut self.seller,
            SenderRole::Buyer => &mut self.buyer,
        }
    }

    fn both(&self) -> Option<(&ShareEnvelope, &ShareEnvelope)> {
        Some((self.seller.as_ref()?, self.buyer.as_ref()?))
    }
}

struct State {
    book: ProtocolBook,
    envelopes: BTreeMap<TransactionId, EnvelopePair>,
    reconstructions: BTreeMap<TransactionId, ReconstructionRecord>,
    flags: BTreeMap<TransactionId, Vec<String>>,
    queue: VecDeque<TransactionId>,
    scheduled: BTreeSet<TransactionId>,
    running: usize,
    jobs_run: u64,
    journal: Journal,
    adapter: Box<dyn PaymentAdapter>,
}

impl State {
    fn persist(&mut self, record: JournalRecord) -> Result<()> {
        self.journal.append(&record)?;
        self.replay(record)
    }

    fn persist_mutation(&mut self, mutation: Mutation) -> Result<()> {
        if mutation.is_empty() {
            return Ok(());
        }
        self.persist(JournalRecord::Mutation { mutation })
    }

    fn replay(&mut self, record: JournalRecord) -> Result<()> {
        match record {
            JournalRecord::Envelope { meta, payload } => {
                let e = JournalRecord::decode_envelope(meta, &payload)?;
                let (id, role) = (e.transaction_id(), e.sender_role());
                *self.envelopes.entry(id).or_default().slot(role) = Some(e);
            }
            JournalRecord::Mutation { mutation } => self.book.commit(mutation),
            JournalRecord::Reconstruction { record } => {
                self.reconstructions.insert(record.transaction_id, record);
            }
            JournalRecord::TamperFlag { transaction, detail } => {
                self.flags.entry(transaction).or_default().push(detail);
            }
        }
        Ok(())
    }

    fn txn(&self, id: TransactionId) -> Result<&Transaction> {
        self.book
            .transaction(id)
            .ok_or_else(|| ServiceError::NotFound(format!("transaction {id}")))
    }

    fn view(&self, t: &Transaction) -> TransactionView {
        TransactionView {
            id: t.id(),
            seller: t.seller().identifier().into(),
            buyer: t.buyer().identifier().into(),
            amount: t.amount(),
            amount_text: t.amount().to_decimal_string(t.currency(), t.currency().exponent()),
            currency: t.currency().clone(),
            business_model: t.business_model(),
            state: t.state(),
            created_at: t.created_at(),
            updated_at: t.updated_at(),
            batch: t.batch(),
            note: t.note().map(Into::into),
            settlement_reference: t.settlement_reference().map(Into::into),
            goods_released: goods_released(t),
            flags: self.flags.get(&t.id()).cloned().unwrap_or_default(),
        }
    }

    fn visible_view(&self, p: &Principal, id: TransactionId) -> Result<TransactionView> {
        let t = self.txn(id)?;
        if !p.can_see(t.seller().identifier(), t.buyer().identifier()) {
            // do not reveal that the id exists
            return Err(ServiceError::NotFound(format!("transaction {id}")));
        }
        Ok(self.view(t))
    }

    /// Queues a pairing job if both shares are in and none is pending.
    fn maybe_schedule(&mut self, id: TransactionId) -> bool {
        let ready = self.book.transaction(id).map(Transaction::state) == Some(TransactionState::Incomplete)
            && self.envelopes.get(&id).is_some_and(|p| p.both().is_some());
        if ready && self.scheduled.insert(id) {
            self.queue.push_back(id);
        }
        self.scheduled.contains(&id)
    }

    fn flag(&mut self, id: TransactionId, detail: String) -> Result<()> {
        if self.book.transaction(id).is_some() {
            self.persist(JournalRecord::TamperFlag {
                transaction: id,
                detail,
            })?;
        }
        Ok(())
    }
}

struct Shared {
    config: BankConfig,
    clock: Arc<dyn Clock>,
    tokens: TokenIssuer,
    state: Mutex<State>,
    jobs: Condvar,
}

/// Cheap-to-clone handle to one bank instance.
#[derive(Clone)]
pub struct BankService(Arc<Shared>);

pub struct BankBuilder {
    config: BankConfig,
    clock: Arc<dyn Clock>,
    adapter: Box<dyn PaymentAdapter>,
}

impl BankBuilder {
    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn adapter(mut self, adapter: Box<dyn PaymentAdapter>) -> Self {
        self.adapter = adapter;
        self
    }

    /// Replays the journal, if any, and starts the pairing worker unless
    /// jobs run synchronously.
    pub fn build(self) -> Result<BankService> {
        let (journal, records) = match &self.config.data_dir {
            Some(dir) => Journal::open(dir)?,
            None => (Journal::in_memory(), Vec::new()),
        };
        let mut state = State {
            book: ProtocolBook::new(self.config.threshold_policy()),
            envelopes: BTreeMap::new(),
            reconstructions: BTreeMap::new(),
            flags: BTreeMap::new(),
            queue: VecDeque::new(),
            scheduled: BTreeSet::new(),
            running: 0,
            jobs_run: 0,
            journal,
            adapter: self.adapter,
        };
        for r in records {
            state.replay(r)?;
        }
        // pairings interrupted by a restart
        let ids: Vec<TransactionId> = state.envelopes.keys().copied().collect();
        for id in ids {
            state.maybe_schedule(id);
        }
        let sync = self.config.sync_jobs;
        let svc = BankService(Arc::new(Shared {
            tokens: TokenIssuer::new(
                self.config.clients.clone(),
                self.config.token_ttl_secs,
                self.clock.clone(),
            ),
            config: self.config,
            clock: self.clock,
            state: Mutex::new(state),
            jobs: Condvar::new(),
        }));
        if sync {
            svc.drain_jobs()?;
        } else {
            spawn_worker(Arc::downgrade(&svc.0));
        }
        Ok(svc)
    }
}

fn spawn_worker(shared: Weak<Shared>) {
    thread::Builder::new()
        .name("pairing".into())
        .spawn(move || loop {
            let Some(s) = shared.upgrade() else { return };
            let svc = BankService(s);
            let next = {
                let mut st = svc.lock();
                if st.queue.is_empty() {
                    st = svc.0.jobs.wait_timeout(st, StdDuration::from_millis(200)).unwrap().0;
                }
                svc.take_job(&mut st)
            };
            if let Some(id) = next {
                if let Err(e) = svc.finish_job(id) {
                    tracing::error!(transaction = %id, error = %e, "pairing job failed");
                }
            }
        })
        .expect("spawn pairing worker");
}

impl BankService {
    pub fn builder(config: BankConfig) -> BankBuilder {
        BankBuilder {
            config,
            clock: Arc::new(SystemClock),
            adapter: Box::new(MockAdapter::new()),
        }
    }

    pub fn new(config: BankConfig) -> Result<Self> {
        Self::builder(config).build()
    }

    pub fn config(&self) -> &BankConfig {
        &self.0.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.0.clock.now()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.0.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn issue_token(&self, grant_type: &str, client_id: &str, secret: &str) -> Result<TokenResponse> {
        Ok(self.0.tokens.issue(grant_type, client_id, secret)?)
    }

    pub fn authenticate(&self, authorization: Option<&str>) -> Result<Principal> {
        Ok(self.0.tokens.authenticate(authorization)?)
    }

    fn require_admin(p: &Principal, action: &str) -> Result<()> {
        if !p.is_admin() {
            return Err(ServiceError::Forbidden(format!("{action} requires the admin role")));
        }
        Ok(())
    }

    /// Any authenticated principal may upload: brokers act for both parties,
    /// and the checksum plus pairing guard the content.
    pub fn upload_share(&self, _principal: &Principal, envelope: ShareEnvelope) -> Result<UploadReceipt> {
        let id = envelope.transaction_id();
        let role = envelope.sender_role();
        let now = self.now();
        let mut st = self.lock();
        if let Err(e) = envelope.verify() {
            return Err(ServiceError::Integrity(e.to_string()));
        }
        if let Err(e) = envelope.share() {
            return Err(ServiceError::Validation(e.to_string()));
        }
        let terms = &envelope.meta().terms;

        if let Some(held) = st.envelopes.get(&id).and_then(|p| match role {
            SenderRole::Seller => p.seller.as_ref(),
            SenderRole::Buyer => p.buyer.as_ref(),
        }) {
            if held == &envelope {
                let pairing = pairing_status(&st, id);
                return Ok(UploadReceipt {
                    ack: UploadAck::Duplicate,
                    envelope: envelope.id().to_string(),
                    pairing,
                    transaction: st.view(st.txn(id)?),
                });
            }
            st.flag(id, format!("conflicting {role} share"))?;
            return Err(ServiceError::Conflict(format!(
                "a different {role} share for transaction {id} is already stored"
            )));
        }

        let mutation = match st.book.transaction(id) {
            None => {
                let txn = create_transaction(terms.to_new_transaction(id), st.book.blacklist())?;
                let txn = txn.apply(&Event::SharesExchangedLocally, now)?.transaction;
                let txn = txn.apply(&Event::FirstShareDelivered, now)?.transaction;
                Mutation {
                    transactions: vec![txn],
                    ..Mutation::default()
                }
            }
            Some(txn) => {
                if !terms_match(txn, terms) {
                    st.flag(id, format!("{role} share carries different purchase terms"))?;
                    return Err(ServiceError::Conflict(format!(
                        "purchase terms in the {role} share differ from transaction {id}"
                    )));
                }
                let events: &[Event] = match txn.state() {
                    TransactionState::Created => &[Event::SharesExchangedLocally, Event::FirstShareDelivered],
                    TransactionState::ShareExchanged => &[Event::FirstShareDelivered],
                    TransactionState::Incomplete => &[],
                    other => {
                        return Err(ServiceError::Precondition(format!(
                            "transaction {id} is {other} and takes no more shares"
                        )))
                    }
                };
                st.book.plan_events(id, events, now)?
            }
        };

        st.persist(JournalRecord::envelope(&envelope))?;
        st.persist_mutation(mutation)?;
        let scheduled = st.maybe_schedule(id);
        drop(st);

        if scheduled {
            if self.0.config.sync_jobs {
                self.drain_jobs()?;
            } else {
                self.0.jobs.notify_all();
            }
        }
        let st = self.lock();
        Ok(UploadReceipt {
            ack: UploadAck::Stored,
            envelope: envelope.id().to_string(),
            pairing: pairing_status(&st, id),
            transaction: st.view(st.txn(id)?),
        })
    }

    fn take_job(&self, st: &mut State) -> Option<TransactionId> {
        let id = st.queue.pop_front()?;
        st.running += 1;
        Some(id)
    }

    fn finish_job(&self, id: TransactionId) -> Result<Option<ReconstructionRecord>> {
        let result = self.run_pairing(id);
        let mut st = self.lock();
        st.running -= 1;
        st.scheduled.remove(&id);
        st.jobs_run += 1;
        drop(st);
        self.0.jobs.notify_all();
        result
    }

    fn run_pairing(&self, id: TransactionId) -> Result<Option<ReconstructionRecord>> {
        let (seller, buyer) = {
            let st = self.lock();
            if st.txn(id)?.state() != TransactionState::Incomplete {
                return Ok(None);
            }
            let pair = st.envelopes.get(&id).and_then(EnvelopePair::both);
            let Some((s, b)) = pair else {
                return Err(ServiceError::Precondition(format!(
                    "transaction {id} is missing a share"
                )));
            };
            (s.clone(), b.clone())
        };
        let record = reconstruct(&seller, &buyer, self.0.config.captcha_window_secs, self.now());

        let mut st = self.lock();
        if st.txn(id)?.state() != TransactionState::Incomplete {
            return Ok(None);
        }
        let event = Event::SecondShareDelivered {
            failure: record.failure.clone(),
        };
        let mutation = st.book.plan_events(id, &[event], record.at)?;
        st.persist(JournalRecord::Reconstruction { record: record.clone() })?;
        st.persist_mutation(mutation)?;
        Ok(Some(record))
    }

    /// Runs a pairing job for `id` now, on the calling thread.
    pub fn pair_and_reconstruct(&self, id: TransactionId) -> Result<ReconstructionRecord> {
        {
            let mut st = self.lock();
            st.running += 1;
            st.scheduled.insert(id);
            st.queue.retain(|q| *q != id);
        }
        match self.finish_job(id)? {
            Some(r) => Ok(r),
            None => {
                let st = self.lock();
                let state = st.txn(id)?.state();
                Err(ServiceError::Precondition(format!(
                    "transaction {id} is {state}, not Incomplete"
                )))
            }
        }
    }

    /// Runs every queued pairing job and waits for in-flight ones. Returns
    /// how many jobs this call ran.
    pub fn drain_jobs(&self) -> Result<usize> {
        let mut ran = 0;
        loop {
            let next = {
                let mut st = self.lock();
                loop {
                    if let Some(id) = self.take_job(&mut st) {
                        break Some(id);
                    }
                    if st.running == 0 {
                        break None;
                    }
                    st = self.0.jobs.wait(st).unwrap_or_else(|p| p.into_inner());
                }
            };
            let Some(id) = next else { return Ok(ran) };
            self.finish_job(id)?;
            ran += 1;
        }
    }

    /// Total pairing jobs completed since start.
    pub fn jobs_run(&self) -> u64 {
        self.lock().jobs_run
    }

    pub fn reconstruction(&self, p: &Principal, id: TransactionId) -> Result<Option<ReconstructionRecord>> {
        let st = self.lock();
        st.visible_view(p, id)?;
        Ok(st.reconstructions.get(&id).cloned())
    }

    /// Rebuilds the stacked and decoded images from the stored shares.
    pub fn reconstruction_images(&self, p: &Principal, id: TransactionId) -> Result<ReconstructionImages> {
        let (seller, buyer, record) = {
            let st = self.lock();
            st.visible_view(p, id)?;
            let pair = st.envelopes.get(&id).and_then(EnvelopePair::both);
            let Some((s, b)) = pair else {
                return Err(ServiceError::NotFound(format!("both shares of transaction {id}")));
            };
            (s.clone(), b.clone(), st.reconstructions.get(&id).cloned())
        };
        let bad = |e: pgs_core::broker::BrokerError| ServiceError::Validation(e.to_string());
        let s = seller.share().map_err(bad)?;
        let b = buyer.share().map_err(bad)?;
        let stacked = vc::stack(&[&s, &b]).ok();
        let decoded = stacked.as_ref().and_then(|st| vc::decode(st).ok());
        Ok(ReconstructionImages {
            record,
            seller_share: s.to_image(),
            buyer_share: b.to_image(),
            stacked: stacked.map(|st| st.to_image()),
            decoded,
        })
    }

    pub fn operator_decide(
        &self,
        p: &Principal,
        id: TransactionId,
        decision: Decision,
        note: Option<String>,
        source: Option<&str>,
    ) -> Result<DecisionResult> {
        Self::require_admin(p, "deciding on a transaction")?;
        if let Some(src) = source.filter(|s| *s != "operator") {
            return Err(ServiceError::Validation(format!(
                "decision source {src:?} is not enabled; only \"operator\" is accepted"
            )));
        }
        let now = self.now();
        let mut st = self.lock();
        let state = st.txn(id)?.state();
        let mutation = match decision {
            Decision::Approve => {
                if state == TransactionState::ToApprove
                    && !st
                        .reconstructions
                        .get(&id)
                        .is_some_and(ReconstructionRecord::is_approvable)
                {
                    return Err(ServiceError::Precondition(format!(
                        "transaction {id} has no clean reconstruction"
                    )));
                }
                st.book.plan_approve(id, now)?
            }
            Decision::Reject => st.book.plan_events(
                id,
                &[Event::OperatorReject {
                    note: note.unwrap_or_else(|| "rejected by operator".into()),
                }],
                now,
            )?,
        };
        st.persist_mutation(mutation)?;
        let txn = st.txn(id)?;
        let batch = txn.batch().and_then(|b| st.book.batch(b)).map(BatchView::from);
        Ok(DecisionResult {
            transaction: st.view(txn),
            batch,
        })
    }

    pub fn settle_batch(&self, p: &Principal, id: BatchId, simulate: Option<MockBehavior>) -> Result<BatchView> {
        Self::require_admin(p, "settling a batch")?;
        let now = self.now();
        let mut st = self.lock();
        let batch = st
            .book
            .batch(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("batch {id}")))?;
        if batch.state() != BatchState::Triggered {
            return Err(ProtocolError::BatchNotTriggered(id, batch.state()).into());
        }
        if let Some(behavior) = simulate {
            if !st.adapter.script(id, behavior) {
                return Err(ServiceError::Validation(format!(
                    "payment adapter {} does not accept simulated outcomes",
                    st.adapter.name()
                )));
            }
        }
        let outcome = st.adapter.submit_transfer(&batch)?;
        let mutation = st.book.plan_settlement(id, &outcome, now)?;
        st.persist_mutation(mutation)?;
        Ok(BatchView::from(st.book.batch(id).expect("just settled")))
    }

    pub fn transaction(&self, p: &Principal, id: TransactionId) -> Result<TransactionView> {
        self.lock().visible_view(p, id)
    }

    pub fn batch(&self, p: &Principal, id: BatchId) -> Result<BatchView> {
        let st = self.lock();
        match st.book.batch(id) {
            Some(b) if p.can_see(b.seller().identifier(), b.buyer().identifier()) => Ok(b.into()),
            _ => Err(ServiceError::NotFound(format!("batch {id}"))),
        }
    }

    pub fn batches(&self, p: &Principal) -> Vec<BatchView> {
        let st = self.lock();
        st.book
            .batches()
            .filter(|b| p.can_see(b.seller().identifier(), b.buyer().identifier()))
            .map(BatchView::from)
            .collect()
    }

    fn filtered(st: &State, p: &Principal, filter: Option<&str>) -> Result<Vec<TransactionView>> {
        let state = parse_filter(filter)?;
        Ok(st
            .book
            .transactions()
            .filter(|t| p.can_see(t.seller().identifier(), t.buyer().identifier()))
            .filter(|t| state.is_none_or(|s| t.state() == s))
            .map(|t| st.view(t))
            .collect())
    }

    /// Newest first by `updatedAt`, ties by id. Pages count from 1.
    pub fn list_transactions(
        &self,
        p: &Principal,
        filter: Option<&str>,
        page: Option<usize>,
        page_size: Option<usize>,
    ) -> Result<Page<TransactionView>> {
        let page = page.unwrap_or(1);
        let page_size = page_size.unwrap_or(DEFAULT_PAGE_SIZE);
        if page == 0 || page_size == 0 {
            return Err(ServiceError::Validation("page and pageSize start at 1".into()));
        }
        let mut rows = Self::filtered(&self.lock(), p, filter)?;
        rows.sort_by(|a, b| b.updated_at.cmp(&a.updated_at).then(a.id.cmp(&b.id)));
        let total = rows.len();
        let items = rows.into_iter().skip((page - 1) * page_size).take(page_size).collect();
        Ok(Page {
            items,
            page,
            page_size,
            total,
        })
    }

    /// CSV with header `Id,Seller,Buyer,Timestamp,Amount`, rows by id.
    pub fn export_csv(&self, p: &Principal, filter: Option<&str>) -> Result<String> {
        let mut rows = Self::filtered(&self.lock(), p, filter)?;
        rows.sort_by_key(|r| r.id);
        Ok(render_csv(&rows))
    }

    pub fn blacklist(&self, _p: &Principal) -> Vec<BlacklistEntry> {
        self.lock().book.blacklist().entries().cloned().collect()
    }

    pub fn lift_blacklist(&self, p: &Principal, party: &str) -> Result<bool> {
        Self::require_admin(p, "lifting a blacklist entry")?;
        let mut st = self.lock();
        let m = st.book.plan_lift(party);
        let lifted = !m.is_empty();
        st.persist_mutation(m)?;
        Ok(lifted)
    }

    pub fn notifications(&self, p: &Principal) -> Vec<Notification> {
        self.lock()
            .book
            .notifications()
            .iter()
            .filter(|n| p.is_admin() || n.seller == p.client_id)
            .cloned()
            .collect()
    }

    pub fn import_transactions(&self, p: &Principal, records: Vec<ImportedTransaction>) -> Result<usize> {
        Self::require_admin(p, "importing transactions")?;
        let mut st = self.lock();
        let mut txns = Vec::with_capacity(records.len());
        let mut seen = BTreeSet::new();
        for r in records {
            if st.book.transaction(r.id).is_some() || !seen.insert(r.id) {
                return Err(ProtocolError::DuplicateTransaction(r.id).into());
            }
            let seller = PartyId::seller(r.seller)?;
            let buyer = PartyId::buyer(r.buyer)?;
            txns.push(Transaction::restore(
                r.id,
                seller,
                buyer,
                r.amount,
                r.currency,
                r.business_model,
                r.state,
                r.created_at,
                r.updated_at.unwrap_or(r.created_at),
            ));
        }
        let n = txns.len();
        st.persist_mutation(Mutation {
            transactions: txns,
            ..Mutation::default()
        })?;
        Ok(n)
    }

    /// Whether the protocol book still balances; exposed for tests.
    pub fn batches_conserved(&self) -> bool {
        self.lock().book.batches_conserved()
    }
}

fn pairing_status(st: &State, id: TransactionId) -> PairingStatus {
    if st.scheduled.contains(&id) {
        PairingStatus::Queued
    } else if st.reconstructions.contains_key(&id) {
        PairingStatus::Completed
    } else {
        PairingStatus::AwaitingShare
    }
}

fn terms_match(t: &Transaction, terms: &pgs_core::broker::PurchaseTerms) -> bool {
    t.seller().identifier() == terms.seller
        && t.buyer().identifier() == terms.buyer
        && t.amount() == terms.amount
        && t.currency() == &terms.currency
        && t.business_model() == terms.business_model
        && (t.captcha_nonce().is_empty() || t.captcha_nonce() == terms.captcha_nonce)
}

fn parse_filter(filter: Option<&str>) -> Result<Option<TransactionState>> {
    match filter.map(str::trim) {
        None | Some("") => Ok(None),
        Some(f) if f.eq_ignore_ascii_case("all") => Ok(None),
        Some(f) => f
            .parse()
            .map(Some)
            .map_err(|e: ProtocolError| ServiceError::Validation(e.to_string())),
    }
}

/// Amounts carry the currency's decimals but never fewer than one.
pub fn csv_amount(amount: Money, currency: &Currency) -> String {
    amount.to_decimal_string(currency, currency.exponent().max(1))
}

pub fn render_csv(rows: &[TransactionView]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("write to Vec");
    for r in rows {
        w.write_record([
            r.id.to_string(),
            r.seller.clone(),
            r.buyer.clone(),
            r.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
            csv_amount(r.amount, &r.currency),
        ])
        .expect("write to Vec");
    }
    String::from_utf8(w.into_inner().expect("flush Vec")).expect("csv output is utf-8")
}
