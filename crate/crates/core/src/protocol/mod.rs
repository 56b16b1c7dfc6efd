//! Purchase lifecycle, settlement batching and blacklisting.
//!
//! ```text
//! Created -> ShareExchanged -> Incomplete -> ToApprove -> Accepted -> Queued -> Settled
//!                                  |             |                     |
//!                                  +-> Rejected  +-> Rejected          +-> Declined
//! ```
//!
//! `Settled`, `Rejected` and `Declined` are terminal. Everything else is an
//! `IllegalTransition`.

mod batch;
mod blacklist;
mod book;

pub use batch::{accrue_to_batch, BatchState, SettlementBatch};
pub use blacklist::{Blacklist, BlacklistEntry, BlacklistReason};
pub use book::{Mutation, Notification, ProtocolBook, SettlementOutcome, ThresholdPolicy};

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{Currency, Money};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("party {0} is blacklisted")]
    BlacklistedParty(String),
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("illegal transition: {event} in state {state}")]
    IllegalTransition { state: TransactionState, event: EventKind },
    #[error("transaction {transaction} belongs to {seller}/{buyer}, batch {batch} does not")]
    PartyMismatch {
        batch: BatchId,
        transaction: TransactionId,
        seller: String,
        buyer: String,
    },
    #[error("transaction {0} is {1}, only Accepted transactions can be batched")]
    NotAccepted(TransactionId, TransactionState),
    #[error("batch {0} is {1}, not Open")]
    BatchNotOpen(BatchId, BatchState),
    #[error("batch {0} is {1}, not Triggered")]
    BatchNotTriggered(BatchId, BatchState),
    #[error("transaction {0} is already in batch {1}")]
    AlreadyBatched(TransactionId, BatchId),
    #[error("currency {found} does not match batch currency {expected}")]
    CurrencyMismatch { expected: Currency, found: Currency },
    #[error("transaction {0} already exists")]
    DuplicateTransaction(TransactionId),
    #[error("unknown transaction {0}")]
    UnknownTransaction(TransactionId),
    #[error("unknown batch {0}")]
    UnknownBatch(BatchId),
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

macro_rules! numeric_id {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }
    };
}

numeric_id!(TransactionId);
numeric_id!(BatchId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Buyer,
    Seller,
    Broker,
    BankOperator,
}

/// A participant. The identifier is email-like and unique per deployment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId {
    identifier: String,
    role: Role,
}

impl PartyId {
    pub fn new(identifier: impl Into<String>, role: Role) -> Result<Self> {
        let identifier = identifier.into();
        if identifier.trim().is_empty() {
            return Err(ProtocolError::Validation {
                field: "party",
                reason: "identifier is empty".into(),
            });
        }
        Ok(Self { identifier, role })
    }

    pub fn seller(identifier: impl Into<String>) -> Result<Self> {
        Self::new(identifier, Role::Seller)
    }

    pub fn buyer(identifier: impl Into<String>) -> Result<Self> {
        Self::new(identifier, Role::Buyer)
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.identifier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BusinessModel {
    /// Goods and shares change hands at selfie time, payment follows.
    CarryThenCash,
    /// The selfie is a commitment; goods are released after payment.
    CashThenCarry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GoodsRelease {
    AtSelfieTime,
    AfterPayment,
}

pub fn apply_business_model(txn: &Transaction) -> GoodsRelease {
    match txn.business_model {
        BusinessModel::CarryThenCash => GoodsRelease::AtSelfieTime,
        BusinessModel::CashThenCarry => GoodsRelease::AfterPayment,
    }
}

/// Whether the buyer may hold the goods in the transaction's current state.
pub fn goods_released(txn: &Transaction) -> bool {
    match apply_business_model(txn) {
        GoodsRelease::AtSelfieTime => true,
        GoodsRelease::AfterPayment => txn.state == TransactionState::Settled,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransactionState {
    Created,
    ShareExchanged,
    Incomplete,
    ToApprove,
    Accepted,
    Rejected,
    Queued,
    Settled,
    Declined,
}

impl TransactionState {
    pub const ALL: [TransactionState; 9] = [
        TransactionState::Created,
        TransactionState::ShareExchanged,
        TransactionState::Incomplete,
        TransactionState::ToApprove,
        TransactionState::Accepted,
        TransactionState::Rejected,
        TransactionState::Queued,
        TransactionState::Settled,
        TransactionState::Declined,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TransactionState::Settled | TransactionState::Rejected | TransactionState::Declined
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TransactionState::Created => "Created",
            TransactionState::ShareExchanged => "ShareExchanged",
            TransactionState::Incomplete => "Incomplete",
            TransactionState::ToApprove => "ToApprove",
            TransactionState::Accepted => "Accepted",
            TransactionState::Rejected => "Rejected",
            TransactionState::Queued => "Queued",
            TransactionState::Settled => "Settled",
            TransactionState::Declined => "Declined",
        }
    }
}

impl fmt::Display for TransactionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransactionState {
    type Err = ProtocolError;

    /// Case-insensitive; `_`, `-` and spaces are ignored, so `to_approve`
    /// and `To Approve` both parse.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        TransactionState::ALL
            .into_iter()
            .find(|st| st.name().to_lowercase() == norm)
            .ok_or_else(|| ProtocolError::Validation {
                field: "state",
                reason: format!("unknown state {s:?}"),
            })
    }
}

/// Why a reconstruction did not yield an approvable selfie.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ReconstructionFailure {
    TamperDetected,
    DimensionMismatch,
    CaptchaExpired,
    ClockSkew,
}

impl fmt::Display for ReconstructionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReconstructionFailure::TamperDetected => "tamper detected",
            ReconstructionFailure::DimensionMismatch => "share dimensions differ",
            ReconstructionFailure::CaptchaExpired => "captcha window expired",
            ReconstructionFailure::ClockSkew => "share generated before captcha issue",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "event")]
pub enum Event {
    SharesExchangedLocally,
    FirstShareDelivered,
    /// The second share arrived and the pairing job finished.
    SecondShareDelivered {
        failure: Option<ReconstructionFailure>,
    },
    OperatorApprove,
    OperatorReject {
        note: String,
    },
    BatchTriggered {
        batch: BatchId,
    },
    PaymentOk {
        reference: String,
    },
    PaymentDeclined {
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    SharesExchangedLocally,
    FirstShareDelivered,
    SecondShareDelivered,
    OperatorApprove,
    OperatorReject,
    BatchTriggered,
    PaymentOk,
    PaymentDeclined,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::SharesExchangedLocally => EventKind::SharesExchangedLocally,
            Event::FirstShareDelivered => EventKind::FirstShareDelivered,
            Event::SecondShareDelivered { .. } => EventKind::SecondShareDelivered,
            Event::OperatorApprove => EventKind::OperatorApprove,
            Event::OperatorReject { .. } => EventKind::OperatorReject,
            Event::BatchTriggered { .. } => EventKind::BatchTriggered,
            Event::PaymentOk { .. } => EventKind::PaymentOk,
            Event::PaymentDeclined { .. } => EventKind::PaymentDeclined,
        }
    }

    /// One representative of every event shape, both pairing outcomes included.
    pub fn samples() -> Vec<Event> {
        vec![
            Event::SharesExchangedLocally,
            Event::FirstShareDelivered,
            Event::SecondShareDelivered { failure: None },
            Event::SecondShareDelivered {
                failure: Some(ReconstructionFailure::TamperDetected),
            },
            Event::OperatorApprove,
            Event::OperatorReject { note: "blurry".into() },
            Event::BatchTriggered { batch: BatchId(1) },
            Event::PaymentOk {
                reference: "ref-1".into(),
            },
            Event::PaymentDeclined {
                reason: "insufficient funds".into(),
            },
        ]
    }
}

/// Side effects a transition asks its owner to carry out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "effect")]
pub enum Effect {
    Blacklist {
        party: String,
        reason: BlacklistReason,
    },
    NotifySeller {
        seller: String,
        transaction: TransactionId,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    id: TransactionId,
    seller: PartyId,
    buyer: PartyId,
    amount: Money,
    currency: Currency,
    business_model: BusinessModel,
    state: TransactionState,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    captcha_nonce: String,
    #[serde(default)]
    batch: Option<BatchId>,
    #[serde(default)]
    note: Option<String>,
    #[serde(default)]
    settlement_reference: Option<String>,
}

/// Fields a new purchase starts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NewTransaction {
    pub id: TransactionId,
    pub seller: String,
    pub buyer: String,
    pub amount: Money,
    pub currency: Currency,
    pub business_model: BusinessModel,
    pub captcha_nonce: String,
    pub created_at: DateTime<Utc>,
}

/// Opens a purchase in state `Created`.
pub fn create_transaction(spec: NewTransaction, blacklist: &Blacklist) -> Result<Transaction> {
    let seller = PartyId::seller(spec.seller)?;
    let buyer = PartyId::buyer(spec.buyer)?;
    if seller.identifier() == buyer.identifier() {
        return Err(ProtocolError::Validation {
            field: "buyer",
            reason: "buyer and seller must differ".into(),
        });
    }
    for party in [&seller, &buyer] {
        if blacklist.is_blacklisted(party.identifier()) {
            return Err(ProtocolError::BlacklistedParty(party.identifier().to_string()));
        }
    }
    if !spec.amount.is_positive() {
        return Err(ProtocolError::Validation {
            field: "amount",
            reason: format!("must be positive, got {}", spec.amount),
        });
    }
    Ok(Transaction {
        id: spec.id,
        seller,
        buyer,
        amount: spec.amount,
        currency: spec.currency,
        business_model: spec.business_model,
        state: TransactionState::Created,
        created_at: spec.created_at,
        updated_at: spec.created_at,
        captcha_nonce: spec.captcha_nonce,
        batch: None,
        note: None,
        settlement_reference: None,
    })
}

/// Outcome of a successful transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub transaction: Transaction,
    pub effects: Vec<Effect>,
}

impl Transaction {
    /// Rebuilds a record with an arbitrary state, bypassing creation checks.
    /// For imports and fixtures; normal code goes through
    /// [`create_transaction`] and [`Transaction::apply`].
    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        id: TransactionId,
        seller: PartyId,
        buyer: PartyId,
        amount: Money,
        currency: Currency,
        business_model: BusinessModel,
        state: TransactionState,
        created_at: DateTime<Utc>,
        updated_at: DateTime<Utc>,
    ) -> Self {
        Self {
            id,
            seller,
            buyer,
            amount,
            currency,
            business_model,
            state,
            created_at,
            updated_at,
            captcha_nonce: String::new(),
            batch: None,
            note: None,
            settlement_reference: None,
        }
    }

    pub fn id(&self) -> TransactionId {
        self.id
    }

    pub fn seller(&self) -> &PartyId {
        &self.seller
    }

    pub fn buyer(&self) -> &PartyId {
        &self.buyer
    }

    pub fn amount(&self) -> Money {
        self.amount
    }

    pub fn currency(&self) -> &Currency {
        &self.currency
    }

    pub fn business_model(&self) -> BusinessModel {
        self.business_model
    }

    pub fn state(&self) -> TransactionState {
        self.state
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn updated_at(&self) -> DateTime<Utc> {
        self.updated_at
    }

    pub fn captcha_nonce(&self) -> &str {
        &self.captcha_nonce
    }

    pub fn batch(&self) -> Option<BatchId> {
        self.batch
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn settlement_reference(&self) -> Option<&str> {
        self.settlement_reference.as_deref()
    }

    pub fn involves(&self, identifier: &str) -> bool {
        self.seller.identifier() == identifier || self.buyer.identifier() == identifier
    }

    /// Applies `event`, returning the successor and any side effects.
    pub fn apply(&self, event: &Event, at: DateTime<Utc>) -> Result<Transition> {
        use TransactionState::*;
        let mut next = self.clone();
        let mut effects = Vec::new();
        next.state = match (self.state, event) {
            (Created, Event::SharesExchangedLocally) => ShareExchanged,
            (ShareExchanged, Event::FirstShareDelivered) => Incomplete,
            (Incomplete, Event::SecondShareDelivered { failure: None }) => ToApprove,
            (Incomplete, Event::SecondShareDelivered { failure: Some(f) }) => {
                next.note = Some(f.to_string());
                Rejected
            }
            (ToApprove, Event::OperatorApprove) => Accepted,
            (ToApprove, Event::OperatorReject { note }) => {
                next.note = Some(note.clone());
                Rejected
            }
            (Accepted, Event::BatchTriggered { batch }) => {
                next.batch = Some(*batch);
                Queued
            }
            (Queued, Event::PaymentOk { reference }) => {
                next.settlement_reference = Some(reference.clone());
                Settled
            }
            (Queued, Event::PaymentDeclined { reason }) => {
                next.note = Some(reason.clone());
                effects.push(Effect::Blacklist {
                    party: self.buyer.identifier().to_string(),
                    reason: BlacklistReason::PaymentDeclined,
                });
                effects.push(Effect::NotifySeller {
                    seller: self.seller.identifier().to_string(),
                    transaction: self.id,
                    message: format!("payment declined: {reason}"),
                });
                Declined
            }
            (state, event) => {
                return Err(ProtocolError::IllegalTransition {
                    state,
                    event: event.kind(),
                })
            }
        };
        next.updated_at = at.max(self.updated_at);
        Ok(Transition {
            transaction: next,
            effects,
        })
    }

    pub(crate) fn set_batch(&mut self, batch: BatchId) {
        self.batch = Some(batch);
    }
}
