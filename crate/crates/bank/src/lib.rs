//! The bank's point of service: token auth, share intake, pairing jobs,
//! operator review, batched settlement and CSV export.

pub mod adapter;
pub mod auth;
pub mod config;
pub mod http;
pub mod journal;
pub mod service;

pub use adapter::{MockAdapter, MockBehavior, PaymentAdapter, SharedMock};
pub use auth::{ApiRole, Clock, ManualClock, Principal, SystemClock};
pub use config::{BankConfig, ClientConfig};
pub use service::{BankService, Decision, ServiceError};
