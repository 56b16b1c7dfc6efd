//! Payments authorized by a group selfie split into two visual-cryptography
//! shares, one held by each party until both reach the bank.

pub mod broker;
pub mod imaging;
pub mod money;
pub mod pnm;
pub mod protocol;
pub mod vc;
