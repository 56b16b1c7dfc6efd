//! Command implementations behind the `pgs` binary.

pub mod broker;
pub mod client;
pub mod exit;
pub mod scenario;
pub mod selfie;
pub mod shares;
