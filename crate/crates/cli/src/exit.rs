//! Process exit codes. These are part of the CLI's interface.

/// Command finished; for `stack`, the shares decoded cleanly.
pub const OK: u8 = 0;
/// I/O, parse, network or bank error, or a failed scenario step.
pub const FAILURE: u8 = 1;
/// `stack`: the shares do not form an honest stack.
pub const TAMPER_DETECTED: u8 = 2;
/// `stack`: the shares have different sizes.
pub const DIMENSION_MISMATCH: u8 = 3;
/// Bad command line.
pub const USAGE: u8 = 64;
