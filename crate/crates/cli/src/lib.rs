//! Library half of the `stsp` binary: argument types, command drivers and
//! the built-in invariant suite.

pub mod args;
pub mod commands;
pub mod output;
pub mod scenes;
pub mod selftest;

/// Overrides `--threads` when set.
pub const THREADS_ENV: &str = "STSP_THREADS";
