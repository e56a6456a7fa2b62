//! Library surface of the command-line front end: config parsing and the
//! command implementations, kept separate from the binary for testability.

pub mod commands;
pub mod config;
