//! Command-line front end and HTTP service for `qskat-core`.

pub mod commands;
pub mod server;
pub mod session;
