//! Experiment harness around `certsearch-core`: TOML configs, the SDP dump
//! format, record and weight files, a thread-safe bound cache, and the
//! experiments behind the `certsearch` binary.

pub mod cache;
pub mod config;
pub mod dump;
pub mod error;
pub mod experiments;
pub mod io;

pub use certsearch_core as model;
pub use error::{AppError, Result};
