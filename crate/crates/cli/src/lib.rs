//! Command-line tool and HTTP service around `finrag-core`.

pub mod commands;
pub mod perf;
pub mod server;
pub mod store;

pub use server::{router, AppState};
