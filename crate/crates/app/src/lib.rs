//! Command-line interface and local HTTP service for `tetriblend-core`.

pub mod bench;
pub mod cli;
pub mod service;
pub mod session;

pub use cli::run_cli;
pub use session::{Session, SessionInfo, SessionSpec};
