//! `corisk` command-line driver and HTTP scoring service.

pub mod cli;
pub mod error;
pub mod service;

pub use cli::{run, Cli};
pub use error::{exit, CliError};
