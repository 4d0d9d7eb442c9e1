//! Command-line driver and HTTP what-if service for flowmap models.

pub mod commands;
pub mod error;
pub mod service;

pub use error::CliError;
