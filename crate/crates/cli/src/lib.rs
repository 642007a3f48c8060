//! `nftrap` command-line driver: configuration, data files, heating-table
//! cache and the subcommands built on `nftrap-core`.

pub mod cache;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, Result};
