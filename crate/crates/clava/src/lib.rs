//! File formats, model persistence and the command-line driver for `clava-core`.
//!
//! A dataset is a directory with `dataset_meta.json` and one CSV per table. Trained
//! models live in a model directory (see [`store`]). Every subcommand of the `clava`
//! binary has a library counterpart in [`commands`].

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod store;
pub mod toy;

pub use error::{CliError, Result};
