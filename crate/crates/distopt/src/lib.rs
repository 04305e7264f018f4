//! Configuration loading, file formats and command drivers for
//! `distopt-core`.
//!
//! - [`config`] JSON run configuration with defaults, range checks and echo
//! - [`commands`] build-sim, identify, optimize and sweep-gamma
//! - [`vtk`], [`pgm`], [`tables`] output formats
//! - [`manifest`] per-run manifest with content-hash run id

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pgm;
pub mod tables;
pub mod vtk;

pub use commands::{run_command, Command};
pub use config::{load_config, parse_config, Settings};
pub use error::{CliError, ErrorKind};
