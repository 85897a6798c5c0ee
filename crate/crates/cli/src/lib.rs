//! The `fabry` pipeline: dataset generation, surrogate training and
//! evaluation, beta-VAE sweeps, latent analysis and inverse design. Every
//! command writes a [`manifest::RunManifest`] next to its outputs.

use std::fmt;

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

pub use args::{Cli, Command};
pub use commands::dispatch;

/// Bad flag values detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Process exit code for a failed command: 1 usage, 2 data, 3 numeric.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use fabry_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Numeric(_) => EXIT_NUMERIC,
                E::InvalidParams(_) | E::Domain(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}
