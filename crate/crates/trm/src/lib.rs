//! File formats, timed training runs and the `trm` command-line tool.
//!
//! The numerical work lives in [`trm_core`]; this crate adds what needs an
//! operating system:
//!
//! - montage JSON documents ([`montage_file`]),
//! - the `ETSR` segment-set format ([`segments`]),
//! - the `TRMC` checkpoint format ([`checkpoint`]),
//! - topographic map dumps ([`topomap`]),
//! - timed runs over the cross-validation and split protocols ([`run`]),
//!   with CSV reports ([`report`]) and JSON manifests ([`manifest`]).

#![forbid(unsafe_code)]

mod binio;
pub mod checkpoint;
pub mod cli;
mod error;
pub mod manifest;
pub mod montage_file;
pub mod report;
pub mod run;
pub mod segments;
pub mod topomap;

pub use error::{Error, FormatError, Result};
pub use trm_core;

use trm_core::Precision;

/// Environment variable selecting the numeric precision of training and
/// evaluation: `fast` (32-bit, the default) or `check` (64-bit).
pub const PRECISION_VAR: &str = "TRM_PRECISION";

pub fn parse_precision(value: &str) -> Result<Precision> {
    match value.trim() {
        "fast" => Ok(Precision::Fast),
        "check" => Ok(Precision::Check),
        other => Err(Error::Invalid(format!(
            "{PRECISION_VAR} must be \"fast\" or \"check\", got {other:?}"
        ))),
    }
}

pub fn precision_from_env() -> Result<Precision> {
    match std::env::var(PRECISION_VAR) {
        Ok(v) => parse_precision(&v),
        Err(std::env::VarError::NotPresent) => Ok(Precision::Fast),
        Err(std::env::VarError::NotUnicode(_)) => Err(Error::Invalid(format!("{PRECISION_VAR} is not UTF-8"))),
    }
}

pub fn precision_name(p: Precision) -> &'static str {
    match p {
        Precision::Fast => "fast",
        Precision::Check => "check",
    }
}
