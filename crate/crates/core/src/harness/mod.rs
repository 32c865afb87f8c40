//! Checkpoints, training, diagnostics, config files and the command line.

mod checkpoint;
pub mod cli;
mod diag;
mod train;

use std::path::Path;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, write_atomic, MAGIC, VERSION};
pub use diag::{diagnostics, BatchSummary, DiagReport};
pub use train::{accuracy, train, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};

/// Parses `key = value` lines; `#` starts a comment. Later keys win.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        out.retain(|(old, _)| *old != k);
        out.push((k, v));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    parse_config(&std::fs::read_to_string(path)?)
}
