//! One module per pipeline stage.

pub mod code;
pub mod flows;
pub mod fusion;
pub mod network;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::run::walk_files;
use crate::CliError;

/// Files under `input` with one of `exts`, sorted; a single file is taken
/// as given.
pub(crate) fn files_with_ext(input: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let files: Vec<PathBuf> = walk_files(input)?
        .into_iter()
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e)))
        .collect();
    if files.is_empty() {
        return Err(CliError::Data(format!("no {} files under {}", exts.join("/"), input.display())));
    }
    Ok(files)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}
