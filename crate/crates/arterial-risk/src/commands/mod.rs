//! The five pipeline commands. Each is a pure function of its config and
//! input files: reruns write byte-identical artifacts.

pub mod evaluate;
pub mod fit;
pub mod prepare;
pub mod simulate;
pub mod sweep;

use std::path::Path;

use crate::error::CliError;

/// Writes a value as pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
