//! Mark records on disk, as pretty-printed JSON.

use std::fs;
use std::path::Path;

use tattooed_core::MarkRecord;

use crate::error::{Result, ToolError};

/// Reads a record.
pub fn load(path: impl AsRef<Path>) -> Result<MarkRecord> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ToolError::format(path, e.to_string()))
}

/// Writes a record.
pub fn save(record: &MarkRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(record).expect("record serialises");
    text.push('\n');
    fs::write(path, text).map_err(|e| ToolError::io(path, e))
}
