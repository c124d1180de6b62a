//! CSV output for sweeps.

use std::io::Write;

use serde::Serialize;

use crate::error::{Result, ToolError};

/// Writes `rows` as CSV with a header taken from the row's field names.
pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| ToolError::io("<csv>", std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| ToolError::io("<csv>", e))
}
