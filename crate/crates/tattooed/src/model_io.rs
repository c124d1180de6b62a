//! The `.tnsr` container file.
//!
//! Layout: 8-byte magic `TNSR0001`, u64 little-endian length of the JSON
//! header, the compact JSON manifest, zero padding to a 4-byte boundary, then
//! the little-endian f32 blob. Tensor offsets are relative to the blob.

use std::fs;
use std::path::Path;

use tattooed_core::model::{Manifest, TensorContainer};

use crate::error::{Result, ToolError};

/// File magic.
pub const MAGIC: &[u8; 8] = b"TNSR0001";

const PREFIX: usize = 16;

fn padding(header_len: usize) -> usize {
    (4 - (PREFIX + header_len) % 4) % 4
}

/// Serialises a container. The output is canonical: decoding and encoding it
/// again gives the same bytes.
pub fn encode(container: &TensorContainer) -> Vec<u8> {
    let header = serde_json::to_vec(container.manifest()).expect("manifest serialises");
    let pad = padding(header.len());
    let mut out = Vec::with_capacity(PREFIX + header.len() + pad + 4 * container.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.resize(out.len() + pad, 0);
    for v in container.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a container from bytes. Error messages name no file; [`load`] adds it.
pub fn decode(bytes: &[u8]) -> std::result::Result<TensorContainer, String> {
    if bytes.len() < PREFIX || &bytes[..8] != MAGIC {
        return Err("not a TNSR0001 container".into());
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(PREFIX))
        .filter(|&end| end <= bytes.len())
        .ok_or("header length runs past end of file")?;
    let manifest: Manifest = serde_json::from_slice(&bytes[PREFIX..header_end])
        .map_err(|e| format!("bad manifest: {e}"))?;
    let blob_start = header_end + padding(header_end - PREFIX);
    if blob_start > bytes.len() || bytes[header_end..blob_start].iter().any(|&b| b != 0) {
        return Err("bad header padding".into());
    }
    let blob = &bytes[blob_start..];
    if !blob.len().is_multiple_of(4) {
        return Err(format!("blob of {} bytes is not a whole number of f32", blob.len()));
    }
    let data = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TensorContainer::new(manifest, data).map_err(|e| e.to_string())
}

/// Reads a container file.
pub fn load(path: impl AsRef<Path>) -> Result<TensorContainer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ToolError::io(path, e))?;
    decode(&bytes).map_err(|m| ToolError::format(path, m))
}

/// Writes a container file.
pub fn save(container: &TensorContainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(container)).map_err(|e| ToolError::io(path, e))
}
