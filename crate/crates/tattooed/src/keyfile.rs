//! Secret key files: 64 raw bytes, or 128 hex digits with optional
//! surrounding whitespace. New keys are written as hex.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::rngs::OsRng;
use rand::TryRngCore;
use tattooed_core::keying::KEY_LEN;
use tattooed_core::SecretKey;

use crate::error::{Result, ToolError};

/// Draws a fresh key from the operating system.
pub fn generate() -> Result<SecretKey> {
    let mut bytes = [0u8; KEY_LEN];
    OsRng
        .try_fill_bytes(&mut bytes)
        .map_err(|e| ToolError::Usage(format!("OS random source failed: {e}")))?;
    Ok(SecretKey::from(bytes))
}

/// Parses key file contents.
pub fn parse(contents: &[u8]) -> tattooed_core::Result<SecretKey> {
    if contents.len() == KEY_LEN {
        return SecretKey::from_bytes(contents);
    }
    let text = contents.trim_ascii();
    match hex::decode(text) {
        Ok(bytes) => SecretKey::from_bytes(&bytes),
        Err(_) => Err(tattooed_core::Error::KeyFormat { len: contents.len() }),
    }
}

/// Reads a key file.
pub fn load(path: impl AsRef<Path>) -> Result<SecretKey> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ToolError::io(path, e))?;
    Ok(parse(&bytes)?)
}

/// Writes `key` as hex. Refuses to overwrite; on Unix the file is owner-only.
pub fn save(key: &SecretKey, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(|e| ToolError::io(path, e))?;
    writeln!(f, "{}", hex::encode(key.as_bytes())).map_err(|e| ToolError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_and_hex_agree() {
        let raw: Vec<u8> = (0..64).collect();
        let hex_text = format!("  {}\n", hex::encode(&raw));
        assert_eq!(parse(&raw).unwrap(), parse(hex_text.as_bytes()).unwrap());
    }

    #[test]
    fn wrong_sizes_are_key_errors() {
        for bad in [&b"abcd"[..], &[0u8; 63][..], &[b'z'; 128][..]] {
            assert!(matches!(parse(bad), Err(tattooed_core::Error::KeyFormat { .. })));
        }
    }

    #[test]
    fn generated_keys_differ() {
        assert_ne!(generate().unwrap().as_bytes(), generate().unwrap().as_bytes());
    }
}
