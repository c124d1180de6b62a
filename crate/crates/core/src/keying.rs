//! Key material and every deterministic stream derived from it.
//!
//! Three 32-byte seeds are derived from the 512-bit owner key as
//! `SHA-256(key || label)` for the labels `"code"`, `"ldpc"` and `"select"`.
//!
//! Spreading codes come from a counter-based ChaCha20 keystream: the code for
//! composite bit `b` uses the code seed as key and `b` as the stream id, so
//! chip block `i` of code `b` is a pure function of `(code_seed, b, i)` and any
//! code can be generated independently of the others. Chip `j` of a code is
//! bit `j % 64` (least significant first) of the `j / 64`-th 64-bit word of the
//! stream; a set bit is `+1`, a clear bit is `-1`.
//!
//! Layout of the composite sequence: positions `0..200` carry the preamble and
//! position `200 + j` carries codeword bit `j`. The preamble's own values are
//! drawn from the reserved stream [`PREAMBLE_STREAM`], which no code uses.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math;

/// Number of preamble bits placed in front of the codeword.
pub const PREAMBLE_LEN: usize = 200;

/// Stream id reserved for drawing the preamble values.
pub const PREAMBLE_STREAM: u64 = u64::MAX;

/// Byte length of a [`SecretKey`].
pub const KEY_LEN: usize = 64;

/// The owner's 512-bit secret.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    /// Wraps exactly 64 bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| Error::KeyFormat { len: bytes.len() })?;
        Ok(SecretKey(arr))
    }

    /// Raw key bytes.
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Public identifier of the key: `SHA-256(key)`. Safe to store in records.
    pub fn key_id(&self) -> [u8; 32] {
        Sha256::digest(self.0).into()
    }
}

impl From<[u8; KEY_LEN]> for SecretKey {
    fn from(bytes: [u8; KEY_LEN]) -> Self {
        SecretKey(bytes)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// A 32-byte seed for one of the deterministic streams.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(#[serde(with = "hex::serde")] pub [u8; 32]);

impl Seed {
    /// Seed whose first eight bytes are `value` in little-endian order and the
    /// rest zero. Convenient for attack and initialisation seeds.
    pub fn from_u64(value: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&value.to_le_bytes());
        Seed(bytes)
    }

    pub(crate) fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.0)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", hex::encode(self.0))
    }
}

/// The seeds derived from a [`SecretKey`], one per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPair {
    /// Drives spreading codes and the preamble.
    pub code_seed: Seed,
    /// Drives the LDPC parity-check construction.
    pub ldpc_seed: Seed,
    /// Drives the choice of marked parameters.
    pub select_seed: Seed,
}

fn labelled_hash(key: &[u8], label: &[u8]) -> Seed {
    let mut h = Sha256::new();
    h.update(key);
    h.update(label);
    Seed(h.finalize().into())
}

/// Derives the three role seeds from a 64-byte key.
pub fn derive_seeds(key: &SecretKey) -> SeedPair {
    SeedPair {
        code_seed: labelled_hash(&key.0, b"code"),
        ldpc_seed: labelled_hash(&key.0, b"ldpc"),
        select_seed: labelled_hash(&key.0, b"select"),
    }
}

/// Like [`derive_seeds`] but accepts raw bytes and validates the length.
pub fn derive_seeds_from_bytes(key: &[u8]) -> Result<SeedPair> {
    Ok(derive_seeds(&SecretKey::from_bytes(key)?))
}

/// One spreading code, identified by its seed and composite bit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeStream {
    /// Code seed.
    pub seed: Seed,
    /// Composite bit position the code belongs to.
    pub bit_index: u64,
    /// Number of chips, `R`.
    pub length: usize,
}

impl CodeStream {
    /// Describes a code of `length` chips.
    pub fn new(seed: Seed, bit_index: u64, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::EmptyCode);
        }
        Ok(CodeStream {
            seed,
            bit_index,
            length,
        })
    }

    /// Packed chips, 64 per word, least significant bit first. Bits past
    /// `length` in the last word are unspecified.
    pub fn words(&self) -> Vec<u64> {
        let mut out = alloc::vec![0u64; self.length.div_ceil(64)];
        fill_code_words(&self.seed, self.bit_index, &mut out);
        out
    }

    /// Chips as `±1`.
    pub fn signs(&self) -> Vec<i8> {
        let words = self.words();
        (0..self.length)
            .map(|j| if (words[j / 64] >> (j % 64)) & 1 == 1 { 1 } else { -1 })
            .collect()
    }
}

pub(crate) fn fill_code_words(seed: &Seed, stream: u64, out: &mut [u64]) {
    fill_code_words_at(&seed.rng(), stream, 0, out);
}

/// Words `first_word..first_word + out.len()` of code `stream`, where `base` is
/// a fresh generator for the code seed.
pub(crate) fn fill_code_words_at(base: &ChaCha20Rng, stream: u64, first_word: usize, out: &mut [u64]) {
    let mut rng = base.clone();
    rng.set_stream(stream);
    // word positions count 32-bit words
    rng.set_word_pos(2 * first_word as u128);
    for w in out.iter_mut() {
        *w = rng.next_u64();
    }
}

/// The `±1` spreading code of length `length` for composite bit `bit_index`.
pub fn spreading_code(code_seed: &Seed, bit_index: u64, length: usize) -> Result<Vec<i8>> {
    Ok(CodeStream::new(*code_seed, bit_index, length)?.signs())
}

/// The 200 preamble values, drawn from the reserved stream of the code seed.
pub fn generate_preamble(code_seed: &Seed) -> Vec<i8> {
    let mut words = [0u64; PREAMBLE_LEN.div_ceil(64)];
    fill_code_words(code_seed, PREAMBLE_STREAM, &mut words);
    (0..PREAMBLE_LEN)
        .map(|j| if (words[j / 64] >> (j % 64)) & 1 == 1 { 1 } else { -1 })
        .collect()
}

/// Number of parameters selected for `ratio`, i.e. `floor(ratio * total)`.
pub fn selection_size(total: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Selection { ratio, total });
    }
    let count = if ratio == 1.0 {
        total
    } else {
        math::floor(ratio * total as f64) as usize
    };
    if count == 0 {
        return Err(Error::Selection { ratio, total });
    }
    Ok(count)
}

/// Picks `floor(ratio * total)` distinct parameter indices, ascending.
///
/// The indices are a prefix of a seeded shuffle of `0..total`.
pub fn select_parameters(select_seed: &Seed, total: usize, ratio: f64) -> Result<Vec<usize>> {
    let count = selection_size(total, ratio)?;
    if count == total {
        return Ok((0..total).collect());
    }
    let mut all: Vec<usize> = (0..total).collect();
    let mut rng = select_seed.rng();
    let (chosen, _) = all.partial_shuffle(&mut rng, count);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}
