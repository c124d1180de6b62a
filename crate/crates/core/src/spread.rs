//! Direct-sequence embedding and correlation over the selected weights.
//!
//! Embedding adds `γ · Σᵢ bᵢ cᵢ[r]` to selected weight `r`. The integer sum
//! `Σᵢ bᵢ cᵢ[r]` is accumulated exactly and applied with a single rounding, so
//! the output is independent of bit order.
//!
//! Correlation computes `yᵢ = cᵢ · (marked - baseline)` over the selected
//! weights in f64. Each sum uses eight interleaved accumulators (chip `r` goes
//! to lane `r mod 8`) that are combined pairwise at the end; the order is
//! fixed, so results are bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keying::{fill_code_words_at, Seed};
use crate::math;
use crate::model::ParameterVector;

/// Floor on the normalised noise level, i.e. a 60 dB SNR ceiling.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Everything needed to embed a composite bit sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedJob {
    /// Composite sequence (preamble then codeword) as `±1`.
    pub bits: Vec<i8>,
    /// Signal strength γ.
    pub gamma: f64,
    /// Selected parameter indices, ascending.
    pub indices: Vec<usize>,
    /// Seed of the spreading codes.
    pub code_seed: Seed,
}

/// Channel parameters measured on the preamble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    /// Mean preamble correlation, nominally `γ R`.
    pub gain: f64,
    /// Standard deviation of the gain-normalised preamble correlations.
    pub sigma: f64,
    /// `-20 log10(max(sigma, 1e-3))`.
    pub snr_db: f64,
}

fn check_indices(indices: &[usize], len: usize) -> core::result::Result<(), alloc::string::String> {
    if indices.is_empty() {
        return Err("no parameters selected".into());
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
        return Err(alloc::format!("index {bad} out of range for {len} parameters"));
    }
    Ok(())
}

/// Adds the spread signal of `job.bits` to `weights`; the input is untouched.
pub fn embed(weights: &ParameterVector, job: &EmbedJob) -> Result<ParameterVector> {
    if !(job.gamma > 0.0 && job.gamma.is_finite()) {
        return Err(Error::Embed(alloc::format!("gamma must be positive, got {}", job.gamma)));
    }
    if job.bits.is_empty() {
        return Err(Error::Embed("no bits to embed".into()));
    }
    if let Some(b) = job.bits.iter().find(|&&b| b != 1 && b != -1) {
        return Err(Error::Embed(alloc::format!("bit value {b} is not ±1")));
    }
    check_indices(&job.indices, weights.len()).map_err(Error::Embed)?;

    let counts = chip_sums(&job.bits, job.indices.len(), &job.code_seed);
    let mut out = weights.as_slice().to_vec();
    for (&idx, &count) in job.indices.iter().zip(&counts) {
        out[idx] = (out[idx] as f64 + job.gamma * count as f64) as f32;
    }
    Ok(ParameterVector::new(out))
}

// Code words are processed in tiles of this many words (64 chips each) so
// per-chip state stays in cache while every code passes over it.
const TILE_WORDS: usize = 128;

/// `Σᵢ bᵢ cᵢ[r]` for every chip position `r < chips`.
pub fn chip_sums(bits: &[i8], chips: usize, code_seed: &Seed) -> Vec<i32> {
    let base = code_seed.rng();
    let words = chips.div_ceil(64);
    // Bit-sliced counters of +1 chips per position. Each code word is added
    // into a 4-bit counter, which is folded into the wide counter every 15
    // codes, before it can overflow.
    let levels = (usize::BITS - bits.len().leading_zeros()) as usize;
    let mut low = vec![[0u64; 4]; TILE_WORDS];
    let mut high = vec![0u64; TILE_WORDS * levels];
    let mut buf = vec![0u64; TILE_WORDS];
    let mut counts = Vec::with_capacity(words * 64);
    for first in (0..words).step_by(TILE_WORDS) {
        let n = TILE_WORDS.min(words - first);
        high.fill(0);
        for (p, &b) in bits.iter().enumerate() {
            fill_code_words_at(&base, p as u64, first, &mut buf[..n]);
            // With b = -1 every chip flips, which is the complement of the word.
            let flip = if b < 0 { !0u64 } else { 0 };
            for (counter, &w) in low[..n].iter_mut().zip(&buf[..n]) {
                let mut carry = w ^ flip;
                for plane in counter.iter_mut() {
                    let next = *plane & carry;
                    *plane ^= carry;
                    carry = next;
                }
            }
            if (p + 1) % 15 == 0 || p + 1 == bits.len() {
                for (counter, wide) in low[..n].iter_mut().zip(high.chunks_exact_mut(levels)) {
                    let mut carry = 0u64;
                    for (l, plane) in wide.iter_mut().enumerate() {
                        let add = if l < 4 { counter[l] } else { 0 };
                        let half = *plane ^ add;
                        let next = (*plane & add) | (half & carry);
                        *plane = half ^ carry;
                        carry = next;
                    }
                    *counter = [0; 4];
                }
            }
        }
        let total = bits.len() as i32;
        for wide in high[..n * levels].chunks_exact(levels) {
            counts.extend((0..64).map(|j| {
                let ones = wide
                    .iter()
                    .enumerate()
                    .fold(0i32, |acc, (l, &plane)| acc | ((((plane >> j) & 1) as i32) << l));
                2 * ones - total
            }));
        }
    }
    counts.truncate(chips);
    counts
}

/// Correlates `marked - baseline` on `indices` with the first `total_bits`
/// spreading codes.
pub fn extract(
    marked: &ParameterVector,
    baseline: &ParameterVector,
    indices: &[usize],
    code_seed: &Seed,
    total_bits: usize,
) -> Result<Vec<f64>> {
    if marked.len() != baseline.len() {
        return Err(Error::Extract(alloc::format!(
            "marked has {} parameters, baseline has {}",
            marked.len(),
            baseline.len()
        )));
    }
    check_indices(indices, marked.len()).map_err(Error::Extract)?;
    let (m, b) = (marked.as_slice(), baseline.as_slice());
    let diff: Vec<f64> = indices.iter().map(|&i| m[i] as f64 - b[i] as f64).collect();
    Ok(correlate(&diff, code_seed, total_bits))
}

/// `yᵢ = cᵢ · diff` for `i < total_bits`, with `cᵢ` of length `diff.len()`.
///
/// Chips are taken four at a time: `((±d₀ ± d₁) + (±d₂ ± d₃))` comes from a
/// table of all sixteen sign patterns, nibble `g` is added to lane `g mod 8`
/// in ascending order, and the eight lanes are combined pairwise. The result
/// is deterministic and independent of the platform.
pub fn correlate(diff: &[f64], code_seed: &Seed, total_bits: usize) -> Vec<f64> {
    let base = code_seed.rng();
    let words = diff.len().div_ceil(64);
    let mut acc = vec![[0.0f64; 8]; total_bits];
    let mut table = vec![0.0f64; TILE_WORDS * 16 * 16];
    let mut buf = vec![0u64; TILE_WORDS];
    for first in (0..words).step_by(TILE_WORDS) {
        let n = TILE_WORDS.min(words - first);
        for (g, sums) in table[..n * 16 * 16].chunks_exact_mut(16).enumerate() {
            let at = |k: usize| diff.get(first * 64 + 4 * g + k).copied().unwrap_or(0.0);
            let d = [at(0), at(1), at(2), at(3)];
            for (m, s) in sums.iter_mut().enumerate() {
                let sd = |k: usize| if (m >> k) & 1 == 1 { d[k] } else { -d[k] };
                *s = (sd(0) + sd(1)) + (sd(2) + sd(3));
            }
        }
        for (p, lanes) in acc.iter_mut().enumerate() {
            fill_code_words_at(&base, p as u64, first, &mut buf[..n]);
            for (&w, sums) in buf[..n].iter().zip(table.chunks_exact(256)) {
                for (k, nibble) in sums.chunks_exact(16).enumerate() {
                    lanes[k & 7] += nibble[((w >> (4 * k)) & 0xf) as usize];
                }
            }
        }
    }
    acc.iter()
        .map(|a| ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7])))
        .collect()
}

/// Preamble statistics without the positive-gain requirement.
///
/// With a non-positive gain, `sigma` is measured relative to `|gain|` (and is
/// infinite when the gain is exactly zero).
pub fn channel_statistics(y_preamble: &[f64], preamble: &[i8]) -> Result<ChannelEstimate> {
    if y_preamble.len() != preamble.len() || preamble.is_empty() {
        return Err(Error::InvalidArgument(alloc::format!(
            "preamble correlations ({}) and preamble ({}) must have the same non-zero length",
            y_preamble.len(),
            preamble.len()
        )));
    }
    let count = preamble.len() as f64;
    let z: Vec<f64> = y_preamble
        .iter()
        .zip(preamble)
        .map(|(&y, &p)| y * p as f64)
        .collect();
    let gain = z.iter().sum::<f64>() / count;
    let sigma = if gain == 0.0 {
        f64::INFINITY
    } else {
        let norm = gain.abs();
        let mean = gain / norm;
        let var = z
            .iter()
            .map(|&v| {
                let d = v / norm - mean;
                d * d
            })
            .sum::<f64>()
            / count;
        math::sqrt(var)
    };
    let snr_db = -20.0 * math::log10(sigma.max(SIGMA_FLOOR));
    Ok(ChannelEstimate {
        gain,
        sigma,
        snr_db,
    })
}

/// Gain, normalised noise level and SNR from the preamble correlations.
///
/// Fails with [`Error::ChannelLost`] when the gain is not positive, which
/// means the watermark is absent or the key is wrong.
pub fn estimate_channel(y_preamble: &[f64], preamble: &[i8]) -> Result<ChannelEstimate> {
    let est = channel_statistics(y_preamble, preamble)?;
    if est.gain.is_nan() || est.gain <= 0.0 {
        return Err(Error::ChannelLost { gain: est.gain });
    }
    Ok(est)
}
