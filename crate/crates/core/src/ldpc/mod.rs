//! Rate-1/2 regular LDPC codes with three ones per column.
//!
//! Construction: the `3n` column sockets are shuffled and dealt six per row,
//! giving a (3, 6)-regular parity-check matrix. Repeated columns within a row
//! are always removed; length-4 cycles are removed on a best-effort budget.
//! Matrices without full row rank are discarded and the next attempt draws
//! from the next ChaCha stream of the LDPC seed, up to [`MAX_ATTEMPTS`].
//!
//! The accepted matrix is reduced over GF(2) and its columns reordered so that
//! the pivot columns come last. The stored `H` is that column-permuted matrix,
//! so `H = [A | B]` with `B` invertible and a codeword is `[m | P m]` where
//! `P = B⁻¹A`. The generator is `G = [I | Pᵀ]`.
//!
//! Decoding is flooding sum-product in the log domain.

pub mod gf2;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::keying::Seed;
use crate::math;
use gf2::{pack, BitMatrix};

/// Ones per column of `H`.
pub const COLUMN_WEIGHT: usize = 3;
/// Ones per row of `H`.
pub const ROW_WEIGHT: usize = 6;
/// Construction attempts before giving up.
pub const MAX_ATTEMPTS: usize = 64;
/// Belief-propagation iteration cap.
pub const MAX_ITERATIONS: usize = 50;
/// Upper bound applied to the SNR before computing channel LLRs.
pub const SNR_CAP_DB: f64 = 60.0;
/// Smallest accepted message length.
pub const MIN_K: usize = 8;

const CYCLE_FIX_BUDGET: usize = 400;

/// A seeded rate-1/2 LDPC code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    seed: Seed,
    // check-major edge list: edge e belongs to check e / ROW_WEIGHT
    edge_var: Vec<u32>,
    // var-major view: edges touching variable v are var_edges[3v..3v+3]
    var_edges: Vec<u32>,
    parity: BitMatrix,
}

/// Channel observations for one codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftWord {
    /// Gain-normalised correlator outputs, nominally `±1` plus noise. `+1`
    /// stands for bit 1.
    pub values: Vec<f64>,
    /// Estimated channel SNR in dB.
    pub snr_db: f64,
}

/// Outcome of belief-propagation decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Message bits (the systematic part).
    pub message: Vec<u8>,
    /// Whether every parity check was satisfied.
    pub converged: bool,
    /// Iterations run; 0 when the channel hard decision was already a codeword.
    pub iterations: usize,
}

impl LdpcCode {
    /// Builds the code for a `k`-bit message, `n = 2k`.
    pub fn build(ldpc_seed: &Seed, k: usize) -> Result<Self> {
        if k < MIN_K {
            return Err(Error::InvalidArgument(alloc::format!(
                "LDPC message length must be at least {MIN_K}, got {k}"
            )));
        }
        let n = 2 * k;
        let m = n - k;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ldpc_seed.rng();
            rng.set_stream(attempt as u64);
            let rows = random_regular_rows(n, m, &mut rng);

            let mut h = BitMatrix::zeros(m, n);
            for (r, cols) in rows.chunks(ROW_WEIGHT).enumerate() {
                for &c in cols {
                    h.set(r, c as usize, true);
                }
            }
            let pivots = h.reduce();
            if pivots.len() < m {
                continue;
            }

            let mut is_pivot = vec![false; n];
            for &p in &pivots {
                is_pivot[p] = true;
            }
            let message_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
            let mut new_pos = vec![0u32; n];
            for (j, &c) in message_cols.iter().enumerate() {
                new_pos[c] = j as u32;
            }
            for (i, &c) in pivots.iter().enumerate() {
                new_pos[c] = (k + i) as u32;
            }

            let mut parity = BitMatrix::zeros(m, k);
            for i in 0..m {
                for (j, &c) in message_cols.iter().enumerate() {
                    if h.get(i, c) {
                        parity.set(i, j, true);
                    }
                }
            }

            let mut edge_var: Vec<u32> = rows.iter().map(|&c| new_pos[c as usize]).collect();
            for row in edge_var.chunks_mut(ROW_WEIGHT) {
                row.sort_unstable();
            }
            let mut var_edges = vec![0u32; n * COLUMN_WEIGHT];
            let mut fill = vec![0usize; n];
            for (e, &v) in edge_var.iter().enumerate() {
                let v = v as usize;
                var_edges[v * COLUMN_WEIGHT + fill[v]] = e as u32;
                fill[v] += 1;
            }
            debug_assert!(fill.iter().all(|&f| f == COLUMN_WEIGHT));

            return Ok(LdpcCode {
                n,
                k,
                seed: *ldpc_seed,
                edge_var,
                var_edges,
                parity,
            });
        }
        Err(Error::CodeConstruction {
            k,
            attempts: MAX_ATTEMPTS,
        })
    }

    /// Codeword length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Message length.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Seed the code was built from.
    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    /// Column indices of each parity check, in row order.
    pub fn check_rows(&self) -> impl Iterator<Item = &[u32]> {
        self.edge_var.chunks(ROW_WEIGHT)
    }

    /// Dense copy of the parity-check matrix `H`, `(n - k) × n`.
    pub fn parity_check(&self) -> BitMatrix {
        let mut h = BitMatrix::zeros(self.n - self.k, self.n);
        for (r, cols) in self.check_rows().enumerate() {
            for &c in cols {
                h.set(r, c as usize, true);
            }
        }
        h
    }

    /// Dense systematic generator `G = [I | Pᵀ]`, `k × n`.
    pub fn generator(&self) -> BitMatrix {
        let mut g = BitMatrix::zeros(self.k, self.n);
        for j in 0..self.k {
            g.set(j, j, true);
            for i in 0..self.n - self.k {
                if self.parity.get(i, j) {
                    g.set(j, self.k + i, true);
                }
            }
        }
        g
    }

    /// `H` as text, one line per check: `row: c0 c1 ...`.
    pub fn adjacency_list(&self) -> String {
        let mut out = String::new();
        for (r, cols) in self.check_rows().enumerate() {
            let _ = write!(out, "{r}:");
            for c in cols {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
        out
    }

    /// Systematic encoding of `message` (one bit per byte, values 0/1).
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k {
            return Err(Error::Encode {
                expected: self.k,
                got: message.len(),
            });
        }
        let mut word = Vec::with_capacity(self.n);
        word.extend(message.iter().map(|b| b & 1));
        let packed = pack(message);
        word.extend(self.parity.mul_packed(&packed).into_iter().map(u8::from));
        Ok(word)
    }

    /// True when every parity check is satisfied.
    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.n
            && self
                .check_rows()
                .all(|cols| cols.iter().fold(0u8, |acc, &c| acc ^ (word[c as usize] & 1)) == 0)
    }

    /// Sum-product decoding of `soft`; returns the message bits.
    pub fn decode(&self, soft: &SoftWord) -> Result<Vec<u8>> {
        Ok(self.decode_detailed(soft)?.message)
    }

    /// Sum-product decoding with convergence information.
    ///
    /// The channel LLR of position `i` has magnitude `2 |values[i]| / σ²`
    /// with `σ = 10^(-snr_db / 20)` and the SNR capped at [`SNR_CAP_DB`].
    /// Stops as soon as all checks pass; otherwise returns the hard decision of
    /// the beliefs after [`MAX_ITERATIONS`].
    pub fn decode_detailed(&self, soft: &SoftWord) -> Result<Decoded> {
        if soft.values.len() != self.n {
            return Err(Error::InvalidArgument(alloc::format!(
                "soft word has {} values, code length is {}",
                soft.values.len(),
                self.n
            )));
        }
        let snr = if soft.snr_db.is_nan() {
            f64::NEG_INFINITY
        } else {
            soft.snr_db.min(SNR_CAP_DB)
        };
        let sigma = libm::pow(10.0, -snr / 20.0);
        // Internal convention: LLR = ln P(bit 0) / P(bit 1); bit 1 is sent as +1.
        let scale = -2.0 / (sigma * sigma);
        let channel: Vec<f64> = soft
            .values
            .iter()
            .map(|&v| if scale.is_finite() { scale * v } else { 0.0 })
            .collect();

        let mut hard: Vec<u8> = channel.iter().map(|&l| u8::from(l < 0.0)).collect();
        if self.is_codeword(&hard) {
            hard.truncate(self.k);
            return Ok(Decoded {
                message: hard,
                converged: true,
                iterations: 0,
            });
        }

        let edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| channel[v as usize]).collect();
        let mut c2v = vec![0.0f64; edges];
        let mut t = [0.0f64; ROW_WEIGHT];
        let mut prefix = [0.0f64; ROW_WEIGHT + 1];
        const LIMIT: f64 = 1.0 - 1e-15;
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=MAX_ITERATIONS {
            iterations = it;
            for (chk, out) in c2v.chunks_mut(ROW_WEIGHT).enumerate() {
                let base = chk * ROW_WEIGHT;
                for j in 0..ROW_WEIGHT {
                    t[j] = math::tanh(0.5 * v2c[base + j]);
                }
                prefix[0] = 1.0;
                for j in 0..ROW_WEIGHT {
                    prefix[j + 1] = prefix[j] * t[j];
                }
                let mut suffix = 1.0;
                for j in (0..ROW_WEIGHT).rev() {
                    let p = (prefix[j] * suffix).clamp(-LIMIT, LIMIT);
                    out[j] = 2.0 * math::atanh(p);
                    suffix *= t[j];
                }
            }
            for v in 0..self.n {
                let es = &self.var_edges[v * COLUMN_WEIGHT..(v + 1) * COLUMN_WEIGHT];
                let total = channel[v] + es.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                for &e in es {
                    v2c[e as usize] = total - c2v[e as usize];
                }
                hard[v] = u8::from(total < 0.0);
            }
            if self.is_codeword(&hard) {
                converged = true;
                break;
            }
        }
        hard.truncate(self.k);
        Ok(Decoded {
            message: hard,
            converged,
            iterations,
        })
    }
}

/// Deals shuffled column sockets into rows of six, then repairs repeated
/// columns and (best effort) length-4 cycles by swapping sockets.
fn random_regular_rows(n: usize, m: usize, rng: &mut ChaCha20Rng) -> Vec<u32> {
    let mut sockets: Vec<u32> = (0..n as u32)
        .flat_map(|c| core::iter::repeat_n(c, COLUMN_WEIGHT))
        .collect();
    sockets.shuffle(rng);
    debug_assert_eq!(sockets.len(), m * ROW_WEIGHT);

    let row_has = |s: &[u32], row: usize, col: u32, skip: usize| {
        s[row * ROW_WEIGHT..(row + 1) * ROW_WEIGHT]
            .iter()
            .enumerate()
            .any(|(i, &c)| row * ROW_WEIGHT + i != skip && c == col)
    };
    // Swapping socket a (row ra) with socket b (row rb) must not repeat a
    // column inside either row.
    let can_swap = |s: &[u32], a: usize, b: usize| {
        let (ra, rb) = (a / ROW_WEIGHT, b / ROW_WEIGHT);
        ra != rb && !row_has(s, ra, s[b], a) && !row_has(s, rb, s[a], b)
    };

    // Repeated columns within a row.
    let total = sockets.len();
    let mut guard = 0;
    loop {
        let dup = (0..total).find(|&a| row_has(&sockets, a / ROW_WEIGHT, sockets[a], a));
        let Some(a) = dup else { break };
        guard += 1;
        if guard > 100 * total {
            break;
        }
        let b = rng.random_range(0..total);
        if can_swap(&sockets, a, b) {
            sockets.swap(a, b);
        }
    }

    // Length-4 cycles: two rows sharing two columns.
    for _ in 0..CYCLE_FIX_BUDGET {
        let Some(a) = find_four_cycle_socket(&sockets, n) else {
            break;
        };
        for _ in 0..64 {
            let b = rng.random_range(0..total);
            if can_swap(&sockets, a, b) {
                sockets.swap(a, b);
                break;
            }
        }
    }
    sockets
}

/// Returns a socket index taking part in a length-4 cycle, if any.
fn find_four_cycle_socket(sockets: &[u32], n: usize) -> Option<usize> {
    let mut col_sockets = vec![[0usize; COLUMN_WEIGHT]; n];
    let mut fill = vec![0usize; n];
    for (s, &c) in sockets.iter().enumerate() {
        let c = c as usize;
        if fill[c] < COLUMN_WEIGHT {
            col_sockets[c][fill[c]] = s;
        }
        fill[c] += 1;
    }
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for col in &col_sockets {
        for i in 0..COLUMN_WEIGHT {
            for j in (i + 1)..COLUMN_WEIGHT {
                let (ri, rj) = (col[i] / ROW_WEIGHT, col[j] / ROW_WEIGHT);
                let key = (ri.min(rj), ri.max(rj));
                if seen.insert(key, col[i]).is_some() {
                    return Some(col[i]);
                }
            }
        }
    }
    None
}

/// Counts length-4 cycles in a code's parity-check matrix.
pub fn count_four_cycles(code: &LdpcCode) -> usize {
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for v in 0..code.n {
        let es = &code.var_edges[v * COLUMN_WEIGHT..(v + 1) * COLUMN_WEIGHT];
        for i in 0..COLUMN_WEIGHT {
            for j in (i + 1)..COLUMN_WEIGHT {
                let a = es[i] as usize / ROW_WEIGHT;
                let b = es[j] as usize / ROW_WEIGHT;
                *pairs.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
    }
    pairs.values().map(|&c| c * (c - 1) / 2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn random_message(k: usize, r: &mut ChaCha20Rng) -> Vec<u8> {
        (0..k).map(|_| (r.next_u32() & 1) as u8).collect()
    }

    /// Naive parity oracle: `H · cᵀ` computed from the dense matrix.
    fn syndrome_is_zero(h: &BitMatrix, word: &[u8]) -> bool {
        (0..h.rows()).all(|r| (0..h.cols()).filter(|&c| h.get(r, c) && word[c] == 1).count() % 2 == 0)
    }

    fn to_soft(word: &[u8], noise: &[f64], snr_db: f64) -> SoftWord {
        SoftWord {
            values: word
                .iter()
                .zip(noise)
                .map(|(&b, &z)| if b == 1 { 1.0 } else { -1.0 } + z)
                .collect(),
            snr_db,
        }
    }

    #[test]
    fn shape_and_column_weight() {
        let code = LdpcCode::build(&Seed::from_u64(1), 76).unwrap();
        assert_eq!((code.k(), code.n()), (76, 152));
        let h = code.parity_check();
        assert_eq!((h.rows(), h.cols()), (76, 152));
        for c in 0..152 {
            assert_eq!((0..76).filter(|&r| h.get(r, c)).count(), COLUMN_WEIGHT);
        }
        for r in 0..76 {
            assert_eq!((0..152).filter(|&c| h.get(r, c)).count(), ROW_WEIGHT);
        }
        let mut hr = h.clone();
        assert_eq!(hr.reduce().len(), 76, "H must have full row rank");
    }

    #[test]
    fn build_is_deterministic() {
        let a = LdpcCode::build(&Seed::from_u64(5), 40).unwrap();
        let b = LdpcCode::build(&Seed::from_u64(5), 40).unwrap();
        assert_eq!(a, b);
        let c = LdpcCode::build(&Seed::from_u64(6), 40).unwrap();
        assert_ne!(a.parity_check(), c.parity_check());
    }

    #[test]
    fn rejects_tiny_k() {
        assert!(LdpcCode::build(&Seed::from_u64(0), 7).is_err());
        assert!(LdpcCode::build(&Seed::from_u64(0), 8).is_ok());
    }

    #[test]
    fn generator_is_orthogonal_to_parity_check() {
        for (s, k) in [(1u64, 8usize), (2, 33), (3, 76), (4, 128)] {
            let code = LdpcCode::build(&Seed::from_u64(s), k).unwrap();
            let g = code.generator();
            let h = code.parity_check();
            for i in 0..g.rows() {
                for j in 0..h.rows() {
                    let dot = (0..code.n()).filter(|&c| g.get(i, c) && h.get(j, c)).count();
                    assert_eq!(dot % 2, 0, "k={k} G row {i} · H row {j}");
                }
            }
        }
    }

    #[test]
    fn four_cycles_are_removed_for_moderate_lengths() {
        let code = LdpcCode::build(&Seed::from_u64(8), 152).unwrap();
        assert_eq!(count_four_cycles(&code), 0);
    }

    #[test]
    fn encode_is_systematic_and_satisfies_parity() {
        let code = LdpcCode::build(&Seed::from_u64(2), 152).unwrap();
        let h = code.parity_check();
        let mut r = rng(0);
        for _ in 0..20 {
            let m = random_message(152, &mut r);
            let c = code.encode(&m).unwrap();
            assert_eq!(&c[..152], &m[..]);
            assert!(syndrome_is_zero(&h, &c));
            assert!(code.is_codeword(&c));
        }
    }

    #[test]
    fn encode_is_linear() {
        let code = LdpcCode::build(&Seed::from_u64(3), 64).unwrap();
        assert_eq!(code.encode(&[0; 64]).unwrap(), vec![0u8; 128]);
        let mut r = rng(1);
        let a = random_message(64, &mut r);
        let b = random_message(64, &mut r);
        let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let ca = code.encode(&a).unwrap();
        let cb = code.encode(&b).unwrap();
        let sum: Vec<u8> = ca.iter().zip(&cb).map(|(x, y)| x ^ y).collect();
        assert_eq!(sum, code.encode(&ab).unwrap());
    }

    #[test]
    fn encode_rejects_wrong_length() {
        let code = LdpcCode::build(&Seed::from_u64(3), 16).unwrap();
        assert_eq!(
            code.encode(&[0; 15]).unwrap_err(),
            Error::Encode {
                expected: 16,
                got: 15
            }
        );
    }

    #[test]
    fn noiseless_round_trip() {
        let code = LdpcCode::build(&Seed::from_u64(4), 152).unwrap();
        let mut r = rng(2);
        for _ in 0..20 {
            let m = random_message(152, &mut r);
            let c = code.encode(&m).unwrap();
            let soft = to_soft(&c, &[0.0; 304], 60.0);
            assert_eq!(code.decode(&soft).unwrap(), m);
        }
    }

    #[test]
    fn corrects_noise_at_sigma_half() {
        let code = LdpcCode::build(&Seed::from_u64(5), 152).unwrap();
        let mut r = rng(3);
        let sigma = 0.5;
        let snr_db = -20.0 * libm::log10(sigma);
        let trials = 200;
        let mut exact = 0;
        let mut raw_errors = 0usize;
        let mut decoded_errors = 0usize;
        for _ in 0..trials {
            let m = random_message(152, &mut r);
            let c = code.encode(&m).unwrap();
            let noise: Vec<f64> = (0..304)
                .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut r))
                .collect();
            let soft = to_soft(&c, &noise, snr_db);
            raw_errors += soft
                .values
                .iter()
                .take(152)
                .zip(&m)
                .filter(|(&v, &b)| u8::from(v > 0.0) != b)
                .count();
            let d = code.decode(&soft).unwrap();
            let errs = d.iter().zip(&m).filter(|(a, b)| a != b).count();
            decoded_errors += errs;
            if errs == 0 {
                exact += 1;
            }
        }
        assert!(exact as f64 >= 0.95 * trials as f64, "exact {exact}/{trials}");
        assert!(decoded_errors < raw_errors, "{decoded_errors} vs {raw_errors}");
    }

    #[test]
    fn wrong_length_soft_word_is_rejected() {
        let code = LdpcCode::build(&Seed::from_u64(5), 16).unwrap();
        let soft = SoftWord {
            values: vec![1.0; 31],
            snr_db: 10.0,
        };
        assert!(code.decode(&soft).is_err());
    }

    #[test]
    fn decode_is_deterministic() {
        let code = LdpcCode::build(&Seed::from_u64(6), 64).unwrap();
        let mut r = rng(4);
        let m = random_message(64, &mut r);
        let c = code.encode(&m).unwrap();
        let noise: Vec<f64> = (0..128)
            .map(|_| 0.8 * Distribution::<f64>::sample(&StandardNormal, &mut r))
            .collect();
        let soft = to_soft(&c, &noise, 2.0);
        assert_eq!(
            code.decode_detailed(&soft).unwrap(),
            code.decode_detailed(&soft).unwrap()
        );
    }

    #[test]
    fn adjacency_list_lists_every_check() {
        let code = LdpcCode::build(&Seed::from_u64(7), 8).unwrap();
        let text = code.adjacency_list();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        for (r, line) in lines.iter().enumerate() {
            let (row, cols) = line.split_once(':').unwrap();
            assert_eq!(row.parse::<usize>().unwrap(), r);
            assert_eq!(cols.split_whitespace().count(), ROW_WEIGHT);
        }
    }
}
