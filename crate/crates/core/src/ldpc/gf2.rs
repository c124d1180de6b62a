//! Dense bit-packed matrices over GF(2).

use alloc::vec;
use alloc::vec::Vec;

/// Row-major binary matrix with 64 columns per word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry `(r, c)`.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.stride + c / 64] >> (c % 64)) & 1 == 1
    }

    /// Sets entry `(r, c)` to `v`.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.stride + c / 64];
        let mask = 1u64 << (c % 64);
        if v {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Packed words of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    /// `row[dst] ^= row[src]`, restricted to words from `from_word` on.
    fn xor_row_into(&mut self, src: usize, dst: usize, from_word: usize) {
        debug_assert_ne!(src, dst);
        let s = self.stride;
        let (a, b) = if src < dst {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&lo[src * s..(src + 1) * s], &mut hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&hi[..s], &mut lo[dst * s..(dst + 1) * s])
        };
        for (d, x) in b[from_word..].iter_mut().zip(&a[from_word..]) {
            *d ^= *x;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        for i in 0..s {
            self.data.swap(a * s + i, b * s + i);
        }
    }

    /// Brings the matrix to reduced row echelon form in place, scanning columns
    /// left to right. Returns the pivot column of each pivot row; the rank is
    /// the length of the result.
    pub fn reduce(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let word = col / 64;
            let mask = 1u64 << (col % 64);
            let Some(p) = (row..self.rows).find(|&r| self.data[r * self.stride + word] & mask != 0)
            else {
                continue;
            };
            self.swap_rows(row, p);
            for r in 0..self.rows {
                if r != row && self.data[r * self.stride + word] & mask != 0 {
                    self.xor_row_into(row, r, word);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    /// Matrix-vector product `self · v` over GF(2); `v` is packed like a row.
    pub fn mul_packed(&self, v: &[u64]) -> Vec<bool> {
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .map(|(a, b)| (a & b).count_ones())
                    .sum::<u32>()
                    & 1
                    == 1
            })
            .collect()
    }
}

/// Packs bits into 64-bit words, least significant bit first.
pub fn pack(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            out[i / 64] |= 1 << (i % 64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_identity_keeps_it() {
        let mut m = BitMatrix::zeros(70, 70);
        for i in 0..70 {
            m.set(i, i, true);
        }
        let before = m.clone();
        assert_eq!(m.reduce(), (0..70).collect::<Vec<_>>());
        assert_eq!(m, before);
    }

    #[test]
    fn reduce_detects_dependent_rows() {
        // rows: 110, 011, 101 -> third is the sum of the first two
        let mut m = BitMatrix::zeros(3, 3);
        for (r, c) in [(0, 0), (0, 1), (1, 1), (1, 2), (2, 0), (2, 2)] {
            m.set(r, c, true);
        }
        assert_eq!(m.reduce().len(), 2);
    }

    #[test]
    fn mul_packed_matches_naive() {
        let mut m = BitMatrix::zeros(5, 130);
        let mut v = vec![0u8; 130];
        let mut state = 0x1234_5678u32;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            state & 1 == 1
        };
        for r in 0..5 {
            for c in 0..130 {
                m.set(r, c, next());
            }
        }
        for b in v.iter_mut() {
            *b = next() as u8;
        }
        let got = m.mul_packed(&pack(&v));
        for (r, &g) in got.iter().enumerate() {
            let naive = (0..130).filter(|&c| m.get(r, c) && v[c] == 1).count() % 2 == 1;
            assert_eq!(g, naive);
        }
    }
}
