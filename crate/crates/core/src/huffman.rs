//! Canonical Huffman codes over small alphabets (bracket rows and zones).
//!
//! Codes are fully determined by the weight vector: the tree merge order is
//! fixed by a deterministic tie-break and codewords are then reassigned
//! canonically by `(length, index)`, so encoder and decoder only need the
//! weights.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use bitvec::prelude::*;

use crate::error::{decode, param, Result};

/// MSB-first bit string.
pub type Bits = BitVec<u8, Msb0>;

/// Code lengths for `weights`.
///
/// Merge order: lowest weight first; on equal weight leaves go before merged
/// nodes, leaves by index and merged nodes by creation order. A single item
/// gets length 1.
pub fn huffman_lengths(weights: &[u64]) -> Result<Vec<u8>> {
    if weights.is_empty() || weights.iter().all(|&w| w == 0) {
        return Err(param("huffman needs at least one positive weight"));
    }
    let n = weights.len();
    if n == 1 {
        return Ok(vec![1]);
    }
    // (weight, is_internal, order, node)
    let mut heap = BinaryHeap::new();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    for (i, &w) in weights.iter().enumerate() {
        heap.push(Reverse((u128::from(w), false, i, i)));
    }
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, _, _, a)) = heap.pop().unwrap();
        let Reverse((wb, _, _, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, true, next, next)));
        next += 1;
    }
    let root = next - 1;
    let lengths = (0..n)
        .map(|leaf| {
            let mut depth = 0u8;
            let mut node = leaf;
            while node != root {
                node = parent[node];
                depth += 1;
            }
            depth
        })
        .collect::<Vec<_>>();
    if lengths.iter().any(|&l| l > 32) {
        return Err(param("huffman code longer than 32 bits"));
    }
    Ok(lengths)
}

/// A canonical prefix code: codewords assigned in `(length, index)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalCode {
    lengths: Vec<u8>,
    codes: Vec<u32>,
    /// Item indices sorted by `(length, index)`.
    order: Vec<usize>,
    /// `count[l]` = number of codewords of length `l`.
    count: Vec<u32>,
}

impl CanonicalCode {
    pub fn from_weights(weights: &[u64]) -> Result<Self> {
        Self::from_lengths(huffman_lengths(weights)?)
    }

    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self> {
        let max = *lengths.iter().max().ok_or_else(|| param("empty code"))? as usize;
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&i| (lengths[i], i));
        let mut codes = vec![0u32; lengths.len()];
        let mut code = 0u64;
        let mut prev = lengths[order[0]];
        for &i in &order {
            let len = lengths[i];
            if len == 0 {
                return Err(param("zero-length codeword"));
            }
            code <<= len - prev;
            prev = len;
            if code >> len != 0 {
                return Err(param("code lengths oversubscribe the code space"));
            }
            codes[i] = code as u32;
            code += 1;
        }
        let mut count = vec![0u32; max + 1];
        for &l in &lengths {
            count[l as usize] += 1;
        }
        Ok(CanonicalCode { lengths, codes, order, count })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    /// Codeword of item `i` as a `0`/`1` string.
    pub fn codeword(&self, i: usize) -> String {
        let len = self.lengths[i] as usize;
        (0..len)
            .map(|b| if (self.codes[i] >> (len - 1 - b)) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn push(&self, i: usize, out: &mut Bits) {
        let len = self.lengths[i] as usize;
        let code = self.codes[i];
        for b in (0..len).rev() {
            out.push((code >> b) & 1 == 1);
        }
    }

    /// Decodes one codeword starting at `*pos`, advancing it.
    pub fn decode_one(&self, bits: &BitSlice<u8, Msb0>, pos: &mut usize) -> Result<usize> {
        // Canonical decoding: at each length, codes of that length form a
        // contiguous range starting at `first`.
        let mut code = 0u64;
        let mut first = 0u64;
        let mut index = 0usize;
        for len in 1..self.count.len() {
            let bit = *bits
                .get(*pos)
                .ok_or_else(|| decode("bit string ended inside a codeword"))?;
            *pos += 1;
            code = (code << 1) | u64::from(bit);
            let count = u64::from(self.count[len]);
            if code < first + count {
                return Ok(self.order[index + (code - first) as usize]);
            }
            index += count as usize;
            first = (first + count) << 1;
        }
        Err(decode("no codeword matches"))
    }

    /// Decodes exactly `n` codewords that must consume all of `bits`.
    pub fn decode_all(&self, bits: &BitSlice<u8, Msb0>, n: usize) -> Result<Vec<usize>> {
        let mut pos = 0;
        let out = (0..n)
            .map(|_| self.decode_one(bits, &mut pos))
            .collect::<Result<Vec<_>>>()?;
        if pos != bits.len() {
            return Err(decode(format!("{} trailing bits after {n} codewords", bits.len() - pos)));
        }
        Ok(out)
    }

    /// Expected codeword length under `weights`.
    pub fn expected_length(&self, weights: &[u64]) -> f64 {
        let total: u64 = weights.iter().sum();
        weights
            .iter()
            .zip(&self.lengths)
            .map(|(&w, &l)| w as f64 * f64::from(l))
            .sum::<f64>()
            / total as f64
    }
}

/// Packs a bit string into bytes, zero padded to a byte boundary.
pub fn bits_to_bytes(bits: &BitSlice<u8, Msb0>) -> Vec<u8> {
    let mut owned: Bits = bits.to_bitvec();
    owned.set_uninitialized(false);
    owned.into_vec()
}

/// Reads `len` bits back from padded bytes.
pub fn bits_from_bytes(bytes: &[u8], len: usize) -> Result<Bits> {
    if bytes.len() * 8 < len {
        return Err(decode(format!("{} bytes cannot hold {len} bits", bytes.len())));
    }
    let mut bits = Bits::from_slice(bytes);
    bits.truncate(len);
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::entropy_bits;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn is_prefix_free(code: &CanonicalCode) -> bool {
        let words: Vec<String> = (0..code.len()).map(|i| code.codeword(i)).collect();
        words.iter().enumerate().all(|(i, a)| {
            words.iter().enumerate().all(|(j, b)| i == j || !b.starts_with(a.as_str()))
        })
    }

    #[test]
    fn row_sums_from_worked_example() {
        // 7/16, 7/32, 34/192, 1/6 over a common denominator of 192.
        let code = CanonicalCode::from_weights(&[84, 42, 34, 32]).unwrap();
        assert_eq!(code.lengths(), &[1, 2, 3, 3]);
        let words: Vec<String> = (0..4).map(|i| code.codeword(i)).collect();
        assert_eq!(words, vec!["0", "10", "110", "111"]);
    }

    #[test]
    fn degenerate_and_uniform() {
        assert_eq!(huffman_lengths(&[5]).unwrap(), vec![1]);
        assert_eq!(CanonicalCode::from_weights(&[1]).unwrap().codeword(0), "0");
        assert_eq!(huffman_lengths(&[1, 1, 1, 1]).unwrap(), vec![2, 2, 2, 2]);
        assert!(huffman_lengths(&[0, 0]).is_err());
        assert!(huffman_lengths(&[]).is_err());
    }

    #[test]
    fn zero_weights_still_get_codes() {
        let code = CanonicalCode::from_weights(&[10, 0, 0, 5]).unwrap();
        assert!(code.lengths().iter().all(|&l| l > 0));
        assert!(is_prefix_free(&code));
    }

    #[test]
    fn random_codes_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.gen_range(1..40);
            let w: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1000)).collect();
            if w.iter().all(|&x| x == 0) {
                continue;
            }
            let code = CanonicalCode::from_weights(&w).unwrap();
            assert!(is_prefix_free(&code));
            let kraft: f64 = code.lengths().iter().map(|&l| 2f64.powi(-i32::from(l))).sum();
            // A lone codeword still needs one bit, so Kraft sums to 1/2.
            let expected = if n == 1 { 0.5 } else { 1.0 };
            assert!((kraft - expected).abs() < 1e-12);
            let total: u64 = w.iter().sum();
            let h = entropy_bits(w.iter().map(|&x| x as f64 / total as f64));
            if n > 1 {
                assert!(code.expected_length(&w) < h + 1.0);
            }
            // Encode/decode a random message.
            let msg: Vec<usize> = (0..50).map(|_| rng.gen_range(0..n)).collect();
            let mut bits = Bits::new();
            for &m in &msg {
                code.push(m, &mut bits);
            }
            assert_eq!(code.decode_all(&bits, msg.len()).unwrap(), msg);
        }
    }

    #[test]
    fn decode_errors() {
        let code = CanonicalCode::from_weights(&[84, 42, 34, 32]).unwrap();
        let bits = bits![u8, Msb0; 1, 1];
        assert!(code.decode_all(bits, 1).is_err());
        let bits = bits![u8, Msb0; 0, 0];
        assert!(code.decode_all(bits, 1).is_err());
        assert_eq!(code.decode_all(bits, 2).unwrap(), vec![0, 0]);
    }

    #[test]
    fn byte_round_trip() {
        let bits = bits![u8, Msb0; 1, 0, 1, 1, 0, 0, 0, 0, 1];
        let bytes = bits_to_bytes(bits);
        assert_eq!(bytes, vec![0b1011_0000, 0b1000_0000]);
        assert_eq!(bits_from_bytes(&bytes, 9).unwrap().as_bitslice(), bits);
        assert!(bits_from_bytes(&bytes, 17).is_err());
    }
}
