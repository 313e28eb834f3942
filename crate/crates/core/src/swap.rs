//! Sorting Bid strings into bases and recording the swaps that undo it.

use std::collections::BTreeSet;

use bitvec::prelude::*;

use crate::error::{decode, Error, Result};
use crate::huffman::{bits_from_bytes, bits_to_bytes, Bits};
use crate::instrument::OpCount;

/// Swap record that turns a sorted base back into its Bid string.
///
/// Bit `i` of `bitmap` is set iff a swap has left endpoint `i`; `positions`
/// holds the right endpoints in scan order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Change {
    pub bitmap: Bits,
    pub positions: Vec<u32>,
}

/// Bits per stored swap position: `ceil(log2 n_b)`.
pub fn position_width(n_b: usize) -> u32 {
    if n_b <= 1 {
        0
    } else {
        usize::BITS - (n_b - 1).leading_zeros()
    }
}

impl Change {
    pub fn swap_count(&self) -> usize {
        self.positions.len()
    }

    /// Storage cost in bits: the bitmap plus one fixed-width position per swap.
    pub fn bit_len(&self) -> u64 {
        self.bitmap.len() as u64 + self.positions.len() as u64 * u64::from(position_width(self.bitmap.len()))
    }

    /// Wire layout: bitmap bytes (MSB first, zero padded), `u16 LE` count,
    /// positions bit packed at `ceil(log2 n_b)` bits each, zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_b = self.bitmap.len();
        let width = position_width(n_b) as usize;
        let mut out = bits_to_bytes(&self.bitmap);
        out.extend_from_slice(&(self.positions.len() as u16).to_le_bytes());
        let mut packed = Bits::with_capacity(width * self.positions.len());
        for &p in &self.positions {
            for b in (0..width).rev() {
                packed.push((p >> b) & 1 == 1);
            }
        }
        out.extend_from_slice(&bits_to_bytes(&packed));
        out
    }

    /// Number of bytes `to_bytes` produces.
    pub fn wire_len(n_b: usize, swaps: usize) -> usize {
        n_b.div_ceil(8) + 2 + (swaps * position_width(n_b) as usize).div_ceil(8)
    }

    pub fn from_bytes(bytes: &[u8], n_b: usize) -> Result<Self> {
        let map_len = n_b.div_ceil(8);
        if bytes.len() < map_len + 2 {
            return Err(decode("truncated change record"));
        }
        let bitmap = bits_from_bytes(&bytes[..map_len], n_b)?;
        let count = u16::from_le_bytes([bytes[map_len], bytes[map_len + 1]]) as usize;
        let width = position_width(n_b) as usize;
        let body = &bytes[map_len + 2..];
        if body.len() != (count * width).div_ceil(8) {
            return Err(decode("change positions length mismatch"));
        }
        let packed = bits_from_bytes(body, count * width)?;
        let positions = packed
            .chunks(width.max(1))
            .take(count)
            .map(|c| if width == 0 { 0 } else { c.load_be::<u32>() })
            .collect::<Vec<_>>();
        if positions.len() != count {
            return Err(decode("change positions truncated"));
        }
        Ok(Change { bitmap, positions })
    }
}

/// Stable ascending sort (merge sort) of a Bid string.
pub fn sort_bids(bids: &[u8]) -> Vec<u8> {
    let mut ops = OpCount::default();
    sort_bids_counted(bids, &mut ops)
}

pub fn sort_bids_counted(bids: &[u8], ops: &mut OpCount) -> Vec<u8> {
    let mut out = bids.to_vec();
    let mut compares = 0u64;
    out.sort_by(|a, b| {
        compares += 1;
        a.cmp(b)
    });
    ops.add(compares + bids.len() as u64);
    out
}

/// Finds the swaps that sort `bids` into `base`.
///
/// Scans `j` upward; wherever the working string differs from the base, the
/// smallest `k > j` that holds `base[j]` and is itself out of place is
/// swapped into `j`. Pairs come out with `j < k`, in ascending `j`.
pub fn find_swaps(bids: &[u8], base: &[u8]) -> Result<Vec<(usize, usize)>> {
    let mut ops = OpCount::default();
    find_swaps_counted(bids, base, &mut ops)
}

pub fn find_swaps_counted(bids: &[u8], base: &[u8], ops: &mut OpCount) -> Result<Vec<(usize, usize)>> {
    if bids.len() != base.len() {
        return Err(Error::Internal("base length differs from bid string".into()));
    }
    let alphabet = bids.iter().chain(base).copied().max().map_or(0, |m| usize::from(m) + 1);
    let mut hist = vec![0i64; alphabet];
    for (&a, &b) in bids.iter().zip(base) {
        hist[usize::from(a)] += 1;
        hist[usize::from(b)] -= 1;
    }
    if hist.iter().any(|&h| h != 0) || base.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Internal("base is not the sorted bid string".into()));
    }
    // misplaced[v]: positions currently holding v where the base wants
    // something else.
    let mut misplaced = vec![BTreeSet::new(); alphabet];
    for (i, (&w, &b)) in bids.iter().zip(base).enumerate() {
        if w != b {
            misplaced[usize::from(w)].insert(i);
        }
    }
    ops.add(bids.len() as u64);
    let mut work = bids.to_vec();
    let mut swaps = Vec::new();
    for j in 0..work.len() {
        ops.tick();
        let (have, want) = (work[j], base[j]);
        if have == want {
            continue;
        }
        misplaced[usize::from(have)].remove(&j);
        let k = misplaced[usize::from(want)]
            .pop_first()
            .ok_or_else(|| Error::Internal("no source for a misplaced value".into()))?;
        work.swap(j, k);
        if work[k] != base[k] {
            misplaced[usize::from(have)].insert(k);
        }
        ops.add(3);
        swaps.push((j, k));
    }
    debug_assert_eq!(work, base);
    Ok(swaps)
}

/// Encodes swaps into the bitmap-plus-positions record.
pub fn encode_change(swaps: &[(usize, usize)], n_b: usize) -> Result<Change> {
    let mut bitmap = bitvec![u8, Msb0; 0; n_b];
    let mut positions = Vec::with_capacity(swaps.len());
    let mut last: Option<usize> = None;
    for &(i, j) in swaps {
        if last.is_some_and(|l| i <= l) {
            return Err(Error::Internal(format!("swap left endpoints not strictly increasing at {i}")));
        }
        if i >= j || j >= n_b {
            return Err(Error::Internal(format!("bad swap ({i}, {j}) for n_b={n_b}")));
        }
        bitmap.set(i, true);
        positions.push(j as u32);
        last = Some(i);
    }
    Ok(Change { bitmap, positions })
}

/// Undoes the recorded swaps on `base`, in reverse order.
pub fn apply_change_inverse(base: &[u8], change: &Change) -> Result<Vec<u8>> {
    let mut ops = OpCount::default();
    apply_change_inverse_counted(base, change, &mut ops)
}

pub fn apply_change_inverse_counted(base: &[u8], change: &Change, ops: &mut OpCount) -> Result<Vec<u8>> {
    let n_b = base.len();
    if change.bitmap.len() != n_b {
        return Err(decode(format!("bitmap length {} != base length {n_b}", change.bitmap.len())));
    }
    if change.bitmap.count_ones() != change.positions.len() {
        return Err(decode("positions count does not match bitmap popcount"));
    }
    let pairs: Vec<(usize, usize)> = change
        .bitmap
        .iter_ones()
        .zip(&change.positions)
        .map(|(i, &j)| (i, j as usize))
        .collect();
    ops.add(n_b as u64);
    let mut out = base.to_vec();
    for &(i, j) in pairs.iter().rev() {
        if j >= n_b || j <= i {
            return Err(decode(format!("swap ({i}, {j}) out of range")));
        }
        out.swap(i, j);
        ops.tick();
    }
    Ok(out)
}
