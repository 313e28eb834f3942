//! SplitMix64 and the seeded deletion-position schedule derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// A PRNG seed. The seed value is the initial SplitMix64 state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Seed(pub u64);

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: returns `(output, next_state)`.
pub fn splitmix64_next(state: u64) -> (u64, u64) {
    let next = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = next;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31), next)
}

/// Iterator over a SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: Seed) -> Self {
        SplitMix64 { state: seed.0 }
    }
}

impl Iterator for SplitMix64 {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let (out, next) = splitmix64_next(self.state);
        self.state = next;
        Some(out)
    }
}

/// Distinct positions in `[0, n_o)` in generation order: each draw is reduced
/// modulo `n_o` and draws that repeat an emitted position are skipped.
pub fn deletion_positions(seed: Seed, n_o: usize, count: usize) -> Result<Vec<usize>> {
    if count > n_o {
        return Err(param(format!("cannot draw {count} distinct positions from {n_o}")));
    }
    let mut taken = vec![false; n_o];
    let mut out = Vec::with_capacity(count);
    let mut stream = SplitMix64::new(seed);
    while out.len() < count {
        let candidate = (stream.next().expect("infinite stream") % n_o as u64) as usize;
        if !taken[candidate] {
            taken[candidate] = true;
            out.push(candidate);
        }
    }
    Ok(out)
}
