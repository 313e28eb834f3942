//! Core value types: symbols, identifiers, distributions and the system
//! configuration.
//!
//! Symbols are `u8` values below `2^k` (`k <= 8`). Chunks and outsources are
//! plain symbol vectors; their lengths are checked against [`SystemConfig`]
//! at the module boundaries that care.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// A k-bit symbol value.
pub type Symbol = u8;

/// Client-chosen identifier of one uploaded chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileId(pub u64);

/// System-wide parameters shared by clients and the cloud.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Bits per symbol.
    pub k: u8,
    /// Symbols per original chunk.
    pub n_o: usize,
    /// Symbols per outsource.
    pub n_b: usize,
    /// Candidate seeds tried per chunk.
    pub t: usize,
    pub s_seed: u32,
    pub s_fid: u32,
    pub s_p: u32,
    pub zones_enabled: bool,
}

impl SystemConfig {
    pub fn new(k: u8, n_o: usize, n_b: usize) -> Result<Self> {
        let cfg = SystemConfig {
            k,
            n_o,
            n_b,
            t: 4,
            s_seed: 64,
            s_fid: 64,
            s_p: 64,
            zones_enabled: k >= 4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seeds(mut self, t: usize) -> Result<Self> {
        self.t = t;
        self.validate()?;
        Ok(self)
    }

    pub fn with_zones(mut self, zones: bool) -> Result<Self> {
        self.zones_enabled = zones;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=8).contains(&self.k) || !self.k.is_multiple_of(2) {
            return Err(param(format!("k must be even and in 2..=8, got {}", self.k)));
        }
        if self.n_b == 0 || self.n_b > self.n_o {
            return Err(param(format!(
                "need 0 < n_b <= n_o, got n_b={} n_o={}",
                self.n_b, self.n_o
            )));
        }
        if self.n_b > u16::MAX as usize + 1 {
            return Err(param("n_b larger than 65536 is not encodable"));
        }
        if self.t == 0 {
            return Err(param("t must be at least 1"));
        }
        Ok(())
    }

    /// Alphabet size `N = 2^k`.
    pub fn alphabet_size(&self) -> usize {
        1usize << self.k
    }

    /// Number of symbols removed per chunk, `n_o - n_b`.
    pub fn n_del(&self) -> usize {
        self.n_o - self.n_b
    }
}

/// A probability vector over the `2^k` symbols, held as exact rationals
/// sharing one denominator.
///
/// Every construction path normalizes by definition: `total` is the sum of
/// the weights, so `sum(p_i) == 1` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolDistribution {
    weights: Vec<u64>,
    total: u64,
}

/// Fixed-point scale used when converting real-valued probabilities.
const FIXED_SCALE: f64 = (1u64 << 40) as f64;

impl SymbolDistribution {
    /// Builds a distribution from nonnegative integer weights.
    pub fn from_weights(weights: Vec<u64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(param("empty distribution"));
        }
        let total = weights
            .iter()
            .try_fold(0u64, |acc, &w| acc.checked_add(w))
            .ok_or_else(|| param("distribution weights overflow"))?;
        if total == 0 {
            return Err(param("distribution has no positive weight"));
        }
        Ok(SymbolDistribution { weights, total })
    }

    /// Converts real probabilities to 40-bit fixed point. The input must sum
    /// to one within `2^-20`.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(param("probabilities must be finite and nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 2f64.powi(-20) {
            return Err(param(format!("probabilities sum to {sum}, not 1")));
        }
        Self::from_weights(probs.iter().map(|p| (p * FIXED_SCALE).round() as u64).collect())
    }

    pub fn uniform(n: usize) -> Self {
        SymbolDistribution { weights: vec![1; n], total: n as u64 }
    }

    /// Laplace-smoothed histogram: `(count_i + 1) / (total + N)`.
    pub fn laplace(counts: &[u64]) -> Self {
        let weights: Vec<u64> = counts.iter().map(|c| c + 1).collect();
        let total = weights.iter().sum();
        SymbolDistribution { weights, total }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn denominator(&self) -> u64 {
        self.total
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.weights[i] as f64 / self.total as f64
    }

    pub fn probs(&self) -> Vec<f64> {
        (0..self.weights.len()).map(|i| self.prob(i)).collect()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_bits(self.weights.iter().map(|&w| w as f64 / self.total as f64))
    }
}

/// `-sum p log2 p`, skipping zero entries.
pub fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Target distribution and outsource length published by the cloud.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub distribution: SymbolDistribution,
    pub n_b: usize,
}

impl Policy {
    pub fn new(distribution: SymbolDistribution, n_b: usize) -> Self {
        Policy { distribution, n_b }
    }
}

pub(crate) fn check_symbols(symbols: &[Symbol], k: u8) -> Result<()> {
    let limit = 1u32 << k;
    match symbols.iter().find(|&&s| u32::from(s) >= limit) {
        Some(&s) => Err(Error::SymbolRange { value: u32::from(s), k }),
        None => Ok(()),
    }
}

/// Packs symbols into bytes: two per byte (high nibble first) for `k = 4`,
/// one per byte otherwise. Trailing pad bits are zero.
pub fn pack_symbols(symbols: &[Symbol], k: u8) -> Result<Vec<u8>> {
    if k == 0 || k > 8 {
        return Err(param(format!("unsupported k={k}")));
    }
    check_symbols(symbols, k)?;
    if k == 4 {
        Ok(symbols
            .chunks(2)
            .map(|pair| (pair[0] << 4) | pair.get(1).copied().unwrap_or(0))
            .collect())
    } else {
        Ok(symbols.to_vec())
    }
}

/// Number of bytes `pack_symbols` produces for `count` symbols.
pub fn packed_len(count: usize, k: u8) -> usize {
    if k == 4 {
        count.div_ceil(2)
    } else {
        count
    }
}

/// Inverse of [`pack_symbols`].
pub fn unpack_symbols(bytes: &[u8], count: usize, k: u8) -> Result<Vec<Symbol>> {
    if k == 0 || k > 8 {
        return Err(param(format!("unsupported k={k}")));
    }
    let need = packed_len(count, k);
    if bytes.len() < need {
        return Err(Error::Decode(format!(
            "need {need} bytes for {count} symbols, have {}",
            bytes.len()
        )));
    }
    if k == 4 {
        Ok((0..count)
            .map(|i| {
                let b = bytes[i / 2];
                if i % 2 == 0 {
                    b >> 4
                } else {
                    b & 0x0f
                }
            })
            .collect())
    } else {
        let out = bytes[..count].to_vec();
        check_symbols(&out, k).map_err(|e| Error::Decode(e.to_string()))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nibble_packing() {
        assert_eq!(pack_symbols(&[4, 10], 4).unwrap(), vec![0x4A]);
        assert_eq!(pack_symbols(&[15, 15, 15], 4).unwrap(), vec![0xFF, 0xF0]);
        assert_eq!(pack_symbols(&[255, 0], 8).unwrap(), vec![0xFF, 0x00]);
    }

    #[test]
    fn nibble_unpacking() {
        assert_eq!(unpack_symbols(&[0x4A], 2, 4).unwrap(), vec![4, 10]);
        assert_eq!(unpack_symbols(&[0xFF, 0xF0], 3, 4).unwrap(), vec![15, 15, 15]);
        assert!(unpack_symbols(&[], 0, 4).unwrap().is_empty());
        assert!(matches!(unpack_symbols(&[0xFF], 3, 4), Err(Error::Decode(_))));
    }

    #[test]
    fn out_of_range_symbol() {
        assert_eq!(
            pack_symbols(&[16], 4),
            Err(Error::SymbolRange { value: 16, k: 4 })
        );
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(4, 11, 8).is_ok());
        assert!(SystemConfig::new(3, 11, 8).is_err());
        assert!(SystemConfig::new(8, 8, 9).is_err());
        assert!(SystemConfig::new(8, 8, 8).unwrap().with_seeds(0).is_err());
        assert_eq!(SystemConfig::new(8, 256, 241).unwrap().alphabet_size(), 256);
    }

    #[test]
    fn distributions_normalize() {
        let d = SymbolDistribution::laplace(&[8, 0, 0, 0]);
        assert_eq!(d.weights(), &[9, 1, 1, 1]);
        assert_eq!(d.denominator(), 12);
        let d = SymbolDistribution::from_probs(&[0.5, 0.25, 0.25]).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(SymbolDistribution::from_probs(&[0.5, 0.4]).is_err());
        assert!(SymbolDistribution::from_weights(vec![0, 0]).is_err());
        assert!((SymbolDistribution::uniform(16).entropy() - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pack_round_trip(k in prop::sample::select(vec![4u8, 8]), raw in prop::collection::vec(any::<u8>(), 0..1024)) {
            let mask = ((1u16 << k) - 1) as u8;
            let syms: Vec<u8> = raw.iter().map(|s| s & mask).collect();
            let packed = pack_symbols(&syms, k).unwrap();
            prop_assert_eq!(packed.len(), packed_len(syms.len(), k));
            prop_assert_eq!(unpack_symbols(&packed, syms.len(), k).unwrap(), syms);
        }
    }
}
