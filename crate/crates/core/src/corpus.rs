//! Synthetic correlated data: a first-order Markov source over k-bit
//! symbols whose entropy rate is set by one skew knob.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{Symbol, SymbolDistribution};
use crate::error::{param, Result};
use crate::privacy::Prior;

/// Every row of the transition matrix is a geometric profile
/// `decay^0, decay^1, ...` laid over a per-row random ordering of the
/// alphabet. `decay = 1` is uniform noise; small `decay` makes long runs of a
/// few favoured successors. With a Zipf `skew > 0` the row orderings are
/// weighted shuffles that favour globally popular symbols, so the symbol
/// marginals are skewed the way text and logs are.
#[derive(Debug, Clone)]
pub struct MarkovSource {
    k: u8,
    rows: Vec<SymbolDistribution>,
    samplers: Vec<WeightedIndex<u64>>,
}

/// Fixed-point scale for the geometric weights.
const SCALE: f64 = (1u64 << 40) as f64;

impl MarkovSource {
    pub fn new(k: u8, decay: f64, seed: u64) -> Result<Self> {
        Self::with_skew(k, decay, 0.0, seed)
    }

    pub fn with_skew(k: u8, decay: f64, skew: f64, seed: u64) -> Result<Self> {
        if !(1..=8).contains(&k) {
            return Err(param(format!("k={k} outside 1..=8")));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(param(format!("decay {decay} outside (0, 1]")));
        }
        if !(skew >= 0.0 && skew.is_finite()) {
            return Err(param(format!("skew {skew} must be a finite nonnegative number")));
        }
        let n = 1usize << k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut popularity: Vec<usize> = (0..n).collect();
        popularity.shuffle(&mut rng);
        // zipf[y]: weight of symbol y in the global popularity ranking.
        let mut zipf = vec![0.0; n];
        for (rank, &sym) in popularity.iter().enumerate() {
            zipf[sym] = ((rank + 1) as f64).powf(-skew);
        }
        let mut rows = Vec::with_capacity(n);
        let mut samplers = Vec::with_capacity(n);
        for _ in 0..n {
            // Weighted shuffle: sort by u^(1/w) descending.
            let mut keyed: Vec<(f64, usize)> = (0..n).map(|y| (rng.gen::<f64>().powf(1.0 / zipf[y]), y)).collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let order: Vec<usize> = keyed.into_iter().map(|(_, y)| y).collect();
            let mut weights = vec![0u64; n];
            for (rank, &sym) in order.iter().enumerate() {
                weights[sym] = ((decay.powi(rank as i32) * SCALE) as u64).max(1);
            }
            samplers.push(WeightedIndex::new(&weights).expect("positive weights"));
            rows.push(SymbolDistribution::from_weights(weights)?);
        }
        Ok(MarkovSource { k, rows, samplers })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn transitions(&self) -> &[SymbolDistribution] {
        &self.rows
    }

    /// The source as an adversary's prior, starting from a uniform symbol.
    pub fn prior(&self) -> Prior {
        Prior::Markov { initial: SymbolDistribution::uniform(1 << self.k), transitions: self.rows.clone() }
    }

    /// Mean of the row entropies: the entropy rate under a uniform state
    /// distribution, which every row shuffle keeps close to stationary.
    pub fn mean_row_entropy(&self) -> f64 {
        self.rows.iter().map(|r| r.entropy()).sum::<f64>() / self.rows.len() as f64
    }

    pub fn generate(&self, len: usize, seed: u64) -> Vec<Symbol> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(len);
        let mut state = rng.gen_range(0..self.rows.len());
        for _ in 0..len {
            state = self.samplers[state].sample(&mut rng);
            out.push(state as Symbol);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_controls_entropy() {
        let uniform = MarkovSource::new(8, 1.0, 1).unwrap();
        assert!((uniform.mean_row_entropy() - 8.0).abs() < 1e-9);
        let skewed = MarkovSource::new(8, 0.3, 1).unwrap();
        assert!(skewed.mean_row_entropy() < 2.0);
        let data = skewed.generate(200_000, 2);
        // Empirical conditional entropy from bigram counts.
        let mut pair = vec![0u64; 256 * 256];
        for w in data.windows(2) {
            pair[usize::from(w[0]) * 256 + usize::from(w[1])] += 1;
        }
        let total = (data.len() - 1) as f64;
        let mut h = 0.0;
        for a in 0..256 {
            let row = &pair[a * 256..(a + 1) * 256];
            let n: u64 = row.iter().sum();
            for &c in row.iter().filter(|&&c| c > 0) {
                h -= c as f64 / total * (c as f64 / n as f64).log2();
            }
        }
        assert!((h - skewed.mean_row_entropy()).abs() < 0.1, "empirical {h}");
    }

    #[test]
    fn skew_concentrates_the_marginal() {
        let flat = MarkovSource::with_skew(8, 0.7, 0.0, 4).unwrap().generate(100_000, 1);
        let skewed = MarkovSource::with_skew(8, 0.7, 1.5, 4).unwrap().generate(100_000, 1);
        let marginal_entropy = |d: &[u8]| {
            let mut c = [0u64; 256];
            for &x in d {
                c[usize::from(x)] += 1;
            }
            crate::alphabet::entropy_bits(c.iter().map(|&v| v as f64 / d.len() as f64))
        };
        assert!(marginal_entropy(&flat) > 7.5);
        assert!(marginal_entropy(&skewed) < 6.0);
    }

    #[test]
    fn deterministic_and_in_range() {
        let s = MarkovSource::new(4, 0.5, 3).unwrap();
        let a = s.generate(1000, 9);
        assert_eq!(a, s.generate(1000, 9));
        assert!(a.iter().all(|&x| x < 16));
        assert!(MarkovSource::new(4, 0.0, 3).is_err());
        assert!(MarkovSource::new(9, 0.5, 3).is_err());
        s.prior().validate().unwrap();
    }
}
