//! Client-side transform: seeded deletions, invert, and selection of the
//! candidate whose symbol frequencies sit closest to the cloud policy.

use num_bigint::BigUint;

use crate::alphabet::{check_symbols, pack_symbols, packed_len, unpack_symbols};
use crate::alphabet::{FileId, Policy, Symbol, SymbolDistribution, SystemConfig};
use crate::error::{decode, param, Result};
use crate::instrument::OpCount;
use crate::prng::{deletion_positions, Seed};

/// Locally kept secret that turns an outsource back into its chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientDeviation {
    pub file_id: FileId,
    pub seed: Seed,
    pub invert_bit: bool,
    /// Deleted symbols in the order the PRNG emitted their positions.
    pub deleted_values: Vec<Symbol>,
}

impl ClientDeviation {
    /// Fixed bytes before the packed values: id, seed, invert flag, count.
    pub const HEADER_LEN: usize = 8 + 8 + 1 + 4;

    /// Deviation-store record: `file_id u64 LE, seed u64 LE, invert u8,
    /// count u32 LE, packed deleted values`.
    pub fn encode(&self, k: u8) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(Self::HEADER_LEN + packed_len(self.deleted_values.len(), k));
        out.extend_from_slice(&self.file_id.0.to_le_bytes());
        out.extend_from_slice(&self.seed.0.to_le_bytes());
        out.push(u8::from(self.invert_bit));
        out.extend_from_slice(&(self.deleted_values.len() as u32).to_le_bytes());
        out.extend_from_slice(&pack_symbols(&self.deleted_values, k)?);
        Ok(out)
    }

    /// Decodes one record from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8], k: u8) -> Result<(Self, usize)> {
        if bytes.len() < Self::HEADER_LEN {
            return Err(decode("truncated deviation header"));
        }
        let file_id = FileId(u64::from_le_bytes(bytes[0..8].try_into().unwrap()));
        let seed = Seed(u64::from_le_bytes(bytes[8..16].try_into().unwrap()));
        let invert_bit = match bytes[16] {
            0 => false,
            1 => true,
            other => return Err(decode(format!("invert flag {other}"))),
        };
        let count = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
        let body = &bytes[Self::HEADER_LEN..];
        let deleted_values = unpack_symbols(body, count, k)?;
        let used = Self::HEADER_LEN + packed_len(count, k);
        Ok((ClientDeviation { file_id, seed, invert_bit, deleted_values }, used))
    }

    /// Bits this record occupies in the deviation store.
    pub fn stored_bits(&self, k: u8) -> u64 {
        8 * (Self::HEADER_LEN + packed_len(self.deleted_values.len(), k)) as u64
    }
}

/// Removes the symbols at `positions` (original indices). Deleted values
/// come back in the order the positions were supplied.
pub fn delete_at(chunk: &[Symbol], positions: &[usize]) -> Result<(Vec<Symbol>, Vec<Symbol>)> {
    let mut ops = OpCount::default();
    delete_at_counted(chunk, positions, &mut ops)
}

fn delete_at_counted(
    chunk: &[Symbol],
    positions: &[usize],
    ops: &mut OpCount,
) -> Result<(Vec<Symbol>, Vec<Symbol>)> {
    let mut removed = vec![false; chunk.len()];
    let mut deleted = Vec::with_capacity(positions.len());
    for &p in positions {
        if p >= chunk.len() {
            return Err(param(format!("position {p} out of range for length {}", chunk.len())));
        }
        if removed[p] {
            return Err(param(format!("duplicate position {p}")));
        }
        removed[p] = true;
        deleted.push(chunk[p]);
    }
    let kept = chunk
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&s, _)| s)
        .collect();
    ops.add((chunk.len() + positions.len()) as u64);
    Ok((kept, deleted))
}

/// Maps each symbol `i` to `2^k - 1 - i`.
pub fn invert(symbols: &[Symbol], k: u8) -> Vec<Symbol> {
    let max = ((1u16 << k) - 1) as u8;
    symbols.iter().map(|&s| max - s).collect()
}

fn histogram(symbols: &[Symbol], n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    for &s in symbols {
        counts[s as usize] += 1;
    }
    counts
}

/// Empirical symbol frequencies of `symbols` over an alphabet of `2^k`.
pub fn frequency(symbols: &[Symbol], k: u8) -> Result<SymbolDistribution> {
    if symbols.is_empty() {
        return Err(param("frequency of an empty string"));
    }
    check_symbols(symbols, k)?;
    SymbolDistribution::from_weights(histogram(symbols, 1 << k))
}

/// Euclidean distance between two distributions.
pub fn policy_distance(freq: &SymbolDistribution, target: &SymbolDistribution) -> Result<f64> {
    if freq.len() != target.len() {
        return Err(param(format!("length mismatch {} vs {}", freq.len(), target.len())));
    }
    Ok((0..freq.len())
        .map(|i| (freq.prob(i) - target.prob(i)).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Exact ordering key for candidate distances: `sum (c_i*W - w_i*len)^2`,
/// the squared distance scaled by `(len*W)^2`. All candidates of one chunk
/// share `len` and `W`, so keys compare like distances without rounding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum DistanceKey {
    Small(u128),
    Big(BigUint),
}

fn distance_key(counts: &[u64], len: usize, target: &SymbolDistribution, reversed: bool) -> DistanceKey {
    let n = counts.len();
    let w = target.weights();
    let total = u128::from(target.denominator());
    let len = len as u128;
    let term = |i: usize| {
        let c = u128::from(if reversed { counts[n - 1 - i] } else { counts[i] });
        (c * total).abs_diff(u128::from(w[i]) * len)
    };
    // Each |term| is at most len*W.
    let fits = (len * total)
        .checked_mul(len * total)
        .and_then(|sq| sq.checked_mul(n as u128))
        .is_some();
    if fits {
        DistanceKey::Small((0..n).map(|i| term(i) * term(i)).sum())
    } else {
        DistanceKey::Big((0..n).map(|i| BigUint::from(term(i)).pow(2)).sum())
    }
}

/// Runs the client transform on one chunk.
///
/// Each seed yields one deletion candidate plus its inverted twin; the
/// candidate closest to the policy wins. Ties go to the lower seed index,
/// and the plain candidate beats its inverted twin.
pub fn transform(
    chunk: &[Symbol],
    policy: &Policy,
    seeds: &[Seed],
    file_id: FileId,
    config: &SystemConfig,
) -> Result<(Vec<Symbol>, ClientDeviation)> {
    let mut ops = OpCount::default();
    transform_counted(chunk, policy, seeds, file_id, config, &mut ops)
}

pub fn transform_counted(
    chunk: &[Symbol],
    policy: &Policy,
    seeds: &[Seed],
    file_id: FileId,
    config: &SystemConfig,
    ops: &mut OpCount,
) -> Result<(Vec<Symbol>, ClientDeviation)> {
    if chunk.len() != config.n_o {
        return Err(param(format!("chunk has {} symbols, expected {}", chunk.len(), config.n_o)));
    }
    if policy.n_b != config.n_b {
        return Err(param(format!("policy n_b {} != config n_b {}", policy.n_b, config.n_b)));
    }
    if seeds.is_empty() {
        return Err(param("at least one seed is required"));
    }
    let n = config.alphabet_size();
    if policy.distribution.len() != n {
        return Err(param("policy distribution has the wrong alphabet size"));
    }
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(param(format!("seed {} repeated", s.0)));
        }
    }
    check_symbols(chunk, config.k)?;
    let target = &policy.distribution;

    // (distance, seed, invert bit, candidate, deleted values)
    type Best = (DistanceKey, Seed, bool, Vec<Symbol>, Vec<Symbol>);
    let mut best: Option<Best> = None;
    for &seed in seeds {
        let positions = deletion_positions(seed, config.n_o, config.n_del())?;
        ops.add(positions.len() as u64);
        let (candidate, deleted) = delete_at_counted(chunk, &positions, ops)?;
        let counts = histogram(&candidate, n);
        ops.add(candidate.len() as u64 + 2 * n as u64);
        let plain = distance_key(&counts, candidate.len(), target, false);
        let inverted = distance_key(&counts, candidate.len(), target, true);
        for (dist, inv) in [(plain, false), (inverted, true)] {
            if best.as_ref().is_none_or(|b| dist < b.0) {
                best = Some((dist, seed, inv, candidate.clone(), deleted.clone()));
            }
        }
    }
    let (_, seed, invert_bit, candidate, deleted_values) = best.expect("seeds nonempty");
    let outsource = if invert_bit { invert(&candidate, config.k) } else { candidate };
    ops.add(outsource.len() as u64);
    Ok((outsource, ClientDeviation { file_id, seed, invert_bit, deleted_values }))
}

/// Rebuilds the original chunk from an outsource and its deviation.
pub fn reconstruct(outsource: &[Symbol], deviation: &ClientDeviation, config: &SystemConfig) -> Result<Vec<Symbol>> {
    let mut ops = OpCount::default();
    reconstruct_counted(outsource, deviation, config, &mut ops)
}

pub fn reconstruct_counted(
    outsource: &[Symbol],
    deviation: &ClientDeviation,
    config: &SystemConfig,
    ops: &mut OpCount,
) -> Result<Vec<Symbol>> {
    if outsource.len() + deviation.deleted_values.len() != config.n_o {
        return Err(decode(format!(
            "outsource {} + deleted {} != n_o {}",
            outsource.len(),
            deviation.deleted_values.len(),
            config.n_o
        )));
    }
    let positions = deletion_positions(deviation.seed, config.n_o, deviation.deleted_values.len())?;
    let mut slot: Vec<Option<Symbol>> = vec![None; config.n_o];
    for (&p, &v) in positions.iter().zip(&deviation.deleted_values) {
        slot[p] = Some(v);
    }
    let base: Vec<Symbol> = if deviation.invert_bit {
        invert(outsource, config.k)
    } else {
        outsource.to_vec()
    };
    let mut kept = base.into_iter();
    let out = slot
        .into_iter()
        .map(|s| s.or_else(|| kept.next()).expect("lengths checked"))
        .collect();
    ops.add(2 * config.n_o as u64);
    Ok(out)
}
