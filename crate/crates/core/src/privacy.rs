//! Information-theoretic privacy of the deletion transform: preimage
//! counts, posterior over original chunks, uncertainty and leakage.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::alphabet::{entropy_bits, Symbol, SymbolDistribution};
use crate::error::{param, Error, Result};

/// Largest candidate set the posterior will enumerate.
pub const ENUMERATION_LIMIT: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Adversary {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReport {
    /// Number of chunks the adversary cannot rule out.
    #[serde(serialize_with = "big_as_string")]
    pub m: BigUint,
    pub uncertainty_bits: f64,
    pub leakage: f64,
    pub adversary: Adversary,
    pub prng_broken: bool,
}

fn big_as_string<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// `log2` of an arbitrarily large integer; `-inf` for zero.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().map_or(f64::NEG_INFINITY, |v| (v as f64).log2());
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("64 bits after shift");
    shift as f64 + (top as f64).log2()
}

fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    let mut acc = BigUint::one();
    for i in 0..r {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of length-`n_o` strings over `2^k` symbols that contain a fixed
/// length-`n_b` string as a subsequence:
/// `sum_{j=0}^{n_o-n_b} C(n_o, j+n_b) * (2^k-1)^(n_o-n_b-j)`.
pub fn preimage_count_weak(n_o: usize, n_b: usize, k: u8) -> Result<BigUint> {
    if n_b > n_o {
        return Err(param(format!("n_b={n_b} exceeds n_o={n_o}")));
    }
    let others = BigUint::from((1u64 << k) - 1);
    let n_del = n_o - n_b;
    let mut sum = BigUint::zero();
    for j in 0..=n_del {
        sum += binomial(n_o as u64, (j + n_b) as u64) * others.pow((n_del - j) as u32);
    }
    Ok(sum)
}

/// Weak adversary: knows the outsource and the system parameters only.
/// With a broken PRNG the deleted positions are known and only their values
/// remain open.
pub fn weak_report(n_o: usize, n_b: usize, k: u8, prng_broken: bool) -> Result<PrivacyReport> {
    if n_o == 0 {
        return Err(param("n_o must be positive"));
    }
    let total = f64::from(k) * n_o as f64;
    let (m, uncertainty, leakage) = if prng_broken {
        if n_b > n_o {
            return Err(param(format!("n_b={n_b} exceeds n_o={n_o}")));
        }
        let exp = u64::from(k) * (n_o - n_b) as u64;
        (BigUint::one() << exp, exp as f64, n_b as f64 / n_o as f64)
    } else {
        let m = preimage_count_weak(n_o, n_b, k)?;
        let u = log2_big(&m);
        (m, u, (total - u) / total)
    };
    Ok(PrivacyReport { m, uncertainty_bits: uncertainty, leakage, adversary: Adversary::Weak, prng_broken })
}

/// Number of distinct index sets at which `o` occurs in `f` as a
/// subsequence. Zero when `o` is longer than `f`.
pub fn count_embeddings(f: &[Symbol], o: &[Symbol]) -> BigUint {
    if o.len() > f.len() {
        return BigUint::zero();
    }
    // ways[j]: embeddings of o[..j] in the prefix of f seen so far.
    let mut ways = vec![BigUint::zero(); o.len() + 1];
    ways[0] = BigUint::one();
    for &x in f {
        for j in (1..=o.len()).rev() {
            if o[j - 1] == x {
                let prev = ways[j - 1].clone();
                ways[j] += prev;
            }
        }
    }
    ways.pop().unwrap()
}

/// What the strong adversary believes about original chunks.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Uniform { k: u8 },
    /// Independent symbols with one shared distribution.
    Iid(SymbolDistribution),
    /// First-order chain: distribution of the first symbol, then one
    /// transition row per previous symbol.
    Markov { initial: SymbolDistribution, transitions: Vec<SymbolDistribution> },
}

impl Prior {
    pub fn alphabet_size(&self) -> usize {
        match self {
            Prior::Uniform { k } => 1 << k,
            Prior::Iid(d) => d.len(),
            Prior::Markov { initial, .. } => initial.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Prior::Markov { initial, transitions } = self {
            if transitions.len() != initial.len() || transitions.iter().any(|t| t.len() != initial.len()) {
                return Err(param("markov prior needs one transition row per symbol, each over the same alphabet"));
            }
        }
        Ok(())
    }

    pub fn prob(&self, f: &[Symbol]) -> f64 {
        match self {
            Prior::Uniform { k } => 2f64.powi(-(i32::from(*k) * f.len() as i32)),
            Prior::Iid(d) => f.iter().map(|&s| d.prob(usize::from(s))).product(),
            Prior::Markov { initial, transitions } => {
                let Some((&first, _)) = f.split_first() else { return 1.0 };
                let mut p = initial.prob(usize::from(first));
                for w in f.windows(2) {
                    p *= transitions[usize::from(w[0])].prob(usize::from(w[1]));
                }
                p
            }
        }
    }

    /// Entropy of a whole length-`n` chunk, in bits.
    pub fn entropy(&self, n: usize) -> f64 {
        match self {
            Prior::Uniform { k } => f64::from(*k) * n as f64,
            Prior::Iid(d) => d.entropy() * n as f64,
            Prior::Markov { initial, transitions } => {
                if n == 0 {
                    return 0.0;
                }
                let rows: Vec<f64> = transitions.iter().map(|t| t.entropy()).collect();
                let mut marginal = initial.probs();
                let mut h = initial.entropy();
                for _ in 1..n {
                    h += marginal.iter().zip(&rows).map(|(p, r)| p * r).sum::<f64>();
                    let mut next = vec![0.0; marginal.len()];
                    for (x, &p) in marginal.iter().enumerate() {
                        for (y, slot) in next.iter_mut().enumerate() {
                            *slot += p * transitions[x].prob(y);
                        }
                    }
                    marginal = next;
                }
                h
            }
        }
    }
}

/// Posterior over candidate chunks, in lexicographic candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub candidates: Vec<(Vec<Symbol>, f64)>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(self.candidates.iter().map(|c| c.1))
    }

    pub fn prob_of(&self, f: &[Symbol]) -> f64 {
        self.candidates
            .binary_search_by(|c| c.0.as_slice().cmp(f))
            .map_or(0.0, |i| self.candidates[i].1)
    }

    /// 1-based rank of `f` by descending probability, ties in lexicographic
    /// order. `None` if `f` is not a candidate.
    pub fn rank_of(&self, f: &[Symbol]) -> Option<usize> {
        let i = self.candidates.binary_search_by(|c| c.0.as_slice().cmp(f)).ok()?;
        let p = self.candidates[i].1;
        let above = self.candidates.iter().filter(|c| c.1 > p).count();
        let tied_before = self.candidates[..i].iter().filter(|c| c.1 == p).count();
        Some(above + tied_before + 1)
    }
}

/// Posterior of the strong adversary after seeing `o`.
///
/// Without `known_positions` every length-`n_o` supersequence of `o` is a
/// candidate, weighted by its embedding count times its prior. With them
/// (broken PRNG) only fillings of those original indices are candidates.
pub fn strong_posterior(o: &[Symbol], prior: &Prior, n_o: usize, known_positions: Option<&[usize]>) -> Result<Posterior> {
    prior.validate()?;
    let q = prior.alphabet_size();
    if o.len() > n_o {
        return Err(param(format!("outsource of {} symbols exceeds n_o={n_o}", o.len())));
    }
    if o.iter().any(|&s| usize::from(s) >= q) {
        return Err(param("outsource symbol outside the prior's alphabet"));
    }
    let n_del = n_o - o.len();
    let mut weighted: Vec<(Vec<Symbol>, f64)> = match known_positions {
        Some(positions) => {
            if positions.len() != n_del {
                return Err(param(format!("{} known positions for {n_del} deletions", positions.len())));
            }
            let required = BigUint::from(q).pow(n_del as u32);
            gate(&required)?;
            let mut sorted = positions.to_vec();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.last().is_some_and(|&p| p >= n_o) {
                return Err(param("known positions must be distinct and below n_o"));
            }
            fillings(o, &sorted, n_o, q)
                .into_iter()
                .map(|f| {
                    let p = prior.prob(&f);
                    (f, p)
                })
                .collect()
        }
        None => {
            let k = q.trailing_zeros() as u8;
            gate(&preimage_count_weak(n_o, o.len(), k)?)?;
            supersequences(o, n_o, q)
                .into_iter()
                .map(|f| {
                    let w = count_embeddings(&f, o).to_f64().unwrap_or(f64::INFINITY);
                    let p = w * prior.prob(&f);
                    (f, p)
                })
                .collect()
        }
    };
    let total: f64 = weighted.iter().map(|c| c.1).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Parameter("prior gives every candidate zero probability".into()));
    }
    for c in &mut weighted {
        c.1 /= total;
    }
    weighted.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(Posterior { candidates: weighted })
}

fn gate(required: &BigUint) -> Result<()> {
    if *required > BigUint::from(ENUMERATION_LIMIT) {
        return Err(Error::Capacity { required: required.to_string(), limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

/// All chunks with `o` in the unlisted slots and any symbols at `positions`
/// (sorted ascending).
fn fillings(o: &[Symbol], positions: &[usize], n_o: usize, q: usize) -> Vec<Vec<Symbol>> {
    let mut template = Vec::with_capacity(n_o);
    let mut rest = o.iter();
    let mut p = positions.iter().peekable();
    for i in 0..n_o {
        if p.peek() == Some(&&i) {
            p.next();
            template.push(0);
        } else {
            template.push(*rest.next().expect("lengths checked"));
        }
    }
    let mut out = Vec::with_capacity(q.pow(positions.len() as u32));
    let mut digits = vec![0usize; positions.len()];
    loop {
        let mut f = template.clone();
        for (&pos, &d) in positions.iter().zip(&digits) {
            f[pos] = d as Symbol;
        }
        out.push(f);
        let mut i = digits.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < q {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Every length-`n` supersequence of `o`, each exactly once.
///
/// A supersequence is produced through its leftmost embedding: while `j`
/// symbols of `o` are matched, the next symbol either equals `o[j]` (and
/// advances) or is any other symbol; once all of `o` is matched the tail is
/// free.
fn supersequences(o: &[Symbol], n: usize, q: usize) -> Vec<Vec<Symbol>> {
    fn go(o: &[Symbol], n: usize, q: usize, j: usize, cur: &mut Vec<Symbol>, out: &mut Vec<Vec<Symbol>>) {
        if cur.len() == n {
            if j == o.len() {
                out.push(cur.clone());
            }
            return;
        }
        if n - cur.len() < o.len() - j {
            return;
        }
        for s in 0..q {
            let s = s as Symbol;
            let advance = j < o.len() && o[j] == s;
            cur.push(s);
            go(o, n, q, j + usize::from(advance), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(o, n, q, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Strong adversary report: posterior entropy as uncertainty, leakage
/// relative to the prior's entropy of a whole chunk.
pub fn strong_report(o: &[Symbol], prior: &Prior, n_o: usize, known_positions: Option<&[usize]>) -> Result<PrivacyReport> {
    let post = strong_posterior(o, prior, n_o, known_positions)?;
    let u = post.entropy();
    let h = prior.entropy(n_o);
    let leakage = if h > 0.0 { ((h - u) / h).clamp(0.0, 1.0) } else { 1.0 };
    Ok(PrivacyReport {
        m: BigUint::from(post.len()),
        uncertainty_bits: u,
        leakage,
        adversary: Adversary::Strong,
        prng_broken: known_positions.is_some(),
    })
}

/// Share of trials whose true chunk ranks within the top `g`, per `g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCurve {
    pub g: Vec<usize>,
    pub fraction: Vec<f64>,
    pub trials: usize,
    /// Candidate count of every trial.
    pub candidates: Vec<usize>,
}

/// One trial: the true chunk, what the cloud received (with the invert bit
/// already undone) and, for a broken PRNG, the deleted positions.
#[derive(Debug, Clone)]
pub struct RankTrial {
    pub chunk: Vec<Symbol>,
    pub outsource: Vec<Symbol>,
    pub known_positions: Option<Vec<usize>>,
}

pub fn rank_experiment(trials: &[RankTrial], prior: &Prior, g_grid: &[usize]) -> Result<RankCurve> {
    let mut hits = vec![0usize; g_grid.len()];
    let mut candidates = Vec::with_capacity(trials.len());
    for t in trials {
        let post = strong_posterior(&t.outsource, prior, t.chunk.len(), t.known_positions.as_deref())?;
        let rank = post
            .rank_of(&t.chunk)
            .ok_or_else(|| Error::Internal("true chunk missing from its own candidate set".into()))?;
        for (h, &g) in hits.iter_mut().zip(g_grid) {
            if rank <= g {
                *h += 1;
            }
        }
        candidates.push(post.len());
    }
    let n = trials.len().max(1) as f64;
    Ok(RankCurve {
        g: g_grid.to_vec(),
        fraction: hits.iter().map(|&h| h as f64 / n).collect(),
        trials: trials.len(),
        candidates,
    })
}
