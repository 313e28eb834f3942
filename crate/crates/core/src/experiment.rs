//! Experiment sweeps that regenerate the evaluation curves at desk scale,
//! plus operation-count scaling runs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::alphabet::{unpack_symbols, FileId, Symbol, SystemConfig};
use crate::client::{delete_at, reconstruct_counted, transform_counted, ClientDeviation};
use crate::engine::CloudEngine;
use crate::error::{param, Error, Result};
use crate::instrument::OpCount;
use crate::metrics::{measure, CompressionReport, ReportRow};
use crate::privacy::{rank_experiment, strong_report, weak_report, Prior, RankTrial};
use crate::prng::{deletion_positions, Seed};

/// Splits a symbol stream into whole chunks of `n_o`, dropping the tail.
pub fn chunks_of(symbols: &[Symbol], n_o: usize) -> Vec<Vec<Symbol>> {
    symbols.chunks_exact(n_o).map(<[Symbol]>::to_vec).collect()
}

/// Reads bytes as k-bit symbols (k = 8: one per byte, k = 4: high nibble
/// first, and so on).
pub fn bytes_as_symbols(bytes: &[u8], k: u8) -> Result<Vec<Symbol>> {
    unpack_symbols(bytes, bytes.len() * 8 / usize::from(k), k)
}

/// Everything one run produced.
pub struct RunOutput {
    pub report: CompressionReport,
    pub deviations: Vec<ClientDeviation>,
    pub engine: CloudEngine,
}

/// Uploads every chunk through the client transform into a fresh engine.
/// The client fetches the current policy before each upload.
pub fn run_uploads(config: &SystemConfig, chunks: &[Vec<Symbol>], seed: u64, refresh: Option<u64>) -> Result<RunOutput> {
    if chunks.is_empty() {
        return Err(param("no chunks to upload"));
    }
    let mut engine = CloudEngine::new(config.clone())?.with_refresh(refresh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deviations = Vec::with_capacity(chunks.len());
    let mut ops = OpCount::default();
    let mut policy = engine.policy();
    let mut version = engine.table_version();
    for (i, chunk) in chunks.iter().enumerate() {
        if engine.table_version() != version {
            policy = engine.policy();
            version = engine.table_version();
        }
        let seeds = fresh_seeds(&mut rng, config.t);
        let (o, d) = transform_counted(chunk, &policy, &seeds, FileId(i as u64), config, &mut ops)?;
        engine.dedup_counted(d.file_id, &o, &mut ops)?;
        deviations.push(d);
    }
    let report = measure(config, &deviations, &engine)?;
    Ok(RunOutput { report, deviations, engine })
}

fn fresh_seeds(rng: &mut impl Rng, t: usize) -> Vec<Seed> {
    let mut seeds: Vec<Seed> = Vec::with_capacity(t);
    while seeds.len() < t {
        let s = Seed(rng.gen());
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    seeds
}

/// One report per deletion count on the same chunks.
pub fn ndel_sweep(
    chunks: &[Vec<Symbol>],
    k: u8,
    n_dels: &[usize],
    zones: bool,
    t: usize,
    seed: u64,
    refresh: Option<u64>,
) -> Result<Vec<ReportRow>> {
    let n_o = chunks.first().ok_or_else(|| param("no chunks"))?.len();
    n_dels
        .par_iter()
        .map(|&n_del| {
            let n_b = n_o.checked_sub(n_del).filter(|&b| b > 0).ok_or_else(|| param(format!("n_del={n_del} too large")))?;
            let config = SystemConfig::new(k, n_o, n_b)?.with_zones(zones)?.with_seeds(t)?;
            let run = run_uploads(&config, chunks, seed, refresh)?;
            Ok(ReportRow::new(format!("ndel={n_del}"), &config, &run.report))
        })
        .collect()
}

/// The same bytes symbolized at each `k`, with chunks of `chunk_bytes`
/// bytes and `del_bits` deleted bits per chunk.
pub fn k_sweep(bytes: &[u8], ks: &[u8], chunk_bytes: usize, del_bits: usize, zones: bool, seed: u64) -> Result<Vec<ReportRow>> {
    ks.par_iter()
        .map(|&k| {
            let n_o = chunk_bytes * 8 / usize::from(k);
            let n_del = del_bits / usize::from(k);
            let config = SystemConfig::new(k, n_o, n_o - n_del)?.with_zones(zones)?;
            let chunks = chunks_of(&bytes_as_symbols(bytes, k)?, n_o);
            let run = run_uploads(&config, &chunks, seed, None)?;
            Ok(ReportRow::new(format!("k={k}"), &config, &run.report))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyRow {
    pub adversary: String,
    pub prng_broken: bool,
    pub n_o: usize,
    pub n_b: usize,
    pub k: u8,
    pub g: Option<usize>,
    pub m: String,
    pub uncertainty_bits: f64,
    pub leakage: f64,
    pub top_g_fraction: Option<f64>,
}

/// Weak-adversary lines for both PRNG states over a deletion range.
pub fn weak_grid(n_o: usize, k: u8, n_dels: &[usize]) -> Result<Vec<PrivacyRow>> {
    let mut rows = Vec::new();
    for &n_del in n_dels {
        let n_b = n_o.checked_sub(n_del).ok_or_else(|| param("n_del exceeds n_o"))?;
        for broken in [false, true] {
            let r = weak_report(n_o, n_b, k, broken)?;
            rows.push(PrivacyRow {
                adversary: "weak".into(),
                prng_broken: broken,
                n_o,
                n_b,
                k,
                g: None,
                m: r.m.to_string(),
                uncertainty_bits: r.uncertainty_bits,
                leakage: r.leakage,
                top_g_fraction: None,
            });
        }
    }
    Ok(rows)
}

/// Builds rank trials from random chunks drawn from `chunks`. With
/// `prng_broken` the adversary learns the deleted positions; in both cases
/// it sees the outsource with the invert bit undone.
pub fn rank_trials(chunks: &[Vec<Symbol>], n_b: usize, prng_broken: bool, seed: u64) -> Result<Vec<RankTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    chunks
        .iter()
        .map(|chunk| {
            let positions = deletion_positions(Seed(rng.gen()), chunk.len(), chunk.len() - n_b)?;
            let (o, _) = delete_at(chunk, &positions)?;
            Ok(RankTrial { chunk: chunk.clone(), outsource: o, known_positions: prng_broken.then_some(positions) })
        })
        .collect()
}

/// Toy-scale strong adversary: mean uncertainty and leakage over the trials
/// plus the top-g curve.
pub fn strong_grid(trials: &[RankTrial], prior: &Prior, k: u8, g_grid: &[usize]) -> Result<Vec<PrivacyRow>> {
    let first = trials.first().ok_or_else(|| param("no trials"))?;
    let n_o = first.chunk.len();
    let n_b = first.outsource.len();
    let broken = first.known_positions.is_some();
    let reports = trials
        .par_iter()
        .map(|t| strong_report(&t.outsource, prior, n_o, t.known_positions.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    let u = reports.iter().map(|r| r.uncertainty_bits).sum::<f64>() / n;
    let l = reports.iter().map(|r| r.leakage).sum::<f64>() / n;
    let m = reports.iter().map(|r| r.m.clone()).max().expect("nonempty").to_string();
    let curve = rank_experiment(trials, prior, g_grid)?;
    Ok(curve
        .g
        .iter()
        .zip(&curve.fraction)
        .map(|(&g, &f)| PrivacyRow {
            adversary: "strong".into(),
            prng_broken: broken,
            n_o,
            n_b,
            k,
            g: Some(g),
            m: m.clone(),
            uncertainty_bits: u,
            leakage: l,
            top_g_fraction: Some(f),
        })
        .collect())
}

pub fn write_csv<T: Serialize>(out: impl Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Mean operation counts for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpProfile {
    pub n_b: usize,
    pub n_o: usize,
    pub transform: f64,
    pub dedup: f64,
    pub decompress_indexed: f64,
    pub decompress_scan: f64,
    pub reconstruct: f64,
    pub max_touches: u64,
}

/// Uploads `files` random chunks with `n_o = n_b + n_b / 16` and averages
/// the operation counts of every stage. `stored_bases` extra random uploads
/// happen first so the scan variant of decompression has a fixed-size
/// population to search.
pub fn op_profile(k: u8, n_b: usize, files: usize, stored_bases: usize, seed: u64) -> Result<OpProfile> {
    let n_o = n_b + n_b / 16;
    let config = SystemConfig::new(k, n_o, n_b)?;
    let mut engine = CloudEngine::new(config.clone())?.with_refresh(None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = 1u16 << k;
    let policy = engine.policy();
    let mut chunk = || -> Vec<Symbol> { (0..n_o).map(|_| rng.gen_range(0..q) as Symbol).collect() };
    let mut pending = Vec::new();
    for i in 0..stored_bases + files {
        pending.push((FileId(i as u64), chunk()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut t_ops, mut d_ops, mut r_ops, mut gi, mut gs) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut max_touches = 0u64;
    let mut measured = Vec::new();
    for (n, (id, c)) in pending.iter().enumerate() {
        let seeds = fresh_seeds(&mut rng, config.t);
        let mut ops = OpCount::default();
        let (o, d) = transform_counted(c, &policy, &seeds, *id, &config, &mut ops)?;
        let tr = ops.0;
        let mut ops = OpCount::default();
        engine.dedup_counted(*id, &o, &mut ops)?;
        max_touches = max_touches.max(engine.forest().last_touches().path);
        if n >= stored_bases {
            t_ops += tr;
            d_ops += ops.0;
            measured.push((*id, o, d, c));
        }
    }
    for (id, o, d, c) in &measured {
        let mut ops = OpCount::default();
        let back = engine.decompress_counted(*id, false, &mut ops)?;
        gi += ops.0;
        let mut ops = OpCount::default();
        engine.decompress_counted(*id, true, &mut ops)?;
        gs += ops.0;
        if &back != o {
            return Err(Error::Internal("decompress mismatch during profiling".into()));
        }
        let mut ops = OpCount::default();
        if &reconstruct_counted(&back, d, &config, &mut ops)? != *c {
            return Err(Error::Internal("reconstruct mismatch during profiling".into()));
        }
        r_ops += ops.0;
    }
    let f = files as f64;
    Ok(OpProfile {
        n_b,
        n_o,
        transform: t_ops as f64 / f,
        dedup: d_ops as f64 / f,
        decompress_indexed: gi as f64 / f,
        decompress_scan: gs as f64 / f,
        reconstruct: r_ops as f64 / f,
        max_touches,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}
