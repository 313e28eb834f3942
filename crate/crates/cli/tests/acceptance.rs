//! Acceptance suite: one line per criterion, run serially. Exits non-zero if
//! any criterion fails.

use std::collections::{HashMap, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bonsai_core::alphabet::{entropy_bits, pack_symbols, FileId, Symbol, SymbolDistribution, SystemConfig};
use bonsai_core::bracket::BracketTable;
use bonsai_core::client::{reconstruct, transform};
use bonsai_core::corpus::MarkovSource;
use bonsai_core::experiment::{chunks_of, loglog_slope, ndel_sweep, op_profile, rank_trials, OpProfile};
use bonsai_core::forest::BaseForest;
use bonsai_core::huffman::CanonicalCode;
use bonsai_core::privacy::{
    count_embeddings, preimage_count_weak, rank_experiment, strong_posterior, strong_report, weak_report, Prior,
};
use bonsai_core::prng::Seed;
use bonsai_core::CloudEngine;
use bonsai_service::frame::UploadStatus;
use bonsai_service::{RemoteClient, Server, ServerOptions};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail.into())
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.1}s of {}s budget", elapsed.as_secs_f64(), limit.as_secs()))
}

fn seeds(rng: &mut ChaCha8Rng, t: usize) -> Vec<Seed> {
    let mut out: Vec<Seed> = Vec::with_capacity(t);
    while out.len() < t {
        let s = Seed(rng.gen());
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn random_symbols(rng: &mut ChaCha8Rng, n: usize, k: u8) -> Vec<Symbol> {
    (0..n).map(|_| rng.gen_range(0..1u16 << k) as Symbol).collect()
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n_o = 256;
    let mut configs = 0;
    for k in [4u8, 8] {
        for zones in [true, false] {
            for n_del in [0usize, 1, 15] {
                let config = SystemConfig::new(k, n_o, n_o - n_del)?.with_zones(zones)?;
                let mut engine = CloudEngine::new(config.clone())?.with_refresh(Some(2_500));
                let mut policy = engine.policy();
                let mut version = engine.table_version();
                let mut kept = Vec::with_capacity(10_000);
                for i in 0..10_000u64 {
                    if engine.table_version() != version {
                        policy = engine.policy();
                        version = engine.table_version();
                    }
                    let chunk = random_symbols(&mut rng, n_o, k);
                    let (o, d) = transform(&chunk, &policy, &seeds(&mut rng, config.t), FileId(i), &config)?;
                    engine.dedup(d.file_id, &o)?;
                    kept.push((chunk, d));
                }
                for (chunk, d) in &kept {
                    let back = reconstruct(&engine.decompress(d.file_id)?, d, &config)?;
                    if &back != chunk {
                        return Err(format!("k={k} zones={zones} n_del={n_del}: file {} differs", d.file_id.0).into());
                    }
                }
                configs += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(120), format!("{configs} configurations x 10^4 chunks exact"))
}

fn dedup_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let config = SystemConfig::new(8, 256, 241)?;
    let mut engine = CloudEngine::new(config.clone())?.with_refresh(None);
    let policy = engine.policy();
    // One client seed set for every chunk, so identical chunks transform
    // identically.
    let client_seeds = seeds(&mut rng, config.t);
    let distinct: Vec<Vec<Symbol>> = (0..600).map(|_| random_symbols(&mut rng, 256, 8)).collect();
    let mut uploads: Vec<&Vec<Symbol>> = distinct.iter().collect();
    uploads.extend((0..400).map(|_| &distinct[rng.gen_range(0..600)]));
    uploads[1..].shuffle(&mut rng);
    let mut seen = HashSet::new();
    for (i, chunk) in uploads.iter().enumerate() {
        let (o, d) = transform(chunk, &policy, &client_seeds, FileId(i as u64), &config)?;
        let before = engine.forest().node_count();
        engine.dedup(d.file_id, &o)?;
        if !seen.insert((*chunk).clone()) && engine.forest().node_count() != before {
            return Err(format!("duplicate upload {i} grew the forest").into());
        }
    }
    let leaves = engine.forest().leaf_count();

    let mut forest = BaseForest::new();
    let bases: Vec<Vec<u8>> = (0..600)
        .map(|_| {
            let mut b: Vec<u8> = (0..64).map(|_| rng.gen_range(0..8)).collect();
            b.sort_unstable();
            b
        })
        .collect();
    let mut pointers = HashMap::new();
    for b in &bases {
        let (p, _) = forest.insert(b)?;
        pointers.insert(b.clone(), p);
    }
    let nodes = forest.node_count();
    for b in &bases {
        let (p, fresh) = forest.insert(b)?;
        if fresh || p != pointers[b] || forest.node_count() != nodes {
            return Err("second insert of a base changed the forest".into());
        }
    }
    check(leaves == 600, format!("{leaves} leaves from 1000 uploads with 400 duplicates; re-inserts keep {nodes} nodes"))
}

fn huffman_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..100 {
        let n = rng.gen_range(2..=256);
        let spread = rng.gen_range(1..40);
        let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=1u64 << spread)).collect();
        let code = CanonicalCode::from_weights(&weights)?;
        let mut words: Vec<String> = (0..n).map(|i| code.codeword(i)).collect();
        words.sort();
        if words.windows(2).any(|w| w[1].starts_with(&w[0])) {
            return Err(format!("trial {trial}: not prefix-free").into());
        }
        let max = *code.lengths().iter().max().unwrap();
        let kraft: u128 = code.lengths().iter().map(|&l| 1u128 << (max - l)).sum();
        if kraft != 1u128 << max {
            return Err(format!("trial {trial}: Kraft sum {kraft}/2^{max}").into());
        }
        let total: u64 = weights.iter().sum();
        let h = entropy_bits(weights.iter().map(|&w| w as f64 / total as f64));
        let avg = code.expected_length(&weights);
        if !(avg >= h - 1e-9 && avg < h + 1.0) {
            return Err(format!("trial {trial}: expected length {avg} vs entropy {h}").into());
        }
    }
    Ok("100 distributions prefix-free, Kraft sum exactly 1, H <= L < H + 1".into())
}

fn worked_table() -> Outcome {
    // Symbol probabilities over 192nds for the 16-symbol worked example.
    let dist = SymbolDistribution::from_weights(vec![36, 12, 12, 8, 12, 8, 8, 9, 12, 8, 8, 9, 8, 9, 9, 24])?;
    let table = BracketTable::build_for(&dist, 4, false)?;
    let total: u64 = table.row_weights().iter().sum();
    let want = [(7u64, 16u64), (7, 32), (34, 192), (1, 6)];
    let rows_ok = table.row_weights().len() == 4
        && table.row_weights().iter().zip(want).all(|(&w, (num, den))| u128::from(w) * u128::from(den) == u128::from(num) * u128::from(total));
    let lengths = table.sid_code().lengths().to_vec();
    check(
        rows_ok && lengths == [1, 2, 3, 3],
        format!("row sums {:?}/{total}, row code lengths {lengths:?}", table.row_weights()),
    )
}

fn preimage_oracle() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    for k in [1u8, 2] {
        let q = 1usize << k;
        for n_o in 1..=8usize {
            for n_b in 0..n_o {
                // counts[o] = number of length-n_o strings containing o.
                let mut counts = vec![0u64; q.pow(n_b as u32)];
                let mut subs = HashSet::new();
                for x in 0..q.pow(n_o as u32) {
                    let f: Vec<usize> = (0..n_o).map(|i| x / q.pow(i as u32) % q).collect();
                    subs.clear();
                    for mask in 0u32..1 << n_o {
                        if mask.count_ones() as usize == n_b {
                            let o = (0..n_o).filter(|i| mask >> i & 1 == 1).fold(0usize, |acc, i| acc * q + f[i]);
                            subs.insert(o);
                        }
                    }
                    for &o in &subs {
                        counts[o] += 1;
                    }
                }
                let formula = preimage_count_weak(n_o, n_b, k)?;
                if let Some(o) = counts.iter().position(|&c| BigUint::from(c) != formula) {
                    return Err(format!("k={k} n_o={n_o} n_b={n_b}: string {o} has {} preimages, formula {formula}", counts[o]).into());
                }
                cases += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(60), format!("{cases} (k, n_o, n_b) cases match over every outsource"))
}

fn embedding_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1000 {
        let n = rng.gen_range(0..=10);
        let f: Vec<Symbol> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let o: Vec<Symbol> = if rng.gen_bool(0.5) {
            f.iter().copied().filter(|_| rng.gen_bool(0.6)).collect()
        } else {
            (0..rng.gen_range(0..=n + 1)).map(|_| rng.gen_range(0..3)).collect()
        };
        let brute = (0u32..1 << n)
            .filter(|m| {
                m.count_ones() as usize == o.len()
                    && (0..n).filter(|i| m >> i & 1 == 1).map(|i| f[i]).eq(o.iter().copied())
            })
            .count();
        if count_embeddings(&f, &o) != BigUint::from(brute) {
            return Err(format!("trial {trial}: f={f:?} o={o:?} brute {brute}").into());
        }
    }
    Ok("1000 random pairs match exhaustive enumeration".into())
}

fn closed_form_lines() -> Outcome {
    for n_del in 0..=19usize {
        let r = weak_report(256, 256 - n_del, 8, true)?;
        if r.uncertainty_bits != (8 * n_del) as f64 || r.leakage != (256 - n_del) as f64 / 256.0 {
            return Err(format!("n_del={n_del}: {} bits, leakage {}", r.uncertainty_bits, r.leakage).into());
        }
    }
    let r = weak_report(256, 241, 8, true)?;
    check(
        r.uncertainty_bits == 120.0 && r.leakage == 241.0 / 256.0 && (r.leakage * 100.0).round() == 94.0,
        format!("15 deletions at k=8: {} bits; leakage at n_o=256, n_b=241: {}", r.uncertainty_bits, r.leakage),
    )
}

fn posterior_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = 0;
    for k in [1u8, 2] {
        for n_del in 0..=8usize {
            for n_b in [1usize, 3] {
                let n_o = n_b + n_del;
                let f = random_symbols(&mut rng, n_o, k);
                let positions: Vec<usize> = rand::seq::index::sample(&mut rng, n_o, n_del).into_vec();
                let o: Vec<Symbol> = (0..n_o).filter(|i| !positions.contains(i)).map(|i| f[i]).collect();
                let post = strong_posterior(&o, &Prior::Uniform { k }, n_o, Some(&positions))?;
                let want = f64::from(k) * n_del as f64;
                if post.entropy() != want {
                    return Err(format!("k={k} n_o={n_o} n_b={n_b}: entropy {} != {want}", post.entropy()).into());
                }
                exact += 1;
            }
        }
    }
    let markov = MarkovSource::new(2, 0.5, 8)?.prior();
    let mut points = 0;
    while points < 50 {
        let k = if points % 3 == 0 { 1 } else { 2 };
        let prior = if k == 2 && points % 2 == 0 { markov.clone() } else { Prior::Uniform { k } };
        let n_o = rng.gen_range(2..=8usize);
        let n_b = rng.gen_range(1..n_o);
        let broken = points % 4 < 2;
        let f = random_symbols(&mut rng, n_o, k);
        let positions: Vec<usize> = rand::seq::index::sample(&mut rng, n_o, n_o - n_b).into_vec();
        let o: Vec<Symbol> = (0..n_o).filter(|i| !positions.contains(i)).map(|i| f[i]).collect();
        let strong = strong_report(&o, &prior, n_o, broken.then_some(&positions[..]))?;
        let weak = weak_report(n_o, n_b, k, broken)?;
        if strong.uncertainty_bits > weak.uncertainty_bits + 1e-9 {
            return Err(format!(
                "k={k} n_o={n_o} n_b={n_b} broken={broken}: strong {} > weak {}",
                strong.uncertainty_bits, weak.uncertainty_bits
            ).into());
        }
        points += 1;
    }
    Ok(format!("{exact} toy posteriors exactly k*n_del bits; strong <= weak on {points} grid points"))
}

fn tcr_shape() -> Outcome {
    let start = Instant::now();
    let corpus = MarkovSource::with_skew(8, 0.3, 1.5, 1)?.generate(16 << 20, 2);
    let chunks = chunks_of(&corpus, 256);
    let n_dels: Vec<usize> = (1..=19).collect();
    let rows = ndel_sweep(&chunks, 8, &n_dels, true, 4, 3, Some(10_000))?;
    let tcr: Vec<f64> = rows.iter().map(|r| r.tcr_measured).collect();
    let min_at = (0..tcr.len()).min_by(|&a, &b| tcr[a].total_cmp(&tcr[b])).unwrap();
    let max_rise = tcr[..=min_at].windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    let tail = &tcr[min_at..];
    let spread = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
    let detail = format!(
        "TCR {:.4} (n_del=1) .. {:.4} (n_del=19), minimum at n_del={}, largest rise before it {max_rise:.4}, spread after {spread:.4}",
        tcr[0],
        tcr[tcr.len() - 1],
        n_dels[min_at]
    );
    let shaped = check(max_rise <= 0.02 && spread < 0.01, detail)?;
    within(start.elapsed(), Duration::from_secs(300), shaped)
}

fn complexity() -> Outcome {
    let start = Instant::now();
    let n_bs = [64usize, 256, 1024, 4096];
    let stored_bases = 200;
    let files = 200;
    let profiles: Vec<OpProfile> =
        n_bs.iter().map(|&n| op_profile(4, n, files, stored_bases, 10)).collect::<Result<_, _>>()?;
    let xs: Vec<f64> = n_bs.iter().map(|&n| n as f64).collect();
    let alphabet = 16.0;
    let t = 4.0;
    let slope = |f: &dyn Fn(&OpProfile) -> f64| loglog_slope(&xs, &profiles.iter().map(f).collect::<Vec<_>>());
    let bases = (stored_bases + files) as f64;
    let checks: [(&str, f64, f64); 4] = [
        ("transform", slope(&|p| p.transform), slope(&|p| t * p.n_o as f64)),
        ("dedup", slope(&|p| p.dedup), slope(&|p| p.n_b as f64 * ((p.n_b as f64).log2() + alphabet))),
        ("decompress", slope(&|p| p.decompress_scan), slope(&|p| bases + p.n_b as f64 * alphabet)),
        ("reconstruct", slope(&|p| p.reconstruct), slope(&|p| p.n_o as f64)),
    ];
    let touches_ok = profiles.iter().all(|p| p.max_touches <= p.n_b as u64);
    let mut ok = touches_ok;
    let mut parts = Vec::new();
    for (name, measured, model) in checks {
        ok &= (measured / model - 1.0).abs() <= 0.15;
        parts.push(format!("{name} {measured:.3} vs {model:.3}"));
    }
    let shaped = check(ok, format!("k=4 slopes: {}; touches <= n_b: {touches_ok}", parts.join(", ")))?;
    within(start.elapsed(), Duration::from_secs(180), shaped)
}

fn wire_equivalence() -> Outcome {
    let config = SystemConfig::new(8, 256, 241)?;
    let server = Server::bind("127.0.0.1:0", CloudEngine::new(config.clone())?.with_refresh(Some(250)), ServerOptions::default())
        ?
        .spawn()
        ?;
    let mut local = CloudEngine::new(config.clone())?.with_refresh(Some(250));
    let mut client = RemoteClient::connect(server.addr())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let source = MarkovSource::new(8, 0.5, 11)?;
    for i in 0..1000u64 {
        let remote_policy = client.policy()?;
        if remote_policy.counts != local.policy_histogram() || remote_policy.policy() != local.policy() {
            return Err(format!("policy differs before upload {i}").into());
        }
        let chunk = source.generate(256, i);
        let (o, d) = transform(&chunk, &remote_policy.policy(), &seeds(&mut rng, config.t), FileId(i), &config)?;
        let status = client.upload(d.file_id, 8, &o)?;
        let local_record = local.dedup(d.file_id, &o)?;
        let fetched = client.get(d.file_id, 8)?;
        let remote_record = server.engine().read().unwrap().record(d.file_id).cloned();
        if status != UploadStatus::Ok
            || fetched.as_ref().map(|f| pack_symbols(f, 8)).transpose()? != Some(pack_symbols(&local.decompress(d.file_id)?, 8)?)
            || remote_record.map(|r| r.encode()) != Some(local_record.encode())
        {
            return Err(format!("upload/get pair {i} differs from the in-process engine").into());
        }
    }
    let remote_nodes = server.engine().read().unwrap().forest().node_count();
    check(
        remote_nodes == local.forest().node_count(),
        format!("1000 pairs byte-identical, {} table versions, {remote_nodes} forest nodes on both sides", local.table_version() + 1),
    )
}

fn rank_analog() -> Outcome {
    let (k, n_o, n_b, trials) = (2u8, 8usize, 4usize, 10_000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let chunks: Vec<Vec<Symbol>> = (0..trials).map(|_| random_symbols(&mut rng, n_o, k)).collect();
    let trial_set = rank_trials(&chunks, n_b, true, 13)?;
    let g_grid = [1usize, 4, 16, 64, 128, 192, 256];
    let curve = rank_experiment(&trial_set, &Prior::Uniform { k }, &g_grid)?;
    let m = 1usize << (usize::from(k) * (n_o - n_b));
    if curve.candidates.iter().any(|&c| c != m) || m > 1 << 12 {
        return Err(format!("candidate sets differ from m={m}").into());
    }
    let mut worst = 0.0f64;
    for (&g, &frac) in curve.g.iter().zip(&curve.fraction) {
        let p = g as f64 / m as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let z = if sigma == 0.0 { if frac == p { 0.0 } else { f64::INFINITY } } else { (frac - p).abs() / sigma };
        worst = worst.max(z);
    }
    check(worst <= 3.0, format!("m={m}, {trials} trials, worst deviation {worst:.2} sigma over g={g_grid:?}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("end-to-end round trip", round_trip),
        ("deduplication correctness", dedup_correctness),
        ("Huffman validity", huffman_validity),
        ("worked bracket table", worked_table),
        ("preimage count oracle", preimage_oracle),
        ("subsequence DP oracle", embedding_oracle),
        ("closed-form privacy lines", closed_form_lines),
        ("posterior sanity", posterior_sanity),
        ("TCR shape over deletions", tcr_shape),
        ("complexity slopes", complexity),
        ("wire equivalence", wire_equivalence),
        ("top-g rank analog", rank_analog),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
