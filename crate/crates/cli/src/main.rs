use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;

use bonsai_cli::commands::{self, UploadOptions};
use bonsai_cli::CliError;
use bonsai_core::corpus::MarkovSource;
use bonsai_core::engine::DEFAULT_REFRESH;
use bonsai_core::experiment::{self, chunks_of, write_csv};
use bonsai_core::privacy::Prior;
use bonsai_core::SystemConfig;
use bonsai_service::{Server, ServerOptions, ADDR_ENV, DEFAULT_ADDR};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "bonsai", version, about = "Generalized deduplication client, server and experiments")]
struct Cli {
    /// Server address.
    #[arg(long, env = ADDR_ENV, default_value = DEFAULT_ADDR, global = true)]
    addr: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct SystemArgs {
    /// Bits per symbol.
    #[arg(long, default_value_t = 8)]
    k: u8,
    /// Symbols per chunk.
    #[arg(long = "n-o", default_value_t = 256)]
    n_o: usize,
    /// Symbols per outsource.
    #[arg(long = "n-b", default_value_t = 241)]
    n_b: usize,
    /// Candidate seeds per chunk.
    #[arg(long, default_value_t = 4)]
    seeds: usize,
    /// Value zones in the bracket table.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    zones: Toggle,
    /// Policy refresh cadence in uploads; 0 refreshes never.
    #[arg(long, default_value_t = DEFAULT_REFRESH)]
    refresh: u64,
}

impl SystemArgs {
    fn config(&self) -> Result<SystemConfig, CliError> {
        Ok(SystemConfig::new(self.k, self.n_o, self.n_b)?
            .with_seeds(self.seeds)?
            .with_zones(matches!(self.zones, Toggle::On))?)
    }

    fn refresh(&self) -> Option<u64> {
        (self.refresh > 0).then_some(self.refresh)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, transform and upload a file; keeps deviations and a manifest in the store.
    Upload {
        file: PathBuf,
        /// Local deviation store.
        #[arg(long, default_value = "bonsai-store")]
        store: PathBuf,
        /// Bits per symbol (default: the server's).
        #[arg(long)]
        k: Option<u8>,
        #[arg(long = "n-o", default_value_t = 256)]
        n_o: usize,
        /// Symbols per outsource (default: the server's).
        #[arg(long = "n-b")]
        n_b: Option<usize>,
        #[arg(long, default_value_t = 4)]
        seeds: usize,
    },
    /// Fetch and reassemble a file from its manifest.
    Get {
        manifest: PathBuf,
        /// Deviation store (default: the manifest's directory).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Output path (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the cloud server.
    Serve {
        #[command(flatten)]
        system: SystemArgs,
        /// Persist the engine in this directory, reopening it if present.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Checkpoint every this many uploads; 0 only on shutdown.
        #[arg(long, default_value_t = 1000)]
        checkpoint_every: u64,
    },
    /// Run an experiment sweep and emit CSV.
    Experiment {
        #[command(subcommand)]
        kind: Experiment,
        /// CSV output (default: stdout).
        #[arg(long, global = true)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// Read this file instead of generating a synthetic corpus.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic corpus size in bytes.
    #[arg(long, default_value_t = 16 << 20)]
    bytes: usize,
    /// Geometric decay of each Markov row; 1 is uniform noise.
    #[arg(long, default_value_t = 0.3)]
    decay: f64,
    /// Zipf skew of symbol popularity.
    #[arg(long, default_value_t = 1.5)]
    skew: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl CorpusArgs {
    fn load(&self) -> Result<Vec<u8>, CliError> {
        match &self.input {
            Some(p) => Ok(fs::read(p)?),
            None => Ok(MarkovSource::with_skew(8, self.decay, self.skew, self.seed)?.generate(self.bytes, self.seed + 1)),
        }
    }
}

#[derive(Subcommand)]
enum Experiment {
    /// Compression components over a range of deletion counts.
    Ndel {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 8)]
        k: u8,
        #[arg(long = "n-o", default_value_t = 256)]
        n_o: usize,
        #[arg(long, default_value_t = 1)]
        from: usize,
        #[arg(long, default_value_t = 19)]
        to: usize,
        #[arg(long, default_value_t = 4)]
        seeds: usize,
        #[arg(long, value_enum, default_value_t = Toggle::On)]
        zones: Toggle,
        #[arg(long, default_value_t = DEFAULT_REFRESH)]
        refresh: u64,
    },
    /// The same bytes at several symbol sizes.
    K {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        ks: Vec<u8>,
        #[arg(long, default_value_t = 256)]
        chunk_bytes: usize,
        /// Deleted bits per chunk.
        #[arg(long, default_value_t = 120)]
        del_bits: usize,
        #[arg(long, value_enum, default_value_t = Toggle::On)]
        zones: Toggle,
    },
    /// Closed-form weak-adversary lines.
    Weak {
        #[arg(long, default_value_t = 8)]
        k: u8,
        #[arg(long = "n-o", default_value_t = 256)]
        n_o: usize,
        #[arg(long, default_value_t = 0)]
        from: usize,
        #[arg(long, default_value_t = 19)]
        to: usize,
    },
    /// Toy-scale strong adversary with a uniform prior.
    Strong {
        #[arg(long, default_value_t = 2)]
        k: u8,
        #[arg(long = "n-o", default_value_t = 8)]
        n_o: usize,
        #[arg(long = "n-b", default_value_t = 4)]
        n_b: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// The adversary knows the deleted positions.
        #[arg(long)]
        broken: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256")]
        g: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Instrumented operation counts over outsource lengths.
    Ops {
        #[arg(long, default_value_t = 4)]
        k: u8,
        #[arg(long = "n-b", value_delimiter = ',', default_value = "64,256,1024,4096")]
        n_b: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        files: usize,
        #[arg(long, default_value_t = 200)]
        stored_bases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bonsai: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Upload { file, store, k, n_o, n_b, seeds } => {
            let m = commands::upload(&cli.addr, &file, &store, &UploadOptions { k, n_o, n_b, t: seeds })?;
            println!("{}", commands::manifest_path(&store, &m.name).display());
            Ok(())
        }
        Command::Get { manifest, store, out } => {
            let bytes = commands::get(&cli.addr, &manifest, store.as_deref())?;
            match out {
                Some(p) => fs::write(p, bytes)?,
                None => io::stdout().lock().write_all(&bytes)?,
            }
            Ok(())
        }
        Command::Serve { system, store, checkpoint_every } => serve(&cli.addr, &system, store, checkpoint_every),
        Command::Experiment { kind, csv } => {
            let out: Box<dyn Write> = match csv {
                Some(p) => Box::new(File::create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            experiment(kind, out)
        }
    }
}

fn serve(addr: &str, system: &SystemArgs, store: Option<PathBuf>, checkpoint_every: u64) -> Result<(), CliError> {
    let engine = commands::open_or_create(system.config()?, store.as_deref(), system.refresh())?;
    let server = Server::bind(addr, engine, ServerOptions { store, checkpoint_every })?;
    println!("listening on {}", server.local_addr()?);
    io::stdout().flush()?;
    let handle = server.spawn()?;
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| CliError::Other(e.to_string()))?;
    let _ = rx.recv();
    handle.shutdown()?;
    Ok(())
}

fn experiment(kind: Experiment, out: Box<dyn Write>) -> Result<(), CliError> {
    match kind {
        Experiment::Ndel { corpus, k, n_o, from, to, seeds, zones, refresh } => {
            let symbols = experiment::bytes_as_symbols(&corpus.load()?, k)?;
            let chunks = chunks_of(&symbols, n_o);
            let n_dels: Vec<usize> = (from..=to).collect();
            let rows = experiment::ndel_sweep(
                &chunks,
                k,
                &n_dels,
                matches!(zones, Toggle::On),
                seeds,
                corpus.seed,
                (refresh > 0).then_some(refresh),
            )?;
            write_csv(out, &rows)?;
        }
        Experiment::K { corpus, ks, chunk_bytes, del_bits, zones } => {
            let rows = experiment::k_sweep(&corpus.load()?, &ks, chunk_bytes, del_bits, matches!(zones, Toggle::On), corpus.seed)?;
            write_csv(out, &rows)?;
        }
        Experiment::Weak { k, n_o, from, to } => {
            let n_dels: Vec<usize> = (from..=to).collect();
            write_csv(out, &experiment::weak_grid(n_o, k, &n_dels)?)?;
        }
        Experiment::Strong { k, n_o, n_b, trials, broken, g, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chunks: Vec<Vec<u8>> = (0..trials)
                .map(|_| (0..n_o).map(|_| (rng.next_u32() % (1 << k)) as u8).collect())
                .collect();
            let trials = experiment::rank_trials(&chunks, n_b, broken, seed + 1)?;
            write_csv(out, &experiment::strong_grid(&trials, &Prior::Uniform { k }, k, &g)?)?;
        }
        Experiment::Ops { k, n_b, files, stored_bases, seed } => {
            let rows = n_b
                .iter()
                .map(|&n| experiment::op_profile(k, n, files, stored_bases, seed))
                .collect::<Result<Vec<_>, _>>()?;
            write_csv(out, &rows)?;
        }
    }
    Ok(())
}
