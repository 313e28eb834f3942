use std::fs;
use std::path::{Path, PathBuf};

use bonsai_core::client::{reconstruct, transform};
use bonsai_core::prng::Seed;
use bonsai_core::{CloudEngine, FileId, SystemConfig};
use bonsai_service::frame::UploadStatus;
use bonsai_service::RemoteClient;
use rand::Rng;

use crate::manifest::{check_k, chunk_bytes, ChunkRef, Manifest};
use crate::store::{read_deviations, write_deviations};
use crate::CliError;

pub fn connect(addr: &str) -> Result<RemoteClient, CliError> {
    RemoteClient::connect(addr).map_err(|e| match e {
        bonsai_service::ProtocolError::Io(source) => CliError::Unreachable { addr: addr.to_string(), source },
        other => CliError::Protocol(other),
    })
}

#[derive(Debug, Clone)]
pub struct UploadOptions {
    /// Defaults to the server's `k`.
    pub k: Option<u8>,
    pub n_o: usize,
    /// Defaults to the server's `n_b`.
    pub n_b: Option<usize>,
    pub t: usize,
}

pub fn manifest_path(store: &Path, name: &str) -> PathBuf {
    store.join(format!("{name}.manifest.json"))
}

/// Fetches the policy, transforms and uploads every chunk of `path`, then
/// writes the deviations and the manifest into `store`.
pub fn upload(addr: &str, path: &Path, store: &Path, opts: &UploadOptions) -> Result<Manifest, CliError> {
    let bytes = fs::read(path)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Usage(format!("{} has no usable file name", path.display())))?
        .to_string();
    let mut client = connect(addr)?;
    let remote = client.policy()?;
    let k = opts.k.unwrap_or(remote.k);
    let n_b = opts.n_b.unwrap_or(remote.n_b);
    if k != remote.k || n_b != remote.n_b {
        return Err(CliError::Usage(format!(
            "server runs k={} n_b={}, requested k={k} n_b={n_b}",
            remote.k, remote.n_b
        )));
    }
    check_k(k)?;
    let config = SystemConfig::new(k, opts.n_o, n_b)?.with_seeds(opts.t)?;
    let policy = remote.policy();
    let (chunks, pad) = chunk_bytes(&bytes, k, opts.n_o)?;

    let mut rng = rand::thread_rng();
    let prefix = u64::from(rng.gen::<u32>()) << 32;
    let mut deviations = Vec::with_capacity(chunks.len());
    let mut refs = Vec::with_capacity(chunks.len());
    for (index, chunk) in chunks.iter().enumerate() {
        let file_id = FileId(prefix | index as u64);
        let seeds = fresh_seeds(&mut rng, opts.t);
        let (outsource, deviation) = transform(chunk, &policy, &seeds, file_id, &config)?;
        match client.upload(file_id, k, &outsource)? {
            UploadStatus::Ok => {}
            status => return Err(CliError::Other(format!("server refused chunk {index}: {status:?}"))),
        }
        deviations.push(deviation);
        refs.push(ChunkRef { file_id: file_id.0, index });
    }

    fs::create_dir_all(store)?;
    let manifest = Manifest {
        deviations: format!("{name}.dev"),
        name,
        byte_len: bytes.len() as u64,
        k,
        n_o: opts.n_o,
        n_b,
        t: opts.t,
        pad_symbols: pad,
        chunks: refs,
    };
    write_deviations(&store.join(&manifest.deviations), &deviations, k)?;
    manifest.save(&manifest_path(store, &manifest.name))?;
    Ok(manifest)
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

/// Rebuilds the file described by the manifest at `manifest_path`. The
/// deviation store defaults to the manifest's directory.
pub fn get(addr: &str, manifest_path: &Path, store: Option<&Path>) -> Result<Vec<u8>, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let store = match store {
        Some(s) => s.to_path_buf(),
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !store.is_dir() {
        return Err(CliError::MissingStore(store.display().to_string()));
    }
    let deviations = read_deviations(&store.join(&manifest.deviations), &manifest)?;
    let config = SystemConfig::new(manifest.k, manifest.n_o, manifest.n_b)
        .and_then(|c| c.with_seeds(manifest.t))
        .map_err(|e| CliError::ManifestMismatch(e.to_string()))?;
    let mut client = connect(addr)?;
    let mut chunks = Vec::with_capacity(deviations.len());
    for d in &deviations {
        let outsource = client
            .get(d.file_id, manifest.k)?
            .ok_or_else(|| CliError::Other(format!("server has no chunk with id {}", d.file_id.0)))?;
        chunks.push(reconstruct(&outsource, d, &config)?);
    }
    manifest.reassemble(&chunks)
}

/// Opens the engine persisted in `store`, or creates one from `config` and
/// persists it there.
pub fn open_or_create(config: SystemConfig, store: Option<&Path>, refresh: Option<u64>) -> Result<CloudEngine, CliError> {
    match store {
        Some(dir) if dir.join("meta.json").exists() => {
            let engine = CloudEngine::open(dir)?;
            let stored = engine.config();
            if (stored.k, stored.n_b, stored.zones_enabled) != (config.k, config.n_b, config.zones_enabled) {
                eprintln!("store {} keeps its own configuration {stored:?}", dir.display());
            }
            Ok(engine)
        }
        Some(dir) => {
            let mut engine = CloudEngine::new(config)?.with_refresh(refresh);
            engine.persist_to(dir)?;
            Ok(engine)
        }
        None => Ok(CloudEngine::new(config)?.with_refresh(refresh)),
    }
}
