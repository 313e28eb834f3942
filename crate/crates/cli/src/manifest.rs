//! Fixed-size chunking of files and the JSON manifest that reassembles them.
//!
//! Bytes become symbols one per byte (`k = 8`) or two per byte, high nibble
//! first (`k = 4`). The last chunk is zero-padded to `n_o` symbols.

use std::fs;
use std::path::Path;

use bonsai_core::alphabet::{pack_symbols, FileId, Symbol};
use bonsai_core::experiment::bytes_as_symbols;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub file_id: u64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub byte_len: u64,
    pub k: u8,
    pub n_o: usize,
    pub n_b: usize,
    pub t: usize,
    /// Zero symbols appended to the final chunk.
    pub pad_symbols: usize,
    pub chunks: Vec<ChunkRef>,
    /// Deviation store file, relative to the store directory.
    pub deviations: String,
}

pub fn check_k(k: u8) -> Result<(), CliError> {
    match k {
        4 | 8 => Ok(()),
        _ => Err(CliError::Usage(format!("file chunking supports k = 4 or 8, got {k}"))),
    }
}

/// Splits `bytes` into padded chunks of `n_o` symbols; returns the chunks
/// and the pad length.
pub fn chunk_bytes(bytes: &[u8], k: u8, n_o: usize) -> Result<(Vec<Vec<Symbol>>, usize), CliError> {
    check_k(k)?;
    if n_o == 0 {
        return Err(CliError::Usage("n_o must be positive".into()));
    }
    let symbols = bytes_as_symbols(bytes, k)?;
    let count = symbols.len().div_ceil(n_o);
    let pad = count * n_o - symbols.len();
    let chunks = symbols
        .chunks(n_o)
        .map(|c| {
            let mut c = c.to_vec();
            c.resize(n_o, 0);
            c
        })
        .collect();
    Ok((chunks, pad))
}

impl Manifest {
    pub fn symbol_count(&self) -> u64 {
        self.byte_len * 8 / u64::from(self.k)
    }

    pub fn file_ids(&self) -> impl Iterator<Item = FileId> + '_ {
        self.chunks.iter().map(|c| FileId(c.file_id))
    }

    /// Checks the manifest's internal consistency.
    pub fn validate(&self) -> Result<(), CliError> {
        let mismatch = |why: String| Err(CliError::ManifestMismatch(why));
        if check_k(self.k).is_err() || self.n_o == 0 || self.n_b == 0 || self.n_b > self.n_o {
            return mismatch(format!("bad configuration k={} n_o={} n_b={}", self.k, self.n_o, self.n_b));
        }
        let symbols = self.symbol_count();
        let expect = symbols.div_ceil(self.n_o as u64);
        if self.chunks.len() as u64 != expect {
            return mismatch(format!("{} chunks listed, {} bytes need {expect}", self.chunks.len(), self.byte_len));
        }
        if expect * self.n_o as u64 - symbols != self.pad_symbols as u64 {
            return mismatch(format!("pad of {} symbols does not fit {} bytes", self.pad_symbols, self.byte_len));
        }
        if let Some((i, c)) = self.chunks.iter().enumerate().find(|(i, c)| c.index != *i) {
            return mismatch(format!("chunk {i} carries index {}", c.index));
        }
        let mut ids: Vec<u64> = self.chunks.iter().map(|c| c.file_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return mismatch("repeated file id".into());
        }
        if self.deviations.is_empty() || Path::new(&self.deviations).components().count() != 1 {
            return mismatch(format!("deviation store name {:?}", self.deviations));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::ManifestMismatch(format!("{}: {e}", path.display())))?;
        let m: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| CliError::ManifestMismatch(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Joins reconstructed chunks, drops the pad and packs back to bytes.
    pub fn reassemble(&self, chunks: &[Vec<Symbol>]) -> Result<Vec<u8>, CliError> {
        if chunks.len() != self.chunks.len() || chunks.iter().any(|c| c.len() != self.n_o) {
            return Err(CliError::ManifestMismatch("reconstructed chunks do not match the manifest".into()));
        }
        let mut symbols: Vec<Symbol> = chunks.concat();
        symbols.truncate(self.symbol_count() as usize);
        let bytes = pack_symbols(&symbols, self.k)?;
        if bytes.len() as u64 != self.byte_len {
            return Err(CliError::ManifestMismatch(format!("rebuilt {} bytes, expected {}", bytes.len(), self.byte_len)));
        }
        Ok(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest_for(bytes: &[u8], k: u8, n_o: usize) -> (Manifest, Vec<Vec<Symbol>>) {
        let (chunks, pad) = chunk_bytes(bytes, k, n_o).unwrap();
        let m = Manifest {
            name: "f".into(),
            byte_len: bytes.len() as u64,
            k,
            n_o,
            n_b: n_o,
            t: 1,
            pad_symbols: pad,
            chunks: (0..chunks.len()).map(|i| ChunkRef { file_id: i as u64, index: i }).collect(),
            deviations: "f.dev".into(),
        };
        (m, chunks)
    }

    #[test]
    fn chunk_counts_and_pads() {
        let (c, pad) = chunk_bytes(&[7u8; 512], 8, 256).unwrap();
        assert_eq!((c.len(), pad), (2, 0));
        let (c, pad) = chunk_bytes(&[7u8], 8, 256).unwrap();
        assert_eq!((c.len(), pad), (1, 255));
        assert_eq!(&c[0][..2], &[7, 0]);
        let (c, pad) = chunk_bytes(&[0xAB], 4, 4).unwrap();
        assert_eq!((c, pad), (vec![vec![0xA, 0xB, 0, 0]], 2));
        let (c, pad) = chunk_bytes(&[], 8, 256).unwrap();
        assert_eq!((c.len(), pad), (0, 0));
        assert!(chunk_bytes(&[1], 6, 4).is_err());
    }

    #[test]
    fn empty_file_manifest_is_valid() {
        let (m, chunks) = manifest_for(&[], 8, 16);
        m.validate().unwrap();
        assert_eq!(m.reassemble(&chunks).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn inconsistent_manifests_are_rejected() {
        let (m, _) = manifest_for(&[1, 2, 3], 8, 2);
        m.validate().unwrap();
        let mut bad = m.clone();
        bad.byte_len = 9;
        assert!(matches!(bad.validate(), Err(CliError::ManifestMismatch(_))));
        let mut bad = m.clone();
        bad.pad_symbols = 0;
        assert!(matches!(bad.validate(), Err(CliError::ManifestMismatch(_))));
        let mut bad = m.clone();
        bad.chunks[1].file_id = 0;
        assert!(matches!(bad.validate(), Err(CliError::ManifestMismatch(_))));
        let mut bad = m;
        bad.deviations = "../x".into();
        assert!(matches!(bad.validate(), Err(CliError::ManifestMismatch(_))));
    }

    proptest! {
        #[test]
        fn reassembly_is_identity(bytes in prop::collection::vec(any::<u8>(), 0..600), n_o in 1usize..300, k4 in any::<bool>()) {
            let k = if k4 { 4 } else { 8 };
            let (m, chunks) = manifest_for(&bytes, k, n_o);
            m.validate().unwrap();
            prop_assert_eq!(m.reassemble(&chunks).unwrap(), bytes);
        }
    }
}
