//! Cloud pipeline: policy setup, dedup of received outsources and their
//! decompression.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::{check_symbols, FileId, Policy, Symbol, SymbolDistribution, SystemConfig};
use crate::bracket::{change_values_counted, merge_counted, split_counted, BracketTable};
use crate::error::{decode, param, Error, Result};
use crate::forest::{BaseForest, BasePointer};
use crate::huffman::{bits_from_bytes, bits_to_bytes, Bits};
use crate::instrument::OpCount;
use crate::swap::{apply_change_inverse_counted, encode_change, find_swaps_counted, sort_bids_counted, Change};

/// What the cloud keeps per uploaded outsource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRecord {
    pub file_id: FileId,
    pub table_version: u32,
    pub base_pointer: BasePointer,
    pub addendum: Bits,
    pub change: Change,
    pub changed_values: Bits,
}

impl StoredRecord {
    /// `|A| + |C| + |CV| + s_fid + s_p`.
    pub fn storage_bits(&self, config: &SystemConfig) -> u64 {
        self.addendum.len() as u64
            + self.change.bit_len()
            + self.changed_values.len() as u64
            + u64::from(config.s_fid)
            + u64::from(config.s_p)
    }

    /// Log layout: `file_id u64, table_version u32, base_pointer u64`, then
    /// A and CV as `u32 bit length + bytes` and C as `u32 byte length +
    /// change wire bytes`, in the order A, C, CV. All little endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.file_id.0.to_le_bytes());
        out.extend_from_slice(&self.table_version.to_le_bytes());
        out.extend_from_slice(&self.base_pointer.0.to_le_bytes());
        out.extend_from_slice(&(self.addendum.len() as u32).to_le_bytes());
        out.extend_from_slice(&bits_to_bytes(&self.addendum));
        let change = self.change.to_bytes();
        out.extend_from_slice(&(change.len() as u32).to_le_bytes());
        out.extend_from_slice(&change);
        out.extend_from_slice(&(self.changed_values.len() as u32).to_le_bytes());
        out.extend_from_slice(&bits_to_bytes(&self.changed_values));
        out
    }

    pub fn decode(bytes: &[u8], n_b: usize) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        let file_id = FileId(r.u64()?);
        let table_version = r.u32()?;
        let base_pointer = BasePointer(r.u64()?);
        let a_len = r.u32()? as usize;
        let addendum = bits_from_bytes(r.take(a_len.div_ceil(8))?, a_len)?;
        let c_len = r.u32()? as usize;
        let change = Change::from_bytes(r.take(c_len)?, n_b)?;
        let cv_len = r.u32()? as usize;
        let changed_values = bits_from_bytes(r.take(cv_len.div_ceil(8))?, cv_len)?;
        let rec = StoredRecord { file_id, table_version, base_pointer, addendum, change, changed_values };
        Ok((rec, r.pos))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| decode("truncated record"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Running storage totals for the metrics module.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudTotals {
    pub records: u64,
    pub addendum_bits: u64,
    pub change_bits: u64,
    pub changed_value_bits: u64,
    pub swaps: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: SystemConfig,
    histogram: Vec<u64>,
    policy_histogram: Vec<u64>,
    versions: Vec<Vec<u64>>,
    refresh_every: Option<u64>,
    uploads_since_setup: u64,
}

/// Default number of uploads between automatic policy refreshes.
pub const DEFAULT_REFRESH: u64 = 10_000;

const RECORD_LOG: &str = "records.log";
const FOREST_FILE: &str = "forest.bin";
const META_FILE: &str = "meta.json";

/// Cloud state. `dedup` and `setup` need `&mut self`, `decompress` only
/// `&self`, so an `RwLock` around the engine gives exclusive writers and
/// shared readers.
#[derive(Debug)]
pub struct CloudEngine {
    config: SystemConfig,
    forest: BaseForest,
    records: HashMap<FileId, StoredRecord>,
    histogram: Vec<u64>,
    policy_histogram: Vec<u64>,
    tables: Vec<BracketTable>,
    versions: Vec<SymbolDistribution>,
    totals: CloudTotals,
    refresh_every: Option<u64>,
    uploads_since_setup: u64,
    log: Option<BufWriter<File>>,
}

impl CloudEngine {
    pub fn new(config: SystemConfig) -> Result<Self> {
        config.validate()?;
        let n = config.alphabet_size();
        let mut engine = CloudEngine {
            config,
            forest: BaseForest::new(),
            records: HashMap::new(),
            histogram: vec![0; n],
            policy_histogram: vec![0; n],
            tables: Vec::new(),
            versions: Vec::new(),
            totals: CloudTotals::default(),
            refresh_every: Some(DEFAULT_REFRESH),
            uploads_since_setup: 0,
            log: None,
        };
        engine.setup()?;
        Ok(engine)
    }

    /// Sets the automatic refresh cadence; `None` refreshes only on explicit
    /// [`setup`](Self::setup) calls.
    pub fn with_refresh(mut self, every: Option<u64>) -> Self {
        self.refresh_every = every;
        self
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn forest(&self) -> &BaseForest {
        &self.forest
    }

    pub fn records(&self) -> impl Iterator<Item = &StoredRecord> {
        self.records.values()
    }

    pub fn record(&self, id: FileId) -> Option<&StoredRecord> {
        self.records.get(&id)
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn totals(&self) -> CloudTotals {
        self.totals
    }

    /// Raw counts of every received outsource symbol.
    pub fn histogram(&self) -> &[u64] {
        &self.histogram
    }

    /// Histogram snapshot behind the active policy.
    pub fn policy_histogram(&self) -> &[u64] {
        &self.policy_histogram
    }

    pub fn table_version(&self) -> u32 {
        (self.tables.len() - 1) as u32
    }

    pub fn active_table(&self) -> &BracketTable {
        self.tables.last().expect("setup runs in new")
    }

    pub fn table(&self, version: u32) -> Option<&BracketTable> {
        self.tables.get(version as usize)
    }

    pub fn policy(&self) -> Policy {
        Policy::new(self.versions.last().expect("setup runs in new").clone(), self.config.n_b)
    }

    /// Recomputes the policy as the Laplace-smoothed histogram of received
    /// symbols and rebuilds the bracket table. Older table versions stay
    /// available for records encoded under them.
    pub fn setup(&mut self) -> Result<Policy> {
        let dist = SymbolDistribution::laplace(&self.histogram);
        if self.versions.last() != Some(&dist) {
            let table = BracketTable::build(&dist, &self.config)?;
            self.tables.push(table);
            self.versions.push(dist);
        }
        self.policy_histogram.clone_from(&self.histogram);
        self.uploads_since_setup = 0;
        Ok(self.policy())
    }

    pub fn dedup(&mut self, file_id: FileId, outsource: &[Symbol]) -> Result<StoredRecord> {
        let mut ops = OpCount::default();
        self.dedup_counted(file_id, outsource, &mut ops)
    }

    pub fn dedup_counted(&mut self, file_id: FileId, outsource: &[Symbol], ops: &mut OpCount) -> Result<StoredRecord> {
        if outsource.len() != self.config.n_b {
            return Err(param(format!("outsource has {} symbols, expected {}", outsource.len(), self.config.n_b)));
        }
        check_symbols(outsource, self.config.k)?;
        if self.records.contains_key(&file_id) {
            return Err(Error::Conflict(format!("file id {} already stored", file_id.0)));
        }
        let version = self.table_version();
        let table = self.active_table();
        let (homogenized, changed_values) = if table.zones_enabled() {
            change_values_counted(outsource, table, ops)?
        } else {
            (outsource.to_vec(), Bits::new())
        };
        let (bids, addendum) = split_counted(&homogenized, table, ops)?;
        let base = sort_bids_counted(&bids, ops);
        let swaps = find_swaps_counted(&bids, &base, ops)?;
        let change = encode_change(&swaps, bids.len())?;
        ops.add(swaps.len() as u64 + bids.len() as u64);
        let (base_pointer, _) = self.forest.insert_counted(&base, ops)?;

        let record = StoredRecord { file_id, table_version: version, base_pointer, addendum, change, changed_values };
        for &s in outsource {
            self.histogram[usize::from(s)] += 1;
        }
        self.totals.records += 1;
        self.totals.addendum_bits += record.addendum.len() as u64;
        self.totals.change_bits += record.change.bit_len();
        self.totals.changed_value_bits += record.changed_values.len() as u64;
        self.totals.swaps += record.change.swap_count() as u64;
        if let Some(log) = self.log.as_mut() {
            log.write_all(&record.encode())?;
        }
        self.records.insert(file_id, record.clone());
        self.uploads_since_setup += 1;
        if self.refresh_every.is_some_and(|n| self.uploads_since_setup >= n) {
            self.setup()?;
        }
        Ok(record)
    }

    pub fn decompress(&self, file_id: FileId) -> Result<Vec<Symbol>> {
        let mut ops = OpCount::default();
        self.decompress_counted(file_id, false, &mut ops)
    }

    /// Decompresses a record. With `scan_bases` the base is located by a
    /// linear scan over stored leaves instead of the pointer index.
    pub fn decompress_counted(&self, file_id: FileId, scan_bases: bool, ops: &mut OpCount) -> Result<Vec<Symbol>> {
        let record = self
            .records
            .get(&file_id)
            .ok_or_else(|| Error::NotFound(format!("file id {}", file_id.0)))?;
        let table = self
            .table(record.table_version)
            .ok_or_else(|| Error::Internal(format!("table version {} missing", record.table_version)))?;
        let base = if scan_bases {
            self.forest.get_base_by_scan(record.base_pointer, ops)?
        } else {
            self.forest.get_base_counted(record.base_pointer, ops)?
        };
        let bids = apply_change_inverse_counted(&base, &record.change, ops)?;
        merge_counted(&bids, &record.addendum, &record.changed_values, table, ops)
    }

    /// Bits held by the forest under the node/leaf storage model.
    pub fn forest_bits(&self) -> u64 {
        self.forest.size_bits(self.active_table().bid_width(), self.config.s_p)
    }

    /// Writes a full snapshot to `dir` and starts appending new records to
    /// its log.
    pub fn persist_to(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut log = BufWriter::new(File::create(dir.join(RECORD_LOG))?);
        let mut ids: Vec<&FileId> = self.records.keys().collect();
        ids.sort();
        for id in ids {
            log.write_all(&self.records[id].encode())?;
        }
        log.flush()?;
        self.log = Some(BufWriter::new(OpenOptions::new().append(true).open(dir.join(RECORD_LOG))?));
        self.checkpoint(dir)
    }

    /// Rewrites the forest snapshot and metadata; flushes the record log.
    pub fn checkpoint(&mut self, dir: &Path) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            log.flush()?;
        }
        fs::write(dir.join(FOREST_FILE), self.forest.to_bytes())?;
        let meta = Meta {
            config: self.config.clone(),
            histogram: self.histogram.clone(),
            policy_histogram: self.policy_histogram.clone(),
            versions: self.versions.iter().map(|d| d.weights().to_vec()).collect(),
            refresh_every: self.refresh_every,
            uploads_since_setup: self.uploads_since_setup,
        };
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join(META_FILE), json)?;
        Ok(())
    }

    /// Restores a snapshot written by [`persist_to`](Self::persist_to) and
    /// keeps appending to its log. Log records whose base is not in the
    /// forest snapshot are dropped.
    pub fn open(dir: &Path) -> Result<Self> {
        let meta: Meta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)
            .map_err(|e| decode(format!("meta: {e}")))?;
        meta.config.validate()?;
        let forest = BaseForest::from_bytes(&fs::read(dir.join(FOREST_FILE))?)?;
        let mut versions = Vec::new();
        let mut tables = Vec::new();
        for w in meta.versions {
            let dist = SymbolDistribution::from_weights(w)?;
            tables.push(BracketTable::build(&dist, &meta.config)?);
            versions.push(dist);
        }
        if versions.is_empty() {
            return Err(decode("snapshot has no policy versions"));
        }
        let mut engine = CloudEngine {
            config: meta.config,
            forest,
            records: HashMap::new(),
            histogram: meta.histogram,
            policy_histogram: meta.policy_histogram,
            tables,
            versions,
            totals: CloudTotals::default(),
            refresh_every: meta.refresh_every,
            uploads_since_setup: meta.uploads_since_setup,
            log: None,
        };
        let mut bytes = Vec::new();
        File::open(dir.join(RECORD_LOG))?.read_to_end(&mut bytes)?;
        let mut rest = &bytes[..];
        while !rest.is_empty() {
            let (rec, used) = StoredRecord::decode(rest, engine.config.n_b)?;
            rest = &rest[used..];
            if (rec.base_pointer.0 as usize) >= engine.forest.leaf_count()
                || rec.table_version as usize >= engine.tables.len()
            {
                continue;
            }
            engine.totals.records += 1;
            engine.totals.addendum_bits += rec.addendum.len() as u64;
            engine.totals.change_bits += rec.change.bit_len();
            engine.totals.changed_value_bits += rec.changed_values.len() as u64;
            engine.totals.swaps += rec.change.swap_count() as u64;
            engine.records.insert(rec.file_id, rec);
        }
        engine.log = Some(BufWriter::new(OpenOptions::new().append(true).open(dir.join(RECORD_LOG))?));
        Ok(engine)
    }
}
