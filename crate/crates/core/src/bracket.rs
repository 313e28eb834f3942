//! Zoned bracket table and the cloud-side value codec built on it.
//!
//! Every symbol owns one slot `(zone, row, col)`. The column is the bracket id
//! (Bid) that goes into the base, the row is Huffman coded into the addendum
//! (Sid) and the zone is Huffman coded into the changed-values string (Vid).
//! With zones enabled the table is four `R x R` zones with `R = 2^(k/2-1)`,
//! filled top-left, top-right, bottom-left, bottom-right; otherwise it is a
//! single `2^(k/2) x 2^(k/2)` grid.

use bitvec::prelude::*;

use crate::alphabet::{Symbol, SymbolDistribution, SystemConfig};
use crate::error::{param, Error, Result};
use crate::huffman::{Bits, CanonicalCode};
use crate::instrument::OpCount;

pub const ZONES: usize = 4;

/// Position of a symbol in the bracket table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub zone: u8,
    pub row: u8,
    pub col: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BracketTable {
    k: u8,
    zones_enabled: bool,
    /// Rows (= columns) per zone.
    side: usize,
    slots: Vec<Slot>,
    /// `grid[(zone * side + row) * side + col]` is the symbol in that slot.
    grid: Vec<Symbol>,
    row_weights: Vec<u64>,
    zone_weights: Vec<u64>,
    sid: CanonicalCode,
    vid: Option<CanonicalCode>,
}

fn geometry(k: u8, zones: bool) -> Result<usize> {
    if !(2..=8).contains(&k) || !k.is_multiple_of(2) {
        return Err(param(format!("bracket tables need even k in 2..=8, got {k}")));
    }
    let half = usize::from(k / 2);
    Ok(if zones { 1 << (half - 1) } else { 1 << half })
}

impl BracketTable {
    /// Builds the table for `dist`: symbols by descending probability (ties by
    /// value) are placed rows-first zone by zone; rows and zones are then
    /// Huffman coded by their summed probability.
    pub fn build(dist: &SymbolDistribution, config: &SystemConfig) -> Result<Self> {
        Self::build_for(dist, config.k, config.zones_enabled)
    }

    pub fn build_for(dist: &SymbolDistribution, k: u8, zones_enabled: bool) -> Result<Self> {
        let side = geometry(k, zones_enabled)?;
        let n = 1usize << k;
        if dist.len() != n {
            return Err(param(format!("distribution has {} entries, alphabet has {n}", dist.len())));
        }
        let w = dist.weights();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| w[b].cmp(&w[a]).then(a.cmp(&b)));
        let per_zone = side * side;
        let mut slots = vec![Slot { zone: 0, row: 0, col: 0 }; n];
        for (rank, &sym) in order.iter().enumerate() {
            let within = rank % per_zone;
            slots[sym] = Slot {
                zone: (rank / per_zone) as u8,
                row: (within / side) as u8,
                col: (within % side) as u8,
            };
        }
        Self::assemble(k, zones_enabled, side, slots, w)
    }

    /// The fixed layout where a symbol's high `k/2` bits pick the column and
    /// the low `k/2` bits pick the row; zones split that grid into quadrants.
    /// Codes are built from a uniform distribution.
    pub fn natural(k: u8, zones_enabled: bool) -> Result<Self> {
        let side = geometry(k, zones_enabled)?;
        let half = u32::from(k / 2);
        let n = 1usize << k;
        let low = (1usize << half) - 1;
        let slots = (0..n)
            .map(|s| {
                let (col, row) = (s >> half, s & low);
                if zones_enabled {
                    let top = half - 1;
                    Slot {
                        zone: (2 * (row >> top) + (col >> top)) as u8,
                        row: (row & (side - 1)) as u8,
                        col: (col & (side - 1)) as u8,
                    }
                } else {
                    Slot { zone: 0, row: row as u8, col: col as u8 }
                }
            })
            .collect();
        Self::assemble(k, zones_enabled, side, slots, &vec![1; n])
    }

    fn assemble(k: u8, zones_enabled: bool, side: usize, slots: Vec<Slot>, weights: &[u64]) -> Result<Self> {
        let zone_count = if zones_enabled { ZONES } else { 1 };
        let mut grid = vec![Symbol::MAX; zone_count * side * side];
        let mut row_weights = vec![0u64; side];
        let mut zone_weights = vec![0u64; zone_count];
        for (sym, slot) in slots.iter().enumerate() {
            let idx = (usize::from(slot.zone) * side + usize::from(slot.row)) * side + usize::from(slot.col);
            if grid[idx] != Symbol::MAX {
                return Err(Error::Internal(format!("slot {slot:?} assigned twice")));
            }
            grid[idx] = sym as Symbol;
            row_weights[usize::from(slot.row)] += weights[sym];
            zone_weights[usize::from(slot.zone)] += weights[sym];
        }
        // Code from weights; an all-zero vector cannot happen because the
        // distribution has positive total.
        let sid = CanonicalCode::from_weights(&row_weights)?;
        let vid = if zones_enabled { Some(CanonicalCode::from_weights(&zone_weights)?) } else { None };
        Ok(BracketTable { k, zones_enabled, side, slots, grid, row_weights, zone_weights, sid, vid })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn zones_enabled(&self) -> bool {
        self.zones_enabled
    }

    /// Rows/columns per zone; also the number of distinct Bid values.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Bits needed for one Bid value.
    pub fn bid_width(&self) -> u32 {
        self.side.trailing_zeros()
    }

    pub fn slot(&self, symbol: Symbol) -> Slot {
        self.slots[usize::from(symbol)]
    }

    pub fn symbol_at(&self, zone: usize, row: usize, col: usize) -> Symbol {
        self.grid[(zone * self.side + row) * self.side + col]
    }

    /// Summed weight of each row index (across zones).
    pub fn row_weights(&self) -> &[u64] {
        &self.row_weights
    }

    pub fn zone_weights(&self) -> &[u64] {
        &self.zone_weights
    }

    pub fn sid_code(&self) -> &CanonicalCode {
        &self.sid
    }

    pub fn vid_code(&self) -> Option<&CanonicalCode> {
        self.vid.as_ref()
    }

    /// Symbols of row `row` in zone `zone`, left to right.
    pub fn row_symbols(&self, zone: usize, row: usize) -> &[Symbol] {
        let start = (zone * self.side + row) * self.side;
        &self.grid[start..start + self.side]
    }
}

/// Replaces each symbol by the zone-1 symbol at the same `(row, col)` and
/// records its zone's Vid codeword.
pub fn change_values(outsource: &[Symbol], table: &BracketTable) -> Result<(Vec<Symbol>, Bits)> {
    let mut ops = OpCount::default();
    change_values_counted(outsource, table, &mut ops)
}

pub fn change_values_counted(
    outsource: &[Symbol],
    table: &BracketTable,
    ops: &mut OpCount,
) -> Result<(Vec<Symbol>, Bits)> {
    let vid = table
        .vid
        .as_ref()
        .ok_or_else(|| param("change_values requires zones"))?;
    let limit = 1usize << table.k;
    let mut changed = Bits::with_capacity(2 * outsource.len());
    let mut out = Vec::with_capacity(outsource.len());
    for &s in outsource {
        if usize::from(s) >= limit {
            return Err(Error::SymbolRange { value: u32::from(s), k: table.k });
        }
        let slot = table.slot(s);
        out.push(table.symbol_at(0, usize::from(slot.row), usize::from(slot.col)));
        vid.push(usize::from(slot.zone), &mut changed);
        ops.add(2);
    }
    Ok((out, changed))
}

/// Splits symbols into their Bid string and the addendum of Sid codewords.
pub fn split(symbols: &[Symbol], table: &BracketTable) -> Result<(Vec<u8>, Bits)> {
    let mut ops = OpCount::default();
    split_counted(symbols, table, &mut ops)
}

pub fn split_counted(symbols: &[Symbol], table: &BracketTable, ops: &mut OpCount) -> Result<(Vec<u8>, Bits)> {
    let limit = 1usize << table.k;
    let mut bids = Vec::with_capacity(symbols.len());
    let mut addendum = Bits::with_capacity(2 * symbols.len());
    for &s in symbols {
        if usize::from(s) >= limit {
            return Err(Error::SymbolRange { value: u32::from(s), k: table.k });
        }
        let slot = table.slot(s);
        if slot.zone != 0 {
            return Err(Error::Internal(format!("symbol {s} lies outside the first zone")));
        }
        bids.push(slot.col);
        table.sid.push(usize::from(slot.row), &mut addendum);
        ops.add(2);
    }
    Ok((bids, addendum))
}

/// Inverse of `change_values` followed by `split`. `changed_values` is
/// ignored (and must be empty) when zones are disabled.
pub fn merge(bids: &[u8], addendum: &BitSlice<u8, Msb0>, changed_values: &BitSlice<u8, Msb0>, table: &BracketTable) -> Result<Vec<Symbol>> {
    let mut ops = OpCount::default();
    merge_counted(bids, addendum, changed_values, table, &mut ops)
}

pub fn merge_counted(
    bids: &[u8],
    addendum: &BitSlice<u8, Msb0>,
    changed_values: &BitSlice<u8, Msb0>,
    table: &BracketTable,
    ops: &mut OpCount,
) -> Result<Vec<Symbol>> {
    let rows = table.sid.decode_all(addendum, bids.len())?;
    let zones = match &table.vid {
        Some(vid) => vid.decode_all(changed_values, bids.len())?,
        None => {
            if !changed_values.is_empty() {
                return Err(crate::error::decode("changed values present without zones"));
            }
            vec![0; bids.len()]
        }
    };
    bids.iter()
        .zip(rows.iter().zip(&zones))
        .map(|(&bid, (&row, &zone))| {
            ops.add(3);
            if usize::from(bid) >= table.side {
                return Err(crate::error::decode(format!("bid {bid} out of range")));
            }
            Ok(table.symbol_at(zone, row, usize::from(bid)))
        })
        .collect()
}
