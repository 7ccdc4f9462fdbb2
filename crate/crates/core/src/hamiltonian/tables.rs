//! Padded excitation tables.
//!
//! Two lookup tables drive coupled-configuration generation: a singles
//! table with one row per spin orbital `p` listing spin-conserving targets
//! `a`, and a doubles table with one row per orbital pair `p < q` listing
//! Sz-conserving target pairs `a < b` disjoint from the source pair. Rows
//! are padded with `(null, 0)` entries to the per-table maximum so the
//! layout is fixed-width; real entries precede pads.
//!
//! Singles weights are screening estimates (the exact single element
//! depends on the full occupancy and is always recomputed at generation
//! time). Doubles weights are the exact antisymmetrized elements
//! `<pq||ab>`, which are occupancy-independent up to parity.

use super::{HamError, IntegralStore};
use crate::conf::{spatial_of, spin_of, OrbitalSpace};

/// Target id marking a pad entry.
pub const NULL_TARGET: u64 = u64::MAX;
/// Bytes per padded table entry: 8-byte target id + 8-byte weight.
pub const TABLE_ENTRY_BYTES: usize = 16;
/// Bytes of the dump header: magic + m + the two row maxima.
pub const TABLE_HEADER_BYTES: usize = 32;

const MAGIC: &[u8; 8] = b"SCITBL1\0";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub target: u64,
    pub weight: f64,
}

impl TableEntry {
    pub const PAD: TableEntry = TableEntry { target: NULL_TARGET, weight: 0.0 };

    #[inline]
    pub fn is_pad(&self) -> bool {
        self.target == NULL_TARGET
    }
}

/// Encodes a target pair (a < b) into one 64-bit target id.
#[inline]
pub fn encode_pair_target(a: usize, b: usize) -> u64 {
    ((a as u64) << 32) | b as u64
}

#[inline]
pub fn decode_pair_target(target: u64) -> (usize, usize) {
    ((target >> 32) as usize, (target & 0xffff_ffff) as usize)
}

/// Number of ordered pairs p < q over m spin orbitals.
#[inline]
pub fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Row index of the pair (p < q) in lexicographic pair order.
#[inline]
pub fn pair_index(p: usize, q: usize, m: usize) -> usize {
    debug_assert!(p < q && q < m);
    p * m - p * (p + 1) / 2 + (q - p - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationTables {
    pub m: usize,
    pub max_single_size: usize,
    pub max_double_size: usize,
    pub(crate) singles: Vec<TableEntry>,
    pub(crate) doubles: Vec<TableEntry>,
}

impl ExcitationTables {
    /// Tables with no rows at all (m = 0); footprint is the header only.
    pub fn empty() -> Self {
        ExcitationTables { m: 0, max_single_size: 0, max_double_size: 0, singles: vec![], doubles: vec![] }
    }

    #[inline]
    pub fn singles_row(&self, p: usize) -> &[TableEntry] {
        let w = self.max_single_size;
        &self.singles[p * w..(p + 1) * w]
    }

    #[inline]
    pub fn doubles_row(&self, pair_idx: usize) -> &[TableEntry] {
        let w = self.max_double_size;
        &self.doubles[pair_idx * w..(pair_idx + 1) * w]
    }

    pub fn entry_count(&self) -> usize {
        self.singles.len() + self.doubles.len()
    }
}

fn pad_rows(rows: Vec<Vec<TableEntry>>, width: usize) -> Vec<TableEntry> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for mut row in rows {
        debug_assert!(row.len() <= width);
        row.resize(width, TableEntry::PAD);
        flat.extend_from_slice(&row);
    }
    flat
}

/// Builds the padded excitation tables for a space.
///
/// With `eps_table == 0` every spin-allowed singles target is kept;
/// doubles entries are kept whenever `|<pq||ab>| > eps_table`, so exact
/// zeros never occupy a slot.
pub fn build_tables(
    ints: &IntegralStore,
    space: &OrbitalSpace,
    eps_table: f64,
) -> ExcitationTables {
    assert!(eps_table >= 0.0, "eps_table must be non-negative");
    let m = space.m;

    let mut single_rows: Vec<Vec<TableEntry>> = Vec::with_capacity(m);
    for p in 0..m {
        let mut row = Vec::new();
        for a in (spin_of(p)..m).step_by(2) {
            if a == p {
                continue;
            }
            // Screening surrogate: |h_pa| plus the Coulomb column sum. The
            // exact element depends on the occupancy and is recomputed at
            // generation time.
            let mut w = ints.h(spatial_of(p), spatial_of(a)).abs();
            for b in 0..ints.n_spatial() {
                w += ints.eri(spatial_of(p), spatial_of(a), b, b).abs();
            }
            if eps_table == 0.0 || w > eps_table {
                row.push(TableEntry { target: a as u64, weight: w });
            }
        }
        single_rows.push(row);
    }

    let mut double_rows: Vec<Vec<TableEntry>> = Vec::with_capacity(pair_count(m));
    for p in 0..m {
        for q in (p + 1)..m {
            let sz = spin_of(p) + spin_of(q);
            let mut row = Vec::new();
            for a in 0..m {
                for b in (a + 1)..m {
                    if a == p || a == q || b == p || b == q {
                        continue;
                    }
                    if spin_of(a) + spin_of(b) != sz {
                        continue;
                    }
                    let w = ints.antisym_so(p, q, a, b);
                    if w.abs() > eps_table {
                        row.push(TableEntry { target: encode_pair_target(a, b), weight: w });
                    }
                }
            }
            double_rows.push(row);
        }
    }

    // A row of width zero would make the virtual space degenerate; keep at
    // least one (all-pad) slot per row whenever rows exist.
    let max_single_size = single_rows.iter().map(Vec::len).max().unwrap_or(0).max(usize::from(m > 0));
    let max_double_size = double_rows
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0)
        .max(usize::from(pair_count(m) > 0));

    ExcitationTables {
        m,
        max_single_size,
        max_double_size,
        singles: pad_rows(single_rows, max_single_size),
        doubles: pad_rows(double_rows, max_double_size),
    }
}

/// Exact byte count of the padded layout (dump format).
pub fn table_footprint(tables: &ExcitationTables) -> usize {
    TABLE_HEADER_BYTES + tables.entry_count() * TABLE_ENTRY_BYTES
}

/// Serializes tables as a little-endian binary blob.
pub fn dump_tables(tables: &ExcitationTables) -> Vec<u8> {
    let mut out = Vec::with_capacity(table_footprint(tables));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tables.m as u64).to_le_bytes());
    out.extend_from_slice(&(tables.max_single_size as u64).to_le_bytes());
    out.extend_from_slice(&(tables.max_double_size as u64).to_le_bytes());
    for entry in tables.singles.iter().chain(tables.doubles.iter()) {
        out.extend_from_slice(&entry.target.to_le_bytes());
        out.extend_from_slice(&entry.weight.to_le_bytes());
    }
    out
}

pub fn restore_tables(blob: &[u8]) -> Result<ExcitationTables, HamError> {
    let bad = |msg: &str| HamError::TableBlob(msg.to_string());
    if blob.len() < TABLE_HEADER_BYTES || &blob[..8] != MAGIC {
        return Err(bad("missing SCITBL1 magic"));
    }
    let u64_at = |off: usize| u64::from_le_bytes(blob[off..off + 8].try_into().unwrap());
    let m = u64_at(8) as usize;
    let max_single_size = u64_at(16) as usize;
    let max_double_size = u64_at(24) as usize;
    let n_entries = m * max_single_size + pair_count(m) * max_double_size;
    if blob.len() != TABLE_HEADER_BYTES + n_entries * TABLE_ENTRY_BYTES {
        return Err(bad("blob length does not match header"));
    }
    let mut entries = Vec::with_capacity(n_entries);
    for k in 0..n_entries {
        let off = TABLE_HEADER_BYTES + k * TABLE_ENTRY_BYTES;
        entries.push(TableEntry {
            target: u64_at(off),
            weight: f64::from_bits(u64_at(off + 8)),
        });
    }
    let doubles = entries.split_off(m * max_single_size);
    Ok(ExcitationTables { m, max_single_size, max_double_size, singles: entries, doubles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::gen_fixture_store;

    #[test]
    fn pair_index_is_lexicographic() {
        let m = 6;
        let mut expect = 0;
        for p in 0..m {
            for q in (p + 1)..m {
                assert_eq!(pair_index(p, q, m), expect);
                expect += 1;
            }
        }
        assert_eq!(expect, pair_count(m));
    }

    #[test]
    fn singles_rows_keep_all_spin_allowed_targets_at_zero_eps() {
        let (ints, space) = gen_fixture_store(7, 12, 4, 1.0);
        let tables = build_tables(&ints, &space, 0.0);
        assert_eq!(tables.max_single_size, space.m / 2 - 1);
        for p in 0..space.m {
            let row = tables.singles_row(p);
            for entry in row {
                assert!(!entry.is_pad());
                let a = entry.target as usize;
                assert_eq!(spin_of(a), spin_of(p));
                assert_ne!(a, p);
            }
        }
    }

    #[test]
    fn doubles_entries_conserve_sz_and_avoid_sources() {
        let (ints, space) = gen_fixture_store(3, 10, 4, 0.8);
        let tables = build_tables(&ints, &space, 0.0);
        let m = space.m;
        for p in 0..m {
            for q in (p + 1)..m {
                let mut seen_pad = false;
                for entry in tables.doubles_row(pair_index(p, q, m)) {
                    if entry.is_pad() {
                        seen_pad = true;
                        continue;
                    }
                    assert!(!seen_pad, "real entry after pad");
                    let (a, b) = decode_pair_target(entry.target);
                    assert!(a < b);
                    assert!(a != p && a != q && b != p && b != q);
                    assert_eq!(spin_of(a) + spin_of(b), spin_of(p) + spin_of(q));
                    assert!(entry.weight != 0.0);
                    assert_eq!(entry.weight, ints.antisym_so(p, q, a, b));
                }
            }
        }
    }

    #[test]
    fn eps_table_screens_doubles() {
        let (ints, space) = gen_fixture_store(5, 8, 3, 1.0);
        let loose = build_tables(&ints, &space, 0.0);
        let tight = build_tables(&ints, &space, 1e9);
        assert!(tight.entry_count() <= loose.entry_count());
        for pair in 0..pair_count(space.m) {
            for entry in tight.doubles_row(pair) {
                assert!(entry.is_pad());
            }
        }
    }

    #[test]
    fn empty_tables_footprint_is_header_only() {
        assert_eq!(table_footprint(&ExcitationTables::empty()), TABLE_HEADER_BYTES);
    }

    #[test]
    fn single_orbital_yields_one_all_pad_row() {
        let ints = IntegralStore::new(1);
        // m = 1 spin orbital is below the 2-per-spatial convention but the
        // table layer only needs the counts.
        let space = OrbitalSpace { m: 1, n_elec: 1, spin: Default::default() };
        let tables = build_tables(&ints, &space, 0.0);
        assert_eq!(tables.max_single_size, 1);
        assert!(tables.singles_row(0)[0].is_pad());
        assert_eq!(table_footprint(&tables), TABLE_HEADER_BYTES + TABLE_ENTRY_BYTES);
    }

    #[test]
    fn dump_restore_round_trip() {
        let (ints, space) = gen_fixture_store(11, 10, 5, 0.6);
        let tables = build_tables(&ints, &space, 0.0);
        let blob = dump_tables(&tables);
        assert_eq!(blob.len(), table_footprint(&tables));
        assert_eq!(restore_tables(&blob).unwrap(), tables);
    }
}
