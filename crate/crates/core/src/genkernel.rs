//! Data-parallel coupled-configuration generation.
//!
//! Every source configuration spans a virtual excitation-id space sized by
//! the padded table maxima; each id names one candidate single or double
//! move. Candidates surviving the pad/occupancy/threshold filters become
//! [`CoupledRecord`]s. Workers compact into private buffers per source
//! chunk; the concatenated result is canonically sorted by
//! `(source_idx, target)`, so output is identical for any chunk size or
//! worker count.

use crate::conf::{apply_double, Configuration, OrbitalSpace};
use crate::hamiltonian::{
    decode_pair_target, pair_index, single_excitation_element, ExcitationTables, IntegralStore,
};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("virtual id {0} out of range (space has {1} ids)")]
    VirtualIdOutOfRange(u64, u64),
    #[error("tables were built for m = {tables_m}, sources live in m = {space_m}")]
    TablesMismatch { tables_m: usize, space_m: usize },
    #[error("source list is empty")]
    NoSources,
}

/// One emitted coupling: source index, excited target and the exact signed
/// matrix element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledRecord {
    pub source_idx: u64,
    pub target: Configuration,
    pub element: f64,
}

/// Serialized size of one record in the spill format.
pub const RECORD_BYTES: usize = 8 + 8 * crate::conf::CONFIG_WORDS + 8;

/// Virtual-thread space of a single source configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualSpace {
    pub n_single: u64,
    pub n_double: u64,
    pub max_single_size: usize,
    pub max_double_size: usize,
}

impl VirtualSpace {
    pub fn total(&self) -> u64 {
        self.n_single + self.n_double
    }
}

/// Counts per source: n_elec * max_single_size single ids and
/// n_elec * (n_elec - 1) / 2 * max_double_size double ids.
pub fn virtual_space(space: &OrbitalSpace, tables: &ExcitationTables) -> VirtualSpace {
    let n = space.n_elec as u64;
    VirtualSpace {
        n_single: n * tables.max_single_size as u64,
        n_double: n * (n - 1) / 2 * tables.max_double_size as u64,
        max_single_size: tables.max_single_size,
        max_double_size: tables.max_double_size,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirtualExcitation {
    Single { elec_idx: usize, target_idx: usize },
    Double { pair_idx: usize, target_idx: usize },
}

/// Splits a virtual id into its excitation coordinates. Ids below
/// `n_single` are singles; the rest are doubles, with `pair_idx`
/// enumerating occupied pairs (p < q) in lexicographic order of the
/// source's occupied-orbital list.
pub fn decompose_virtual_id(id: u64, vs: &VirtualSpace) -> Result<VirtualExcitation, GenError> {
    if id < vs.n_single {
        let w = vs.max_single_size as u64;
        Ok(VirtualExcitation::Single {
            elec_idx: (id / w) as usize,
            target_idx: (id % w) as usize,
        })
    } else if id < vs.total() {
        let rel = id - vs.n_single;
        let w = vs.max_double_size as u64;
        Ok(VirtualExcitation::Double {
            pair_idx: (rel / w) as usize,
            target_idx: (rel % w) as usize,
        })
    } else {
        Err(GenError::VirtualIdOutOfRange(id, vs.total()))
    }
}

fn emit_for_source(
    source_idx: u64,
    c: &Configuration,
    tables: &ExcitationTables,
    ints: &IntegralStore,
    eps: f64,
    out: &mut Vec<CoupledRecord>,
) {
    let occ = c.occupied();
    for &p in &occ {
        for entry in tables.singles_row(p) {
            if entry.is_pad() {
                break;
            }
            let a = entry.target as usize;
            if c.is_occupied(a) {
                continue;
            }
            let element = single_excitation_element(c, p, a, ints);
            if element.abs() > eps {
                let mut target = *c;
                target.clear(p);
                target.set(a);
                out.push(CoupledRecord { source_idx, target, element });
            }
        }
    }
    for (i, &p) in occ.iter().enumerate() {
        for &q in &occ[i + 1..] {
            for entry in tables.doubles_row(pair_index(p, q, tables.m)) {
                if entry.is_pad() {
                    break;
                }
                let (a, b) = decode_pair_target(entry.target);
                if c.is_occupied(a) || c.is_occupied(b) {
                    continue;
                }
                let (target, parity) = apply_double(c, p, q, a, b)
                    .expect("table entries are valid excitations");
                let element = parity as f64 * entry.weight;
                if element.abs() > eps {
                    out.push(CoupledRecord { source_idx, target, element });
                }
            }
        }
    }
}

fn sort_canonical(records: &mut [CoupledRecord]) {
    records.sort_unstable_by(|x, y| {
        x.source_idx.cmp(&y.source_idx).then_with(|| x.target.cmp(&y.target))
    });
}

fn validate(
    sources: &[Configuration],
    tables: &ExcitationTables,
    space: &OrbitalSpace,
) -> Result<(), GenError> {
    if sources.is_empty() {
        return Err(GenError::NoSources);
    }
    if tables.m != space.m {
        return Err(GenError::TablesMismatch { tables_m: tables.m, space_m: space.m });
    }
    Ok(())
}

/// Sequential generation path; the parallel entry point produces
/// byte-identical output.
pub fn generate_coupled_serial(
    sources: &[Configuration],
    tables: &ExcitationTables,
    ints: &IntegralStore,
    space: &OrbitalSpace,
    eps: f64,
) -> Result<Vec<CoupledRecord>, GenError> {
    validate(sources, tables, space)?;
    let mut out = Vec::new();
    for (idx, c) in sources.iter().enumerate() {
        emit_for_source(idx as u64, c, tables, ints, eps, &mut out);
    }
    sort_canonical(&mut out);
    Ok(out)
}

/// Generates the full coupled stream for `sources`, compacted per chunk
/// and canonically sorted.
pub fn generate_coupled(
    sources: &[Configuration],
    tables: &ExcitationTables,
    ints: &IntegralStore,
    space: &OrbitalSpace,
    eps: f64,
    chunk: usize,
) -> Result<Vec<CoupledRecord>, GenError> {
    validate(sources, tables, space)?;
    let chunk = chunk.max(1);

    #[cfg(feature = "parallel")]
    let buffers: Vec<Vec<CoupledRecord>> = sources
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, slice)| {
            let base = (ci * chunk) as u64;
            let mut buf = Vec::new();
            for (off, c) in slice.iter().enumerate() {
                emit_for_source(base + off as u64, c, tables, ints, eps, &mut buf);
            }
            buf
        })
        .collect();

    #[cfg(not(feature = "parallel"))]
    let buffers: Vec<Vec<CoupledRecord>> = sources
        .chunks(chunk)
        .enumerate()
        .map(|(ci, slice)| {
            let base = (ci * chunk) as u64;
            let mut buf = Vec::new();
            for (off, c) in slice.iter().enumerate() {
                emit_for_source(base + off as u64, c, tables, ints, eps, &mut buf);
            }
            buf
        })
        .collect();

    let mut out: Vec<CoupledRecord> = buffers.into_iter().flatten().collect();
    sort_canonical(&mut out);
    Ok(out)
}

/// Local uniqueness filter: the sorted, deduplicated target set of a record
/// stream. The input stream itself is the spill payload and is left
/// untouched.
pub fn local_unique(records: &[CoupledRecord]) -> Vec<Configuration> {
    let mut targets: Vec<Configuration> = records.iter().map(|r| r.target).collect();
    targets.sort_unstable();
    targets.dedup();
    targets
}
