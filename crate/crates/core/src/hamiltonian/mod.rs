//! Integral storage and Slater-Condon matrix elements.
//!
//! Integrals are spin-free (RHF-style): `h` is the symmetric one-electron
//! matrix over spatial orbitals and `eri` holds the two-electron integrals
//! `(pq|rs)` in chemist notation with the standard 8-fold permutational
//! symmetry. Spin orbitals follow the interleaved convention of
//! [`crate::conf`]: spin orbital `2k` is alpha of spatial `k`, `2k + 1` beta.

mod fcidump;
mod tables;

pub use fcidump::{parse_fcidump, serialize_fcidump};
pub use tables::{
    build_tables, decode_pair_target, dump_tables, encode_pair_target, pair_count, pair_index,
    restore_tables, table_footprint, ExcitationTables, TableEntry, NULL_TARGET,
    TABLE_ENTRY_BYTES, TABLE_HEADER_BYTES,
};

use crate::conf::{apply_double, apply_single, diff_degree, spatial_of, spin_of, Configuration};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamError {
    #[error("FCIDUMP parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported UHF FCIDUMP (IUHF != 0); only spin-free RHF integrals are accepted")]
    Uhf,
    #[error(transparent)]
    Conf(#[from] crate::conf::ConfError),
    #[error("table blob malformed: {0}")]
    TableBlob(String),
}

/// One- and two-electron integrals plus the core energy, over spatial orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralStore {
    n_spatial: usize,
    h: Vec<f64>,
    eri: Vec<f64>,
    e_core: f64,
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

impl IntegralStore {
    pub fn new(n_spatial: usize) -> Self {
        let n_pair = n_spatial * (n_spatial + 1) / 2;
        IntegralStore {
            n_spatial,
            h: vec![0.0; n_spatial * n_spatial],
            eri: vec![0.0; n_pair * (n_pair + 1) / 2],
            e_core: 0.0,
        }
    }

    pub fn n_spatial(&self) -> usize {
        self.n_spatial
    }

    pub fn e_core(&self) -> f64 {
        self.e_core
    }

    pub fn set_e_core(&mut self, value: f64) {
        self.e_core = value;
    }

    /// One-electron integral h_pq over spatial orbitals.
    #[inline]
    pub fn h(&self, p: usize, q: usize) -> f64 {
        self.h[p * self.n_spatial + q]
    }

    pub fn set_h(&mut self, p: usize, q: usize, value: f64) {
        self.h[p * self.n_spatial + q] = value;
        self.h[q * self.n_spatial + p] = value;
    }

    /// Two-electron integral (pq|rs) in chemist notation, spatial orbitals.
    #[inline]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.eri[tri(tri(p, q), tri(r, s))]
    }

    pub fn set_eri(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        self.eri[tri(tri(p, q), tri(r, s))] = value;
    }

    /// Spin-integrated chemist integral (pa|qb) over spin orbitals; zero
    /// unless the spins within each charge density match.
    #[inline]
    pub fn g_so(&self, p: usize, a: usize, q: usize, b: usize) -> f64 {
        if spin_of(p) != spin_of(a) || spin_of(q) != spin_of(b) {
            return 0.0;
        }
        self.eri(spatial_of(p), spatial_of(a), spatial_of(q), spatial_of(b))
    }

    /// Antisymmetrized element <pq||ab> over spin orbitals.
    #[inline]
    pub fn antisym_so(&self, p: usize, q: usize, a: usize, b: usize) -> f64 {
        self.g_so(p, a, q, b) - self.g_so(p, b, q, a)
    }

    /// One-electron integral over spin orbitals (zero across spins).
    #[inline]
    pub fn h_so(&self, p: usize, a: usize) -> f64 {
        if spin_of(p) != spin_of(a) {
            return 0.0;
        }
        self.h(spatial_of(p), spatial_of(a))
    }
}

/// Diagonal element <c|H|c> including the core energy.
pub fn diagonal_element(c: &Configuration, ints: &IntegralStore) -> f64 {
    let occ = c.occupied();
    let mut value = ints.e_core();
    for &p in &occ {
        value += ints.h_so(p, p);
    }
    for (i, &p) in occ.iter().enumerate() {
        for &q in &occ[i + 1..] {
            value += ints.antisym_so(p, q, p, q);
        }
    }
    value
}

/// Exact signed element for the single excitation p -> a applied to `c`.
/// Returns zero for spin-flipping moves.
pub fn single_excitation_element(
    c: &Configuration,
    p: usize,
    a: usize,
    ints: &IntegralStore,
) -> f64 {
    let (_, parity) = match apply_single(c, p, a) {
        Ok(r) => r,
        Err(_) => return 0.0,
    };
    let mut value = ints.h_so(p, a);
    for k in c.occupied() {
        value += ints.antisym_so(p, k, a, k);
    }
    parity as f64 * value
}

/// Exact signed element for the double excitation (p, q) -> (a, b) applied
/// to `c`, under the p -> a, q -> b pairing convention.
pub fn double_excitation_element(
    c: &Configuration,
    p: usize,
    q: usize,
    a: usize,
    b: usize,
    ints: &IntegralStore,
) -> f64 {
    match apply_double(c, p, q, a, b) {
        Ok((_, parity)) => parity as f64 * ints.antisym_so(p, q, a, b),
        Err(_) => 0.0,
    }
}

/// Hamiltonian matrix element <c_i|H|c_j> via the Slater-Condon rules.
pub fn slater_condon(
    c_i: &Configuration,
    c_j: &Configuration,
    ints: &IntegralStore,
) -> Result<f64, HamError> {
    let degree = diff_degree(c_i, c_j)?;
    match degree {
        0 => Ok(diagonal_element(c_i, ints)),
        1 => {
            let diff = c_i.xor(c_j);
            let moved = diff.occupied();
            let (x, y) = (moved[0], moved[1]);
            let (p, a) = if c_i.is_occupied(x) { (x, y) } else { (y, x) };
            Ok(single_excitation_element(c_i, p, a, ints))
        }
        2 => {
            let diff = c_i.xor(c_j);
            let mut from = Vec::with_capacity(2);
            let mut to = Vec::with_capacity(2);
            for t in diff.occupied() {
                if c_i.is_occupied(t) {
                    from.push(t);
                } else {
                    to.push(t);
                }
            }
            Ok(double_excitation_element(c_i, from[0], from[1], to[0], to[1], ints))
        }
        _ => Ok(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conf::{make_config, OrbitalSpace};

    #[test]
    fn one_electron_diagonal() {
        let mut ints = IntegralStore::new(2);
        ints.set_h(0, 0, 0.5);
        let space = OrbitalSpace::new(4, 1).unwrap();
        let c = make_config(&[0], &space).unwrap();
        let e = slater_condon(&c, &c, &ints).unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn core_energy_enters_diagonal_only() {
        let mut ints = IntegralStore::new(2);
        ints.set_e_core(-1.25);
        ints.set_h(0, 1, 0.3);
        let space = OrbitalSpace::new(4, 1).unwrap();
        let a = make_config(&[0], &space).unwrap();
        let b = make_config(&[2], &space).unwrap();
        assert_eq!(slater_condon(&a, &a, &ints).unwrap(), -1.25);
        assert_eq!(slater_condon(&a, &b, &ints).unwrap(), 0.3);
    }

    #[test]
    fn triple_excitations_vanish() {
        let ints = IntegralStore::new(4);
        let space = OrbitalSpace::new(8, 3).unwrap();
        let a = make_config(&[0, 1, 2], &space).unwrap();
        let b = make_config(&[5, 6, 7], &space).unwrap();
        assert_eq!(slater_condon(&a, &b, &ints).unwrap(), 0.0);
    }

    #[test]
    fn spin_flip_single_vanishes() {
        let mut ints = IntegralStore::new(2);
        ints.set_h(0, 1, 0.7);
        let space = OrbitalSpace::new(4, 1).unwrap();
        let a = make_config(&[0], &space).unwrap(); // alpha of spatial 0
        let b = make_config(&[3], &space).unwrap(); // beta of spatial 1
        assert_eq!(slater_condon(&a, &b, &ints).unwrap(), 0.0);
    }

    #[test]
    fn sector_mismatch_is_an_error() {
        let ints = IntegralStore::new(2);
        let space = OrbitalSpace::new(4, 2).unwrap();
        let a = make_config(&[0, 1], &space).unwrap();
        let b = make_config(&[0], &space).unwrap();
        assert!(slater_condon(&a, &b, &ints).is_err());
    }

    #[test]
    fn eri_eightfold_symmetry() {
        let mut ints = IntegralStore::new(3);
        ints.set_eri(0, 1, 2, 2, 0.9);
        for (p, q, r, s) in [
            (0, 1, 2, 2),
            (1, 0, 2, 2),
            (2, 2, 0, 1),
            (2, 2, 1, 0),
        ] {
            assert_eq!(ints.eri(p, q, r, s), 0.9);
        }
    }
}
