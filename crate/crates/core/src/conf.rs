//! Configuration (Slater-determinant bitstring) representation.
//!
//! A configuration is a bitstring of length `m` with `n_elec` ones marking
//! occupied spin orbitals. Orbital `t` lives in word `t / 64` at bit
//! `t % 64`; the textual rendering places orbital 0 as the leftmost
//! character. Configurations are totally ordered by comparing the word
//! array as one big unsigned integer, most-significant word first. Every
//! sort, splitter computation and binary search in this crate uses that
//! same order.

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

/// Number of 64-bit words per configuration, fixed at build time.
pub const CONFIG_WORDS: usize = 2;
/// Largest supported spin-orbital count.
pub const MAX_ORBITALS: usize = 64 * CONFIG_WORDS;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfError {
    #[error("duplicate orbital index {0}")]
    DuplicateOrbital(usize),
    #[error("orbital index {index} out of range (m = {m})")]
    OrbitalOutOfRange { index: usize, m: usize },
    #[error("invalid excitation: {0}")]
    InvalidExcitation(String),
    #[error("particle sector mismatch ({0} vs {1} electrons)")]
    SectorMismatch(u32, u32),
    #[error("invalid configuration text: {0}")]
    Parse(String),
    #[error("invalid orbital space: {0}")]
    InvalidSpace(String),
}

/// Spin-orbital labeling convention. Spin orbital `2k` is the alpha spin of
/// spatial orbital `k`, `2k + 1` the beta spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum SpinConvention {
    #[default]
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OrbitalSpace {
    /// Count of spin orbitals.
    pub m: usize,
    /// Electron count.
    pub n_elec: usize,
    pub spin: SpinConvention,
}

impl OrbitalSpace {
    pub fn new(m: usize, n_elec: usize) -> Result<Self, ConfError> {
        if n_elec == 0 || n_elec > m {
            return Err(ConfError::InvalidSpace(format!(
                "need 0 < n_elec <= m, got n_elec = {n_elec}, m = {m}"
            )));
        }
        if m > MAX_ORBITALS {
            return Err(ConfError::InvalidSpace(format!(
                "m = {m} exceeds the build limit of {MAX_ORBITALS} spin orbitals"
            )));
        }
        Ok(OrbitalSpace { m, n_elec, spin: SpinConvention::Interleaved })
    }

    /// The reference configuration filling the lowest `n_elec` spin orbitals.
    pub fn reference(&self) -> Configuration {
        make_config_unchecked(0..self.n_elec)
    }
}

/// Spin (0 = alpha, 1 = beta) of a spin orbital under the interleaved convention.
#[inline]
pub fn spin_of(so: usize) -> usize {
    so & 1
}

/// Spatial orbital index of a spin orbital under the interleaved convention.
#[inline]
pub fn spatial_of(so: usize) -> usize {
    so >> 1
}

/// Fixed-width occupation bitstring.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Configuration {
    words: [u64; CONFIG_WORDS],
}

impl PartialOrd for Configuration {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Configuration {
    #[inline]
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // One big unsigned integer, most-significant word first.
        self.words.iter().rev().cmp(other.words.iter().rev())
    }
}

impl std::fmt::Debug for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Configuration({:016x}:{:016x})", self.words[1], self.words[0])
    }
}

impl Configuration {
    pub fn from_words(words: [u64; CONFIG_WORDS]) -> Self {
        Configuration { words }
    }

    pub fn words(&self) -> &[u64; CONFIG_WORDS] {
        &self.words
    }

    #[inline]
    pub fn is_occupied(&self, orbital: usize) -> bool {
        (self.words[orbital / 64] >> (orbital % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, orbital: usize) {
        self.words[orbital / 64] |= 1 << (orbital % 64);
    }

    #[inline]
    pub fn clear(&mut self, orbital: usize) {
        self.words[orbital / 64] &= !(1 << (orbital % 64));
    }

    #[inline]
    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn xor(&self, other: &Self) -> Self {
        let mut words = self.words;
        for (w, o) in words.iter_mut().zip(other.words.iter()) {
            *w ^= o;
        }
        Configuration { words }
    }

    /// Occupied spin-orbital indices in ascending order.
    pub fn occupied(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.popcount() as usize);
        for (wi, &word) in self.words.iter().enumerate() {
            let mut w = word;
            while w != 0 {
                let bit = w.trailing_zeros() as usize;
                out.push(wi * 64 + bit);
                w &= w - 1;
            }
        }
        out
    }

    /// Number of occupied orbitals in the half-open range `[start, end)`.
    fn count_range(&self, start: usize, end: usize) -> u32 {
        if start >= end {
            return 0;
        }
        let mut count = 0;
        for (wi, &word) in self.words.iter().enumerate() {
            let word_lo = wi * 64;
            let word_hi = word_lo + 64;
            if end <= word_lo || start >= word_hi {
                continue;
            }
            let s = start.max(word_lo) - word_lo;
            let e = end.min(word_hi) - word_lo;
            let mask = if e == 64 { !0u64 << s } else { ((1u64 << e) - 1) & (!0u64 << s) };
            count += (word & mask).count_ones();
        }
        count
    }

    /// Number of occupied orbitals strictly between `a` and `b` (exclusive).
    fn occupied_between(&self, a: usize, b: usize) -> u32 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.count_range(lo + 1, hi)
    }

    /// Renders the configuration as a string of `m` characters, orbital 0 leftmost.
    pub fn render(&self, m: usize) -> String {
        (0..m).map(|t| if self.is_occupied(t) { '1' } else { '0' }).collect()
    }

    /// Parses the textual form produced by [`render`](Self::render).
    pub fn parse(text: &str) -> Result<Self, ConfError> {
        if text.len() > MAX_ORBITALS {
            return Err(ConfError::Parse(format!("bitstring longer than {MAX_ORBITALS}")));
        }
        let mut c = Configuration::default();
        for (t, ch) in text.chars().enumerate() {
            match ch {
                '1' => c.set(t),
                '0' => {}
                other => return Err(ConfError::Parse(format!("unexpected character '{other}'"))),
            }
        }
        Ok(c)
    }
}

fn make_config_unchecked(occupied: impl IntoIterator<Item = usize>) -> Configuration {
    let mut c = Configuration::default();
    for t in occupied {
        c.set(t);
    }
    c
}

/// Builds a configuration from a list of occupied orbital indices.
pub fn make_config(occupied: &[usize], space: &OrbitalSpace) -> Result<Configuration, ConfError> {
    let mut c = Configuration::default();
    for &t in occupied {
        if t >= space.m {
            return Err(ConfError::OrbitalOutOfRange { index: t, m: space.m });
        }
        if c.is_occupied(t) {
            return Err(ConfError::DuplicateOrbital(t));
        }
        c.set(t);
    }
    Ok(c)
}

/// Exact Hilbert-space dimension C(m, n_elec).
pub fn hilbert_dimension(space: &OrbitalSpace) -> BigUint {
    let mut result = BigUint::one();
    let n = space.n_elec.min(space.m - space.n_elec);
    for k in 0..n {
        result = result * BigUint::from(space.m - k) / BigUint::from(k + 1);
    }
    result
}

/// Applies the single excitation p -> a, returning the new configuration and
/// the fermionic parity (-1)^(occupied orbitals strictly between p and a).
pub fn apply_single(
    c: &Configuration,
    p: usize,
    a: usize,
) -> Result<(Configuration, i32), ConfError> {
    if !c.is_occupied(p) {
        return Err(ConfError::InvalidExcitation(format!("source orbital {p} is unoccupied")));
    }
    if c.is_occupied(a) {
        return Err(ConfError::InvalidExcitation(format!("target orbital {a} is occupied")));
    }
    let mut out = *c;
    out.clear(p);
    out.set(a);
    let parity = if c.occupied_between(p, a) % 2 == 0 { 1 } else { -1 };
    Ok((out, parity))
}

/// Applies the double excitation (p, q) -> (a, b) as p -> a followed by
/// q -> b on the intermediate configuration; the parity is the product of
/// the two single parities. This composition order is the crate-wide sign
/// convention.
pub fn apply_double(
    c: &Configuration,
    p: usize,
    q: usize,
    a: usize,
    b: usize,
) -> Result<(Configuration, i32), ConfError> {
    if p >= q {
        return Err(ConfError::InvalidExcitation(format!("need p < q, got ({p}, {q})")));
    }
    if a >= b {
        return Err(ConfError::InvalidExcitation(format!("need a < b, got ({a}, {b})")));
    }
    if p == a || p == b || q == a || q == b {
        return Err(ConfError::InvalidExcitation("source and target orbitals overlap".into()));
    }
    let (mid, s1) = apply_single(c, p, a)?;
    let (out, s2) = apply_single(&mid, q, b)?;
    Ok((out, s1 * s2))
}

/// Number of orbital moves separating two same-sector configurations.
pub fn diff_degree(c1: &Configuration, c2: &Configuration) -> Result<u32, ConfError> {
    let (n1, n2) = (c1.popcount(), c2.popcount());
    if n1 != n2 {
        return Err(ConfError::SectorMismatch(n1, n2));
    }
    Ok(c1.xor(c2).popcount() / 2)
}
