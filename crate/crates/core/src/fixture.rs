//! Deterministic test fixtures: random-integral FCIDUMP generation and
//! skewed key streams for the de-duplication benchmarks.

use crate::conf::{Configuration, OrbitalSpace};
use crate::hamiltonian::{serialize_fcidump, IntegralStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a random integral store. `m` is the spin-orbital count (must be
/// even), `density` the probability that an off-diagonal slot is nonzero.
/// Diagonal one-electron integrals form an ascending ladder so the
/// reference configuration (lowest orbitals filled) anchors the spectrum.
pub fn gen_fixture_store(
    seed: u64,
    m: usize,
    n_elec: usize,
    density: f64,
) -> (IntegralStore, OrbitalSpace) {
    assert!(m % 2 == 0, "m must be even (two spin orbitals per spatial)");
    let space = OrbitalSpace::new(m, n_elec).expect("valid orbital space");
    let ns = m / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ints = IntegralStore::new(ns);

    let span = (ns.max(2) - 1) as f64;
    for p in 0..ns {
        let ladder = -2.0 + 1.5 * p as f64 / span;
        ints.set_h(p, p, ladder + 0.02 * rng.gen_range(-1.0..1.0));
    }
    for p in 0..ns {
        for q in 0..p {
            if rng.gen_bool(density) {
                ints.set_h(p, q, 0.05 * rng.gen_range(-1.0..1.0));
            }
        }
    }
    // Canonical eri slots only, so the declared sparsity is exact.
    for i in 0..ns {
        for j in 0..=i {
            for k in 0..=i {
                for l in 0..=k {
                    if tri(i, j) < tri(k, l) {
                        continue;
                    }
                    if rng.gen_bool(density) {
                        ints.set_eri(i, j, k, l, 0.03 * rng.gen_range(-1.0..1.0));
                    }
                }
            }
        }
    }
    ints.set_e_core(rng.gen_range(-1.0..0.0));
    (ints, space)
}

fn tri(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

/// Random-integral FCIDUMP text, deterministic in the seed.
pub fn gen_fixture(seed: u64, m: usize, n_elec: usize, density: f64) -> String {
    let (ints, space) = gen_fixture_store(seed, m, n_elec, density);
    serialize_fcidump(&ints, &space)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDistribution {
    Uniform,
    /// Zipf with the given exponent over a rank universe of `n` keys.
    Zipf(f64),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn key_of_rank(rank: u64) -> Configuration {
    Configuration::from_words([splitmix64(rank), splitmix64(rank ^ 0xa5a5_5a5a_dead_beef)])
}

/// Draws `n` 128-bit keys from a rank universe of size `n` under the given
/// distribution; duplicates arise from rank collisions.
pub fn random_keys(n: usize, dist: KeyDistribution, seed: u64) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dist {
        KeyDistribution::Uniform => {
            (0..n).map(|_| key_of_rank(rng.gen_range(0..n as u64))).collect()
        }
        KeyDistribution::Zipf(theta) => {
            let mut cumulative = Vec::with_capacity(n);
            let mut total = 0.0;
            for r in 1..=n {
                total += (r as f64).powf(-theta);
                cumulative.push(total);
            }
            (0..n)
                .map(|_| {
                    let u = rng.gen_range(0.0..total);
                    let rank = cumulative.partition_point(|&c| c < u) as u64;
                    key_of_rank(rank)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::parse_fcidump;

    #[test]
    fn fixture_is_deterministic_in_seed() {
        assert_eq!(gen_fixture(42, 8, 4, 0.5), gen_fixture(42, 8, 4, 0.5));
        assert_ne!(gen_fixture(42, 8, 4, 0.5), gen_fixture(43, 8, 4, 0.5));
    }

    #[test]
    fn zero_density_gives_diagonal_only_h() {
        let (ints, _) = gen_fixture_store(7, 8, 4, 0.0);
        for p in 0..4 {
            for q in 0..4 {
                if p != q {
                    assert_eq!(ints.h(p, q), 0.0);
                }
                assert_eq!(ints.eri(p, q, p, q), 0.0);
            }
            assert!(ints.h(p, p) != 0.0);
        }
    }

    #[test]
    fn generated_text_parses_back() {
        let text = gen_fixture(3, 12, 6, 0.7);
        let (ints, space) = parse_fcidump(text.as_bytes()).unwrap();
        assert_eq!(space.m, 12);
        assert_eq!(space.n_elec, 6);
        let (direct, _) = gen_fixture_store(3, 12, 6, 0.7);
        assert_eq!(ints, direct);
    }

    #[test]
    fn zipf_keys_are_deterministic_and_skewed() {
        let a = random_keys(10_000, KeyDistribution::Zipf(1.1), 1);
        let b = random_keys(10_000, KeyDistribution::Zipf(1.1), 1);
        assert_eq!(a, b);
        let mut unique = a.clone();
        unique.sort();
        unique.dedup();
        // Zipf skew forces heavy duplication.
        assert!(unique.len() < a.len() / 2);
    }
}
