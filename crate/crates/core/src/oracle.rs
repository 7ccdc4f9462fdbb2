//! Independent brute-force references used by the test suites: full CI
//! diagonalization, naive coupled-set enumeration, naive de-duplication,
//! and a second-quantized operator evaluation of matrix elements with
//! explicit sign tracking. These deliberately share only the
//! configuration layer with the production code paths.

use crate::conf::{spatial_of, spin_of, Configuration, OrbitalSpace};
use crate::hamiltonian::{slater_condon, IntegralStore};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dimension guard exceeded: {0} (limit {1})")]
    DimensionGuard(u128, u128),
    #[error("orbital guard exceeded: m = {0} (limit {1})")]
    OrbitalGuard(usize, usize),
    #[error(transparent)]
    Conf(#[from] crate::conf::ConfError),
    #[error(transparent)]
    Ham(#[from] crate::hamiltonian::HamError),
    #[error("Lanczos failed to converge (residual {0:.3e})")]
    NonConvergence(f64),
}

const FCI_DIMENSION_LIMIT: u128 = 100_000;
const OPERATOR_ORBITAL_LIMIT: usize = 12;
const DENSE_LIMIT: usize = 800;

/// All configurations of the particle sector, in the global configuration
/// order.
pub fn enumerate_sector(space: &OrbitalSpace) -> Vec<Configuration> {
    let (m, n) = (space.m, space.n_elec);
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut c = Configuration::default();
        for &t in &idx {
            c.set(t);
        }
        out.push(c);
        // Next n-combination of 0..m in lexicographic index order.
        let Some(k) = (0..n).rev().find(|&k| idx[k] < m - n + k) else {
            break;
        };
        idx[k] += 1;
        for j in (k + 1)..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out.sort();
    out
}

pub struct FciSolution {
    pub energy: f64,
    pub configs: Vec<Configuration>,
    pub eigenvector: Vec<f64>,
}

/// Exact lowest eigenpair of the full Hamiltonian, dense below
/// `DENSE_LIMIT` and Lanczos above.
pub fn fci_energy(ints: &IntegralStore, space: &OrbitalSpace) -> Result<FciSolution, OracleError> {
    let dim = crate::conf::hilbert_dimension(space);
    let dim: u128 = dim
        .try_into()
        .map_err(|_| OracleError::DimensionGuard(u128::MAX, FCI_DIMENSION_LIMIT))?;
    if dim > FCI_DIMENSION_LIMIT {
        return Err(OracleError::DimensionGuard(dim, FCI_DIMENSION_LIMIT));
    }
    let configs = enumerate_sector(space);
    let n = configs.len();

    let (energy, mut vector) = if n <= DENSE_LIMIT {
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                if configs[i].xor(&configs[j]).popcount() > 4 {
                    continue;
                }
                let v = slater_condon(&configs[i], &configs[j], ints)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        lowest_dense(&h)
    } else {
        let rows = sparse_rows(&configs, ints)?;
        lanczos_lowest(n, |x, y| spmv(&rows, x, y))?
    };

    // Sign convention: reference amplitude non-negative.
    let ref_conf = space.reference();
    let anchor = configs.binary_search(&ref_conf).ok();
    fix_sign(&mut vector, anchor);
    Ok(FciSolution { energy, configs, eigenvector: vector })
}

pub(crate) fn fix_sign(vector: &mut [f64], anchor: Option<usize>) {
    let pivot = match anchor {
        Some(i) if vector[i] != 0.0 => vector[i],
        _ => {
            let mut best = 0.0f64;
            for &v in vector.iter() {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            best
        }
    };
    if pivot < 0.0 {
        for v in vector.iter_mut() {
            *v = -*v;
        }
    }
}

fn lowest_dense(h: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = h.clone().symmetric_eigen();
    let mut best = 0;
    for k in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[k] < eig.eigenvalues[best] {
            best = k;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).iter().copied().collect())
}

pub(crate) fn sparse_rows(
    configs: &[Configuration],
    ints: &IntegralStore,
) -> Result<Vec<Vec<(u32, f64)>>, OracleError> {
    let n = configs.len();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i..n {
            if configs[i].xor(&configs[j]).popcount() > 4 {
                continue;
            }
            let v = slater_condon(&configs[i], &configs[j], ints)?;
            if v != 0.0 || i == j {
                rows[i].push((j as u32, v));
                if i != j {
                    rows[j].push((i as u32, v));
                }
            }
        }
    }
    Ok(rows)
}

pub(crate) fn spmv(rows: &[Vec<(u32, f64)>], x: &[f64], y: &mut [f64]) {
    for (i, row) in rows.iter().enumerate() {
        let mut acc = 0.0;
        for &(j, v) in row {
            acc += v * x[j as usize];
        }
        y[i] = acc;
    }
}

/// Lanczos iteration with full reorthogonalization for the lowest
/// eigenpair of a symmetric operator.
pub(crate) fn lanczos_lowest(
    n: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> Result<(f64, Vec<f64>), OracleError> {
    let max_steps = n.min(400);
    let tol = 1e-11;

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    // Deterministic pseudo-random start vector; a structured start (e.g. a
    // basis vector) risks being orthogonal to the ground state.
    let mut v = DVector::from_iterator(
        n,
        (0..n as u64).map(|i| {
            let bits = i.wrapping_mul(0x9e3779b97f4a7c15).rotate_left(31);
            1.0 + (bits % 1000) as f64 / 1000.0
        }),
    );
    v /= v.norm();
    basis.push(v);

    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_steps {
        let v = basis.last().unwrap().clone();
        apply(v.as_slice(), &mut w);
        let mut wv = DVector::from_column_slice(&w);
        let alpha = v.dot(&wv);
        alphas.push(alpha);
        // Full reorthogonalization, twice: a single Gram-Schmidt pass leaves
        // a relative residual that compounds across steps and collapses the
        // basis long before convergence.
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dot(&wv);
                wv -= b * overlap;
            }
        }
        let beta = wv.norm();

        let (theta, y) = lowest_tridiagonal(&alphas, &betas);
        residual = beta * y[y.len() - 1].abs();
        if residual < tol || beta < 1e-14 {
            let mut x = DVector::zeros(n);
            for (b, &c) in basis.iter().zip(y.iter()) {
                x += b * c;
            }
            x /= x.norm();
            return Ok((theta, x.as_slice().to_vec()));
        }
        betas.push(beta);
        basis.push(wv / beta);
    }
    Err(OracleError::NonConvergence(residual))
}

fn lowest_tridiagonal(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let (theta, y) = lowest_dense(&t);
    (theta, y)
}

/// Brute-force coupled set of `c`: every single and double move with
/// |element| above the threshold.
pub fn naive_coupled(
    c: &Configuration,
    ints: &IntegralStore,
    space: &OrbitalSpace,
    eps: f64,
) -> Vec<(Configuration, f64)> {
    let occ = c.occupied();
    let holes: Vec<usize> = (0..space.m).filter(|&t| !c.is_occupied(t)).collect();
    let mut out = Vec::new();
    for &p in &occ {
        for &a in &holes {
            let mut t = *c;
            t.clear(p);
            t.set(a);
            let el = slater_condon(c, &t, ints).expect("same sector");
            if el.abs() > eps {
                out.push((t, el));
            }
        }
    }
    for (i, &p) in occ.iter().enumerate() {
        for &q in &occ[i + 1..] {
            for (k, &a) in holes.iter().enumerate() {
                for &b in &holes[k + 1..] {
                    let mut t = *c;
                    t.clear(p);
                    t.clear(q);
                    t.set(a);
                    t.set(b);
                    let el = slater_condon(c, &t, ints).expect("same sector");
                    if el.abs() > eps {
                        out.push((t, el));
                    }
                }
            }
        }
    }
    out.sort_by(|x, y| x.0.cmp(&y.0));
    out
}

/// Concatenate, sort, unique.
pub fn naive_dedup(lists: &[Vec<Configuration>]) -> Vec<Configuration> {
    let mut all: Vec<Configuration> = lists.iter().flatten().copied().collect();
    all.sort();
    all.dedup();
    all
}

fn annihilate(mask: u32, q: usize) -> Option<(u32, i32)> {
    let bit = 1u32 << q;
    if mask & bit == 0 {
        return None;
    }
    let sign = if (mask & (bit - 1)).count_ones() % 2 == 0 { 1 } else { -1 };
    Some((mask & !bit, sign))
}

fn create(mask: u32, p: usize) -> Option<(u32, i32)> {
    let bit = 1u32 << p;
    if mask & bit != 0 {
        return None;
    }
    let sign = if (mask & (bit - 1)).count_ones() % 2 == 0 { 1 } else { -1 };
    Some((mask | bit, sign))
}

/// <c_j|H|c_i> by explicit application of second-quantized operators to
/// occupation vectors, with no Slater-Condon shortcuts.
pub fn operator_element(
    c_i: &Configuration,
    c_j: &Configuration,
    ints: &IntegralStore,
    space: &OrbitalSpace,
) -> Result<f64, OracleError> {
    let m = space.m;
    if m > OPERATOR_ORBITAL_LIMIT {
        return Err(OracleError::OrbitalGuard(m, OPERATOR_ORBITAL_LIMIT));
    }
    let mask_i = c_i.words()[0] as u32;
    let mask_j = c_j.words()[0] as u32;

    let mut value = if mask_i == mask_j { ints.e_core() } else { 0.0 };

    // One-body: sum_{pq} h_pq <j| p+ q |i>.
    for p in 0..m {
        for q in 0..m {
            let t = one_body_integral(ints, p, q);
            if t == 0.0 {
                continue;
            }
            if let Some((s1, g1)) = annihilate(mask_i, q) {
                if let Some((s2, g2)) = create(s1, p) {
                    if s2 == mask_j {
                        value += (g1 * g2) as f64 * t;
                    }
                }
            }
        }
    }

    // Two-body: 1/2 sum_{pqrs} <pq|rs> <j| p+ q+ s r |i> with the
    // physicist integral <pq|rs> = (pr|qs) in chemist notation.
    for p in 0..m {
        for q in 0..m {
            for r in 0..m {
                for s in 0..m {
                    let g = ints.g_so(p, r, q, s);
                    if g == 0.0 {
                        continue;
                    }
                    let Some((s1, g1)) = annihilate(mask_i, r) else { continue };
                    let Some((s2, g2)) = annihilate(s1, s) else { continue };
                    let Some((s3, g3)) = create(s2, q) else { continue };
                    let Some((s4, g4)) = create(s3, p) else { continue };
                    if s4 == mask_j {
                        value += 0.5 * (g1 * g2 * g3 * g4) as f64 * g;
                    }
                }
            }
        }
    }
    Ok(value)
}

fn one_body_integral(ints: &IntegralStore, p: usize, q: usize) -> f64 {
    if spin_of(p) != spin_of(q) {
        return 0.0;
    }
    ints.h(spatial_of(p), spatial_of(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conf::make_config;
    use crate::fixture::gen_fixture_store;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn enumerate_sector_counts_and_order() {
        let space = OrbitalSpace::new(8, 3).unwrap();
        let configs = enumerate_sector(&space);
        assert_eq!(configs.len(), 56);
        let mut sorted = configs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, configs);
        assert!(configs.iter().all(|c| c.popcount() == 3));
    }

    #[test]
    fn two_level_system_analytic_eigenvalue() {
        // Single electron, two alpha spatial levels with coupling.
        let mut ints = IntegralStore::new(2);
        ints.set_h(0, 0, -1.0);
        ints.set_h(1, 1, 1.0);
        ints.set_h(0, 1, 0.5);
        let space = OrbitalSpace::new(4, 1).unwrap();
        let sol = fci_energy(&ints, &space).unwrap();
        // The alpha and beta sectors are degenerate two-level systems:
        // E = -sqrt(1 + 0.25).
        let expected = -(1.0f64 + 0.25).sqrt();
        assert!((sol.energy - expected).abs() < 1e-12, "{} vs {expected}", sol.energy);
    }

    #[test]
    fn dimension_guard_trips() {
        let space = OrbitalSpace::new(56, 14).unwrap();
        let ints = IntegralStore::new(28);
        assert!(matches!(fci_energy(&ints, &space), Err(OracleError::DimensionGuard(..))));
    }

    #[test]
    fn operator_element_is_symmetric_and_local() {
        let (ints, space) = gen_fixture_store(19, 10, 4, 0.8);
        let configs = enumerate_sector(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = configs.choose(&mut rng).unwrap();
            let b = configs.choose(&mut rng).unwrap();
            let ab = operator_element(a, b, &ints, &space).unwrap();
            let ba = operator_element(b, a, &ints, &space).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            if crate::conf::diff_degree(a, b).unwrap() > 2 {
                assert_eq!(ab, 0.0);
            }
        }
    }

    #[test]
    fn slater_condon_matches_operator_oracle_exhaustively_small() {
        let (ints, space) = gen_fixture_store(23, 8, 3, 0.9);
        let configs = enumerate_sector(&space);
        for a in &configs {
            for b in &configs {
                let fast = slater_condon(a, b, &ints).unwrap();
                let slow = operator_element(a, b, &ints, &space).unwrap();
                assert!(
                    (fast - slow).abs() < 1e-12,
                    "mismatch for {} / {}: {fast} vs {slow}",
                    a.render(8),
                    b.render(8)
                );
            }
        }
    }

    #[test]
    fn naive_dedup_examples() {
        let space = OrbitalSpace::new(4, 1).unwrap();
        let a = make_config(&[0], &space).unwrap();
        let b = make_config(&[1], &space).unwrap();
        assert_eq!(naive_dedup(&[vec![a, b], vec![b]]), {
            let mut v = vec![a, b];
            v.sort();
            v
        });
        assert_eq!(naive_dedup(&[]), vec![]);
        let once = naive_dedup(&[vec![b, a, a]]);
        assert_eq!(naive_dedup(&[once.clone()]), once);
    }

    #[test]
    fn lanczos_agrees_with_dense_on_random_matrix() {
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let (dense_e, _) = lowest_dense(&h);
        let (lanczos_e, x) = lanczos_lowest(n, |v, w| {
            let hv = &h * DVector::from_column_slice(v);
            w.copy_from_slice(hv.as_slice());
        })
        .unwrap();
        assert!((dense_e - lanczos_e).abs() < 1e-9);
        let hx = &h * DVector::from_column_slice(&x);
        let res = (&hx - DVector::from_column_slice(&x) * lanczos_e).norm();
        assert!(res < 1e-8, "residual {res}");
    }

    // Regression: on a Hamiltonian that needs ~40 steps, a single
    // orthogonalization pass lets the basis collapse and Lanczos converges
    // to a spurious value below the true spectrum.
    #[test]
    fn lanczos_agrees_with_dense_on_slow_hamiltonian() {
        let (ints, space) = gen_fixture_store(105, 12, 6, 0.8);
        let configs = enumerate_sector(&space);
        let n = configs.len();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                if configs[i].xor(&configs[j]).popcount() > 4 {
                    continue;
                }
                let v = slater_condon(&configs[i], &configs[j], &ints).unwrap();
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let (dense_e, _) = lowest_dense(&h);
        let rows = sparse_rows(&configs, &ints).unwrap();
        let (lanczos_e, _) = lanczos_lowest(n, |x, y| spmv(&rows, x, y)).unwrap();
        assert!(
            (dense_e - lanczos_e).abs() < 1e-9,
            "dense {dense_e} vs lanczos {lanczos_e}"
        );
    }
}

