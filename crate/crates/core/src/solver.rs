//! Subspace eigensolver, amplitude estimation, streaming top-K selection
//! and the iterate-expand-infer-select-optimize driver.
//!
//! The amplitude source is pluggable in principle; the built-in default is
//! the exact subspace eigenvector on S plus a first-order perturbative
//! estimate ψ_j = Σ_i H_ji ψ_i / (E − H_jj) outside S, with the denominator
//! clamped at 1e−8 (sign preserved) near degeneracies. Selection keeps the
//! K largest |ψ| candidates not yet in S; S grows monotonically, so the
//! per-iteration energies are non-increasing.

use crate::conf::{Configuration, OrbitalSpace};
use crate::genkernel::CoupledRecord;
use crate::hamiltonian::{
    build_tables, diagonal_element, slater_condon, HamError, IntegralStore,
};
use crate::memexec::{
    run_pipeline, ExecError, MemoryBudget, PipelineConfig, PipelineDriver, SpillStore, StageTrace,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Dense eigensolver is used up to this subspace size; Davidson above.
pub const DENSE_SOLVER_LIMIT: usize = 2000;
pub const DAVIDSON_TOL: f64 = 1e-10;
pub const DAVIDSON_MAX_ITERS: usize = 200;
/// Floor for |E − H_jj| in the perturbative estimate.
pub const DENOM_CLAMP: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("selected space must be non-empty")]
    EmptySpace,
    #[error("Davidson did not converge: residual {residual:.3e} after {iters} iterations")]
    DavidsonNonConvergence { residual: f64, iters: usize },
    #[error("amplitude missing for an in-space configuration")]
    MissingAmplitude,
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// The variational space S: sorted, unique, reference always present.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedSpace {
    pub configs: Vec<Configuration>,
    /// Bumped on every merge; stale amplitude vectors can be detected.
    pub stamp: u64,
}

impl SelectedSpace {
    pub fn new(mut configs: Vec<Configuration>) -> Self {
        configs.sort_unstable();
        configs.dedup();
        SelectedSpace { configs, stamp: 0 }
    }

    pub fn from_reference(space: &OrbitalSpace) -> Self {
        SelectedSpace::new(vec![space.reference()])
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn position(&self, c: &Configuration) -> Option<usize> {
        self.configs.binary_search(c).ok()
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        self.position(c).is_some()
    }

    /// Merges candidates in; returns how many were new.
    pub fn merge(&mut self, candidates: &[Configuration]) -> usize {
        let before = self.configs.len();
        self.configs.extend_from_slice(candidates);
        self.configs.sort_unstable();
        self.configs.dedup();
        self.stamp += 1;
        self.configs.len() - before
    }
}

/// Parallel (config, ψ) arrays; configs sorted under the global order.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    pub configs: Vec<Configuration>,
    pub psi: Vec<f64>,
}

impl AmplitudeVector {
    pub fn lookup(&self, c: &Configuration) -> Option<f64> {
        self.configs.binary_search(c).ok().map(|i| self.psi[i])
    }
}

fn fix_sign(psi: &mut [f64], s: &SelectedSpace, space: &OrbitalSpace) {
    let pivot = s
        .position(&space.reference())
        .filter(|&i| psi[i] != 0.0)
        .unwrap_or_else(|| {
            let mut best = 0;
            for (i, p) in psi.iter().enumerate() {
                if p.abs() > psi[best].abs() {
                    best = i;
                }
            }
            best
        });
    if psi[pivot] < 0.0 {
        for p in psi.iter_mut() {
            *p = -*p;
        }
    }
}

fn normalize(psi: &mut [f64]) {
    let norm = psi.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm > 0.0 {
        for p in psi.iter_mut() {
            *p /= norm;
        }
    }
}

fn sparse_rows(
    configs: &[Configuration],
    ints: &IntegralStore,
) -> Result<Vec<Vec<(usize, f64)>>, SolverError> {
    let n = configs.len();
    let build_row = |i: usize| -> Result<Vec<(usize, f64)>, SolverError> {
        let mut row = Vec::new();
        for j in 0..n {
            let el = slater_condon(&configs[i], &configs[j], ints)?;
            if el != 0.0 || i == j {
                row.push((j, el));
            }
        }
        Ok(row)
    };
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(build_row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(build_row).collect()
    }
}

fn dense_lowest(
    configs: &[Configuration],
    ints: &IntegralStore,
) -> Result<(f64, Vec<f64>), SolverError> {
    let n = configs.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let el = slater_condon(&configs[i], &configs[j], ints)?;
            h[(i, j)] = el;
            h[(j, i)] = el;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut best = 0;
    for k in 1..n {
        if eig.eigenvalues[k] < eig.eigenvalues[best] {
            best = k;
        }
    }
    let psi: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    Ok((eig.eigenvalues[best], psi))
}

fn davidson_lowest(rows: &[Vec<(usize, f64)>]) -> Result<(f64, Vec<f64>), SolverError> {
    let n = rows.len();
    let diag: Vec<f64> = (0..n)
        .map(|i| rows[i].iter().find(|(j, _)| *j == i).map_or(0.0, |&(_, v)| v))
        .collect();
    let matvec = |v: &DVector<f64>| {
        let mut out = DVector::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, h) in row {
                acc += h * v[j];
            }
            out[i] = acc;
        }
        out
    };

    let start_idx = (0..n).min_by(|&a, &b| diag[a].total_cmp(&diag[b])).unwrap();
    let mut start = DVector::zeros(n);
    start[start_idx] = 1.0;
    let mut basis = vec![start];
    let mut hbasis = vec![matvec(&basis[0])];
    let mut last_residual = f64::INFINITY;

    for _iter in 0..DAVIDSON_MAX_ITERS {
        let k = basis.len();
        let mut small = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = basis[a].dot(&hbasis[b]);
                small[(a, b)] = v;
                small[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(small);
        let mut best = 0;
        for c in 1..k {
            if eig.eigenvalues[c] < eig.eigenvalues[best] {
                best = c;
            }
        }
        let theta = eig.eigenvalues[best];
        let coeff = eig.eigenvectors.column(best);
        let mut ritz = DVector::zeros(n);
        let mut hritz = DVector::zeros(n);
        for a in 0..k {
            ritz.axpy(coeff[a], &basis[a], 1.0);
            hritz.axpy(coeff[a], &hbasis[a], 1.0);
        }
        let residual = &hritz - theta * &ritz;
        last_residual = residual.norm();
        if last_residual < DAVIDSON_TOL {
            ritz /= ritz.norm();
            return Ok((theta, ritz.iter().copied().collect()));
        }

        // Diagonal preconditioner (theta - H_jj), clamped near zero.
        let mut t = DVector::zeros(n);
        for j in 0..n {
            let mut den = theta - diag[j];
            if den.abs() < 1e-6 {
                den = if den < 0.0 { -1e-6 } else { 1e-6 };
            }
            t[j] = residual[j] / den;
        }
        // Orthogonalize twice against the basis for stability.
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&t);
                t.axpy(-proj, b, 1.0);
            }
        }
        let tnorm = t.norm();
        if tnorm < 1e-12 {
            // Preconditioned residual collapsed into span; expand with the
            // largest leftover residual direction instead.
            let far = (0..n).max_by(|&a, &b| residual[a].abs().total_cmp(&residual[b].abs()));
            t = DVector::zeros(n);
            t[far.unwrap()] = 1.0;
            for b in &basis {
                let proj = b.dot(&t);
                t.axpy(-proj, b, 1.0);
            }
            if t.norm() < 1e-12 {
                break;
            }
        }
        t /= t.norm();
        hbasis.push(matvec(&t));
        basis.push(t);

        if basis.len() > 24 {
            ritz /= ritz.norm();
            let h_r = matvec(&ritz);
            basis = vec![ritz];
            hbasis = vec![h_r];
        }
    }
    Err(SolverError::DavidsonNonConvergence {
        residual: last_residual,
        iters: DAVIDSON_MAX_ITERS,
    })
}

pub(crate) fn eigensolve_with_limit(
    s: &SelectedSpace,
    ints: &IntegralStore,
    space: &OrbitalSpace,
    dense_limit: usize,
) -> Result<(f64, Vec<f64>), SolverError> {
    if s.is_empty() {
        return Err(SolverError::EmptySpace);
    }
    let (energy, mut psi) = if s.len() <= dense_limit {
        dense_lowest(&s.configs, ints)?
    } else {
        davidson_lowest(&sparse_rows(&s.configs, ints)?)?
    };
    normalize(&mut psi);
    fix_sign(&mut psi, s, space);
    Ok((energy, psi))
}

/// Lowest eigenpair of H restricted to S; ψ normalized with the reference
/// amplitude fixed non-negative.
pub fn subspace_eigensolve(
    s: &SelectedSpace,
    ints: &IntegralStore,
    space: &OrbitalSpace,
) -> Result<(f64, Vec<f64>), SolverError> {
    eigensolve_with_limit(s, ints, space, DENSE_SOLVER_LIMIT)
}

/// Eigenvector passthrough inside S, first-order perturbative estimate
/// outside.
pub fn estimate_amplitudes(
    unique: &[Configuration],
    s: &SelectedSpace,
    psi_s: &[f64],
    e: f64,
    ints: &IntegralStore,
) -> Vec<f64> {
    let one = |c: &Configuration| -> f64 {
        if let Some(i) = s.position(c) {
            return psi_s[i];
        }
        let mut num = 0.0;
        for (ci, &p) in s.configs.iter().zip(psi_s) {
            if p == 0.0 {
                continue;
            }
            num += slater_condon(c, ci, ints).expect("same-sector configurations") * p;
        }
        if num == 0.0 {
            return 0.0;
        }
        let mut den = e - diagonal_element(c, ints);
        if den.abs() < DENOM_CLAMP {
            den = if den < 0.0 { -DENOM_CLAMP } else { DENOM_CLAMP };
        }
        num / den
    };
    #[cfg(feature = "parallel")]
    {
        unique.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        unique.iter().map(one).collect()
    }
}

/// One selection candidate; ordering is by |ψ| descending, ties broken by
/// the smaller configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub config: Configuration,
    pub psi: f64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.psi
            .abs()
            .total_cmp(&other.psi.abs())
            .then_with(|| other.config.cmp(&self.config))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded running top-K over candidate amplitudes.
#[derive(Debug, Clone)]
pub struct TopKState {
    capacity: usize,
    heap: BinaryHeap<Reverse<Candidate>>,
}

impl TopKState {
    pub fn new(capacity: usize) -> Self {
        TopKState { capacity, heap: BinaryHeap::with_capacity(capacity + 1) }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Current eviction threshold: the weakest retained |ψ|.
    pub fn threshold(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(c)| c.psi.abs())
    }

    pub fn offer(&mut self, config: Configuration, psi: f64) {
        if self.capacity == 0 {
            return;
        }
        let cand = Candidate { config, psi };
        if self.heap.len() < self.capacity {
            self.heap.push(Reverse(cand));
        } else if self.heap.peek().is_some_and(|Reverse(weakest)| cand > *weakest) {
            self.heap.pop();
            self.heap.push(Reverse(cand));
        }
    }

    /// Drains into a strongest-first list.
    pub fn into_sorted(self) -> Vec<Candidate> {
        let mut all: Vec<Candidate> = self.heap.into_iter().map(|Reverse(c)| c).collect();
        all.sort_unstable_by(|a, b| b.cmp(a));
        all
    }
}

/// Merges one batch into the running state, skipping entries already in S.
pub fn topk_update(state: &mut TopKState, batch: &AmplitudeVector, s: &SelectedSpace) {
    for (c, &psi) in batch.configs.iter().zip(&batch.psi) {
        if !s.contains(c) {
            state.offer(*c, psi);
        }
    }
}

/// Rayleigh-quotient energy of ψ restricted to S, accumulated from the
/// coupled record stream (`source_idx` indexes `s.configs`). Amplitudes for
/// every configuration in S must be present in `psi`.
pub fn evaluate_energy(
    records: &[CoupledRecord],
    s: &SelectedSpace,
    psi: &AmplitudeVector,
    ints: &IntegralStore,
) -> Result<f64, SolverError> {
    let psi_s: Vec<f64> = s
        .configs
        .iter()
        .map(|c| psi.lookup(c))
        .collect::<Option<Vec<f64>>>()
        .ok_or(SolverError::MissingAmplitude)?;
    let mut num = 0.0;
    let mut norm = 0.0;
    for (c, &p) in s.configs.iter().zip(&psi_s) {
        num += p * p * diagonal_element(c, ints);
        norm += p * p;
    }
    for r in records {
        if let Some(j) = s.position(&r.target) {
            num += psi_s[r.source_idx as usize] * r.element * psi_s[j];
        }
    }
    Ok(num / norm)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    pub iteration: usize,
    /// Subspace eigenvalue after this iteration's merge.
    pub energy: f64,
    /// Stage-3 Rayleigh-quotient evaluation of the pre-merge state.
    pub evaluated_energy: f64,
    pub s_size: usize,
    pub unique_size: usize,
    pub generated_records: u64,
    /// 1 − unique / generated.
    pub redundancy: f64,
    pub delta: f64,
    pub new_configs: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub m: usize,
    pub n_elec: usize,
    pub converged: bool,
    pub final_energy: f64,
    pub final_s_size: usize,
    pub reports: Vec<EnergyReport>,
    /// Timings are run-dependent; skipped so serialized reports stay
    /// byte-identical across identical runs.
    #[serde(skip)]
    pub traces: Vec<StageTrace>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    /// Candidates added per iteration (not a cap on |S|).
    pub topk: usize,
    pub eps_gen: f64,
    pub eps_table: f64,
    pub budget: MemoryBudget,
    pub ranks: usize,
    pub sample_count: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub overlap: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            topk: 100,
            eps_gen: 0.0,
            eps_table: 0.0,
            budget: MemoryBudget::from_mb(1024, 0),
            ranks: 4,
            sample_count: 32,
            max_iters: 20,
            tol: 1e-8,
            overlap: true,
        }
    }
}

struct SciDriver<'a> {
    s: &'a SelectedSpace,
    psi_s: &'a [f64],
    e: f64,
    ints: &'a IntegralStore,
    topk: TopKState,
    /// ψ over the unique set restricted to S (0 outside), by unique index.
    restricted: Vec<f64>,
}

impl PipelineDriver for SciDriver<'_> {
    fn stage2_batch(&mut self, offset: usize, batch: &[Configuration]) {
        debug_assert_eq!(offset, self.restricted.len());
        let est = estimate_amplitudes(batch, self.s, self.psi_s, self.e, self.ints);
        for (c, &psi) in batch.iter().zip(&est) {
            if let Some(i) = self.s.position(c) {
                self.restricted.push(self.psi_s[i]);
            } else {
                self.restricted.push(0.0);
                self.topk.offer(*c, psi);
            }
        }
    }

    fn stage3_batch(&mut self, records: &[CoupledRecord], unique_indices: &[usize]) -> f64 {
        records
            .iter()
            .zip(unique_indices)
            .map(|(r, &j)| self.psi_s[r.source_idx as usize] * r.element * self.restricted[j])
            .sum()
    }
}

/// Runs the full SCI loop from the Hartree-Fock reference. Stops after
/// three consecutive |ΔE| < tol, on saturation (no new candidates), or at
/// `max_iters`; `tol = ∞` runs exactly one iteration.
pub fn sci_iterate(
    ints: &IntegralStore,
    space: &OrbitalSpace,
    cfg: &RunConfig,
    spill_dir: Option<&Path>,
) -> Result<RunReport, SolverError> {
    let tables = build_tables(ints, space, cfg.eps_table);
    let mut s = SelectedSpace::from_reference(space);
    let (mut energy, mut psi_s) = subspace_eigensolve(&s, ints, space)?;
    let mut reports = Vec::new();
    let mut traces = Vec::new();
    let mut consecutive = 0;
    let mut converged = false;

    for iteration in 1..=cfg.max_iters {
        let mut store = match spill_dir {
            Some(dir) => SpillStore::in_dir(dir)?,
            None => SpillStore::in_memory(),
        };
        let pcfg = PipelineConfig {
            budget: cfg.budget,
            overlap: cfg.overlap,
            ranks: cfg.ranks,
            sample_count: cfg.sample_count,
            eps_gen: cfg.eps_gen,
        };
        let mut driver = SciDriver {
            s: &s,
            psi_s: &psi_s,
            e: energy,
            ints,
            topk: TopKState::new(cfg.topk),
            restricted: Vec::new(),
        };
        let result = run_pipeline(&s.configs, &tables, ints, space, &pcfg, &mut store, &mut driver)?;

        let mut diag = 0.0;
        let mut norm = 0.0;
        for (c, &p) in s.configs.iter().zip(&psi_s) {
            diag += p * p * diagonal_element(c, ints);
            norm += p * p;
        }
        let evaluated_energy = (diag + result.stage3_sum) / norm;

        let candidates: Vec<Configuration> =
            driver.topk.into_sorted().into_iter().map(|c| c.config).collect();
        let added = s.merge(&candidates);
        let (e_new, psi_new) = subspace_eigensolve(&s, ints, space)?;
        let delta = (e_new - energy).abs();
        energy = e_new;
        psi_s = psi_new;

        let redundancy = if result.generated_records == 0 {
            0.0
        } else {
            1.0 - result.unique.len() as f64 / result.generated_records as f64
        };
        reports.push(EnergyReport {
            iteration,
            energy,
            evaluated_energy,
            s_size: s.len(),
            unique_size: result.unique.len(),
            generated_records: result.generated_records,
            redundancy,
            delta,
            new_configs: added,
        });
        traces.push(result.trace);

        if cfg.tol.is_infinite() {
            converged = true;
            break;
        }
        consecutive = if delta < cfg.tol { consecutive + 1 } else { 0 };
        if consecutive >= 3 {
            converged = true;
            break;
        }
        if added == 0 {
            // Saturation: the coupled neighborhood of S is inside S.
            converged = true;
            break;
        }
    }

    Ok(RunReport {
        schema: 1,
        m: space.m,
        n_elec: space.n_elec,
        converged,
        final_energy: energy,
        final_s_size: s.len(),
        reports,
        traces,
    })
}
