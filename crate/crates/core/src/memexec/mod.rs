//! Budgeted, staged, double-buffered batch execution with a spill store.
//!
//! The pipeline is a fixed 3-stage macro-pipeline with two global barriers:
//! Stage 1 generates the coupled stream batch by batch, spilling the raw
//! records while retaining locally-unique targets; barrier 1 runs the
//! distributed de-duplication; Stage 2 streams the unique set back in
//! batches for amplitude work; barrier 2 seals the amplitude vector;
//! Stage 3 streams the spill segments back, builds a just-in-time reverse
//! index per batch and accumulates the caller's per-batch contributions.
//!
//! Peak working memory is reserved + 3 × B_size × item_bytes: at most one
//! batch in prefetch, one in compute and one in writeback at any time.
//! Overlap (prefetch of batch i+1 and writeback of batch i−1 alongside
//! compute of batch i) changes timings only — results are byte-identical
//! with overlap disabled, because batch order and intra-batch order are
//! fixed.

mod spill;

pub use spill::{SegmentId, SpillStore, SEGMENT_HEADER_BYTES, SPILL_MAGIC};

use crate::conf::{Configuration, OrbitalSpace};
use crate::distdedup::{run_distributed_dedup, BalanceMetrics, DedupError, RankBuffer};
use crate::genkernel::{
    generate_coupled, local_unique, virtual_space, CoupledRecord, GenError, RECORD_BYTES,
};
use crate::hamiltonian::{ExcitationTables, IntegralStore};
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::time::Instant;
use thiserror::Error;

/// Live batch buffers per stream under double buffering: writeback of
/// batch i−1, compute of batch i, prefetch of batch i+1.
pub const BUFFER_MULTIPLICITY: usize = 3;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("budget {budget_bytes} B does not exceed reserved {reserved_bytes} B")]
    BadBudget { budget_bytes: u64, reserved_bytes: u64 },
    #[error("budget infeasible: one item needs {needed} B of the {available} B available")]
    BudgetInfeasible { needed: u64, available: u64 },
    #[error("spill I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("spill segment corrupt: {0}")]
    SpillCorrupt(String),
    #[error("batch target missing from unique set (upstream dedup bug)")]
    TargetNotInUnique,
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct MemoryBudget {
    pub budget_bytes: u64,
    /// Integrals, tables and other fixed buffers outside batch streams.
    pub reserved_bytes: u64,
}

impl MemoryBudget {
    pub fn from_mb(budget_mb: u64, reserved_bytes: u64) -> Self {
        MemoryBudget { budget_bytes: budget_mb * 1024 * 1024, reserved_bytes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub batch_count: usize,
    pub item_bytes: usize,
    pub n_items: usize,
}

impl BatchPlan {
    pub fn range(&self, batch: usize) -> Range<usize> {
        let lo = batch * self.batch_size;
        lo..((batch + 1) * self.batch_size).min(self.n_items)
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.batch_count).map(|b| self.range(b))
    }
}

/// Largest feasible B_size under peak = reserved + 3·B_size·item_bytes.
pub fn plan_batches(
    n_items: usize,
    item_bytes: usize,
    budget: &MemoryBudget,
) -> Result<BatchPlan, ExecError> {
    if budget.budget_bytes <= budget.reserved_bytes {
        return Err(ExecError::BadBudget {
            budget_bytes: budget.budget_bytes,
            reserved_bytes: budget.reserved_bytes,
        });
    }
    let available = budget.budget_bytes - budget.reserved_bytes;
    let needed = BUFFER_MULTIPLICITY as u64 * item_bytes as u64;
    if needed > available {
        return Err(ExecError::BudgetInfeasible { needed, available });
    }
    let feasible = if item_bytes == 0 {
        usize::MAX
    } else {
        (available / (BUFFER_MULTIPLICITY as u64 * item_bytes as u64)) as usize
    };
    let batch_size = feasible.min(n_items).max(1);
    Ok(BatchPlan { batch_size, batch_count: n_items.div_ceil(batch_size), item_bytes, n_items })
}

/// Allocator probe for the working-buffer streams.
#[derive(Debug, Default)]
pub struct MemoryMeter {
    current: AtomicU64,
    peak: AtomicU64,
}

impl MemoryMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn acquire(&self, bytes: u64) {
        let now = self.current.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn release(&self, bytes: u64) {
        self.current.fetch_sub(bytes, Ordering::SeqCst);
    }

    pub fn current(&self) -> u64 {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum Lane {
    Load,
    Compute,
    Writeback,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TraceEvent {
    pub stage: u8,
    pub batch: usize,
    pub lane: Lane,
    pub start_secs: f64,
    pub end_secs: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StageTrace {
    pub events: Vec<TraceEvent>,
    /// reserved + metered working-buffer peak.
    pub peak_resident_bytes: u64,
    pub budget_bytes: u64,
    pub overlap: bool,
    /// Set when the run had nothing to do (empty source set).
    pub degenerate: bool,
}

/// Position of every batch target in the sorted unique list.
pub fn jit_reverse_index(
    batch: &[CoupledRecord],
    unique_sorted: &[Configuration],
) -> Result<Vec<usize>, ExecError> {
    batch
        .iter()
        .map(|r| unique_sorted.binary_search(&r.target).map_err(|_| ExecError::TargetNotInUnique))
        .collect()
}

/// Per-iteration hooks supplied by the solver layer.
pub trait PipelineDriver {
    /// Stage 2: one batch of the globally-unique set, starting at `offset`
    /// in the sorted unique list.
    fn stage2_batch(&mut self, offset: usize, batch: &[Configuration]);

    /// Stage 3: one spilled batch plus its reverse indices into the unique
    /// list; returns the batch's partial accumulation. Partials are summed
    /// in batch-index order.
    fn stage3_batch(&mut self, records: &[CoupledRecord], unique_indices: &[usize]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub budget: MemoryBudget,
    pub overlap: bool,
    pub ranks: usize,
    pub sample_count: usize,
    pub eps_gen: f64,
}

pub struct PipelineResult {
    pub unique: Vec<Configuration>,
    pub generated_records: u64,
    /// Sum of the driver's Stage 3 partials, in deterministic order.
    pub stage3_sum: f64,
    pub dedup_metrics: Option<BalanceMetrics>,
    pub trace: StageTrace,
}

fn split_into_ranks(targets: Vec<Configuration>, ranks: usize) -> Vec<RankBuffer> {
    let base = targets.len() / ranks;
    let rem = targets.len() % ranks;
    let mut out = Vec::with_capacity(ranks);
    let mut cursor = 0;
    for rank in 0..ranks {
        let take = base + usize::from(rank < rem);
        out.push(RankBuffer { rank, data: targets[cursor..cursor + take].to_vec() });
        cursor += take;
    }
    out
}

struct Clock {
    start: Instant,
}

impl Clock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

fn event(stage: u8, batch: usize, lane: Lane, start: f64, end: f64) -> TraceEvent {
    TraceEvent { stage, batch, lane, start_secs: start, end_secs: end }
}

/// Runs one full expand → dedup → estimate → accumulate round under the
/// budget. The caller owns amplitude state through the driver hooks.
pub fn run_pipeline<D: PipelineDriver>(
    sources: &[Configuration],
    tables: &ExcitationTables,
    ints: &IntegralStore,
    space: &OrbitalSpace,
    cfg: &PipelineConfig,
    store: &mut SpillStore,
    driver: &mut D,
) -> Result<PipelineResult, ExecError> {
    assert!(cfg.ranks >= 1, "need at least one logical rank");
    let clock = Clock { start: Instant::now() };
    let meter = MemoryMeter::new();
    let mut events = Vec::new();

    if sources.is_empty() {
        return Ok(PipelineResult {
            unique: Vec::new(),
            generated_records: 0,
            stage3_sum: 0.0,
            dedup_metrics: None,
            trace: StageTrace {
                events,
                peak_resident_bytes: cfg.budget.reserved_bytes,
                budget_bytes: cfg.budget.budget_bytes,
                overlap: cfg.overlap,
                degenerate: true,
            },
        });
    }

    // Stage 1: generate + local unique, spilling records per batch.
    let vs = virtual_space(space, tables);
    let item1 = (vs.total() as usize).max(1) * RECORD_BYTES;
    let plan1 = plan_batches(sources.len(), item1, &cfg.budget)?;
    let first_segment = store.segment_count();
    let mut local_targets: Vec<Configuration> = Vec::new();
    let mut generated_records = 0u64;

    let gen_batch = |batch: usize| -> Result<Vec<CoupledRecord>, ExecError> {
        let range = plan1.range(batch);
        let base = range.start as u64;
        let mut records =
            generate_coupled(&sources[range], tables, ints, space, cfg.eps_gen, 256)?;
        for r in &mut records {
            r.source_idx += base;
        }
        Ok(records)
    };

    if cfg.overlap {
        let writer_events = std::thread::scope(
            |scope| -> Result<Vec<TraceEvent>, ExecError> {
                let (tx, rx) = mpsc::sync_channel::<(usize, Vec<CoupledRecord>)>(1);
                let store = &mut *store;
                let meter_ref = &meter;
                let clock_ref = &clock;
                let writer = scope.spawn(move || -> Result<Vec<TraceEvent>, ExecError> {
                    let mut evs = Vec::new();
                    while let Ok((batch, records)) = rx.recv() {
                        let t0 = clock_ref.now();
                        store.seal_segment(&records)?;
                        meter_ref.release((records.len() * RECORD_BYTES) as u64);
                        evs.push(event(1, batch, Lane::Writeback, t0, clock_ref.now()));
                    }
                    Ok(evs)
                });
                for batch in 0..plan1.batch_count {
                    let t0 = clock.now();
                    let records = gen_batch(batch)?;
                    meter.acquire((records.len() * RECORD_BYTES) as u64);
                    generated_records += records.len() as u64;
                    local_targets.extend(local_unique(&records));
                    events.push(event(1, batch, Lane::Compute, t0, clock.now()));
                    if tx.send((batch, records)).is_err() {
                        break; // writer died; its join reports the error
                    }
                }
                drop(tx);
                writer.join().expect("writeback thread panicked")
            },
        )?;
        events.extend(writer_events);
    } else {
        for batch in 0..plan1.batch_count {
            let t0 = clock.now();
            let records = gen_batch(batch)?;
            meter.acquire((records.len() * RECORD_BYTES) as u64);
            generated_records += records.len() as u64;
            local_targets.extend(local_unique(&records));
            let t1 = clock.now();
            events.push(event(1, batch, Lane::Compute, t0, t1));
            store.seal_segment(&records)?;
            meter.release((records.len() * RECORD_BYTES) as u64);
            events.push(event(1, batch, Lane::Writeback, t1, clock.now()));
        }
    }

    // Barrier 1: global de-duplication across logical ranks.
    let buffers = split_into_ranks(local_targets, cfg.ranks);
    let (deduped, metrics) = run_distributed_dedup(buffers, cfg.sample_count.max(1))?;
    let unique: Vec<Configuration> =
        deduped.into_iter().flat_map(|b| b.data.into_iter()).collect();

    // Stage 2: stream the unique set back in batches.
    let item2 = std::mem::size_of::<Configuration>() + 8;
    let plan2 = plan_batches(unique.len(), item2, &cfg.budget)?;
    for batch in 0..plan2.batch_count {
        let range = plan2.range(batch);
        let t0 = clock.now();
        driver.stage2_batch(range.start, &unique[range]);
        events.push(event(2, batch, Lane::Compute, t0, clock.now()));
    }

    // Barrier 2 is implicit: driver state is sealed before Stage 3 starts.

    // Stage 3: stream spill segments back, JIT reverse index, accumulate.
    let segment_ids: Vec<SegmentId> =
        (first_segment..store.segment_count()).map(SegmentId).collect();
    let mut stage3_sum = 0.0;

    let consume = |batch: usize,
                   records: Vec<CoupledRecord>,
                   driver: &mut D,
                   events: &mut Vec<TraceEvent>,
                   clock: &Clock,
                   meter: &MemoryMeter|
     -> Result<f64, ExecError> {
        let t0 = clock.now();
        let indices = jit_reverse_index(&records, &unique)?;
        let partial = driver.stage3_batch(&records, &indices);
        meter.release((records.len() * RECORD_BYTES) as u64);
        events.push(event(3, batch, Lane::Compute, t0, clock.now()));
        Ok(partial)
    };

    if cfg.overlap {
        let store_ref = &*store;
        let partial_sum = std::thread::scope(|scope| -> Result<f64, ExecError> {
            let (tx, rx) =
                mpsc::sync_channel::<(usize, Result<Vec<CoupledRecord>, ExecError>, f64, f64)>(1);
            let meter_ref = &meter;
            let clock_ref = &clock;
            let ids = segment_ids.clone();
            scope.spawn(move || {
                for (batch, id) in ids.into_iter().enumerate() {
                    let t0 = clock_ref.now();
                    let loaded = store_ref.read_segment(id);
                    if let Ok(records) = &loaded {
                        meter_ref.acquire((records.len() * RECORD_BYTES) as u64);
                    }
                    let t1 = clock_ref.now();
                    if tx.send((batch, loaded, t0, t1)).is_err() {
                        break;
                    }
                }
            });
            let mut sum = 0.0;
            while let Ok((batch, loaded, t0, t1)) = rx.recv() {
                events.push(event(3, batch, Lane::Load, t0, t1));
                sum += consume(batch, loaded?, driver, &mut events, &clock, &meter)?;
            }
            Ok(sum)
        })?;
        stage3_sum = partial_sum;
    } else {
        for (batch, id) in segment_ids.iter().enumerate() {
            let t0 = clock.now();
            let records = store.read_segment(*id)?;
            meter.acquire((records.len() * RECORD_BYTES) as u64);
            events.push(event(3, batch, Lane::Load, t0, clock.now()));
            stage3_sum += consume(batch, records, driver, &mut events, &clock, &meter)?;
        }
    }

    events.sort_by(|a, b| {
        (a.stage, a.batch, a.lane).cmp(&(b.stage, b.batch, b.lane))
    });
    let peak_resident_bytes = cfg.budget.reserved_bytes + meter.peak();
    assert!(
        peak_resident_bytes <= cfg.budget.budget_bytes,
        "budget violated: peak {} B > budget {} B (planning bug)",
        peak_resident_bytes,
        cfg.budget.budget_bytes
    );
    Ok(PipelineResult {
        unique,
        generated_records,
        stage3_sum,
        dedup_metrics: Some(metrics),
        trace: StageTrace {
            events,
            peak_resident_bytes,
            budget_bytes: cfg.budget.budget_bytes,
            overlap: cfg.overlap,
            degenerate: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conf::make_config;
    use crate::fixture::gen_fixture_store;
    use crate::hamiltonian::build_tables;
    use crate::oracle::{enumerate_sector, naive_coupled, naive_dedup};

    #[test]
    fn plan_splits_with_ceiling() {
        let budget = MemoryBudget { budget_bytes: 1000, reserved_bytes: 100 };
        // available 900, item 75 → B_size = 900 / 225 = 4.
        let plan = plan_batches(10, 75, &budget).unwrap();
        assert_eq!(plan.batch_size, 4);
        assert_eq!(plan.batch_count, 3);
        let sizes: Vec<usize> = plan.ranges().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn huge_budget_is_one_batch() {
        let budget = MemoryBudget { budget_bytes: u64::MAX, reserved_bytes: 0 };
        let plan = plan_batches(10, 100, &budget).unwrap();
        assert_eq!(plan.batch_size, 10);
        assert_eq!(plan.batch_count, 1);
    }

    #[test]
    fn infeasible_budgets_error() {
        let budget = MemoryBudget { budget_bytes: 1000, reserved_bytes: 100 };
        assert!(matches!(
            plan_batches(10, 400, &budget),
            Err(ExecError::BudgetInfeasible { needed: 1200, available: 900 })
        ));
        let budget = MemoryBudget { budget_bytes: 100, reserved_bytes: 100 };
        assert!(matches!(plan_batches(1, 1, &budget), Err(ExecError::BadBudget { .. })));
    }

    #[test]
    fn zero_items_plan_has_no_batches() {
        let budget = MemoryBudget { budget_bytes: 1000, reserved_bytes: 0 };
        let plan = plan_batches(0, 8, &budget).unwrap();
        assert_eq!(plan.batch_count, 0);
        assert!(plan.batch_size >= 1);
    }

    #[test]
    fn meter_tracks_peak() {
        let m = MemoryMeter::new();
        m.acquire(10);
        m.acquire(30);
        m.release(10);
        m.acquire(5);
        assert_eq!(m.current(), 35);
        assert_eq!(m.peak(), 40);
    }

    fn key(v: u64) -> Configuration {
        Configuration::from_words([v, 0])
    }

    #[test]
    fn reverse_index_identity_and_repeats() {
        let unique: Vec<_> = (0..6).map(key).collect();
        let rec = |t: u64| CoupledRecord { source_idx: 0, target: key(t), element: 1.0 };
        let batch: Vec<_> = (0..6).map(rec).collect();
        assert_eq!(jit_reverse_index(&batch, &unique).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        let batch = vec![rec(4), rec(4), rec(1)];
        assert_eq!(jit_reverse_index(&batch, &unique).unwrap(), vec![4, 4, 1]);
        let missing = vec![rec(99)];
        assert!(matches!(
            jit_reverse_index(&missing, &unique),
            Err(ExecError::TargetNotInUnique)
        ));
    }

    #[test]
    fn reverse_index_matches_linear_scan() {
        let unique: Vec<_> = (0..50).map(|v| key(v * 3)).collect();
        let batch: Vec<_> = [42u64, 0, 147, 9, 9]
            .iter()
            .map(|&t| CoupledRecord { source_idx: 0, target: key(t), element: 0.0 })
            .collect();
        let got = jit_reverse_index(&batch, &unique).unwrap();
        let want: Vec<usize> = batch
            .iter()
            .map(|r| unique.iter().position(|u| *u == r.target).unwrap())
            .collect();
        assert_eq!(got, want);
    }

    /// Driver whose Stage 3 partial is index-weighted so reverse-index or
    /// ordering mistakes change the sum.
    struct SumDriver {
        seen: Vec<Configuration>,
    }

    impl PipelineDriver for SumDriver {
        fn stage2_batch(&mut self, offset: usize, batch: &[Configuration]) {
            assert_eq!(offset, self.seen.len());
            self.seen.extend_from_slice(batch);
        }
        fn stage3_batch(&mut self, records: &[CoupledRecord], idx: &[usize]) -> f64 {
            records
                .iter()
                .zip(idx)
                .map(|(r, &i)| r.element * (i as f64 + 1.0))
                .sum()
        }
    }

    fn run_case(budget: MemoryBudget, overlap: bool, file_backed: bool) -> (PipelineResult, Vec<Configuration>) {
        let (ints, space) = gen_fixture_store(13, 10, 4, 0.7);
        let tables = build_tables(&ints, &space, 0.0);
        let sources: Vec<_> = enumerate_sector(&space).into_iter().take(40).collect();
        let cfg = PipelineConfig { budget, overlap, ranks: 4, sample_count: 8, eps_gen: 0.0 };
        let dir = tempfile::tempdir().unwrap();
        let mut store =
            if file_backed { SpillStore::in_dir(dir.path()).unwrap() } else { SpillStore::in_memory() };
        let mut driver = SumDriver { seen: Vec::new() };
        let result =
            run_pipeline(&sources, &tables, &ints, &space, &cfg, &mut store, &mut driver).unwrap();
        (result, driver.seen)
    }

    fn working_budget() -> (MemoryBudget, MemoryBudget) {
        // One in-core budget and one forcing several batches per stage.
        let (ints, space) = gen_fixture_store(13, 10, 4, 0.7);
        let tables = build_tables(&ints, &space, 0.0);
        let vs = virtual_space(&space, &tables);
        let item1 = vs.total() as u64 * RECORD_BYTES as u64;
        let in_core = MemoryBudget { budget_bytes: 1 << 40, reserved_bytes: 0 };
        let tight = MemoryBudget { budget_bytes: 3 * item1 * 5, reserved_bytes: 0 };
        (in_core, tight)
    }

    #[test]
    fn out_of_core_matches_in_core() {
        let (in_core, tight) = working_budget();
        let (a, seen_a) = run_case(in_core, false, false);
        let (b, seen_b) = run_case(tight, false, true);
        assert_eq!(a.unique, b.unique);
        assert_eq!(a.generated_records, b.generated_records);
        assert!((a.stage3_sum - b.stage3_sum).abs() < 1e-12);
        assert_eq!(seen_a, seen_b);
        assert!(b.trace.events.iter().filter(|e| e.stage == 1 && e.lane == Lane::Compute).count() > 1);
    }

    #[test]
    fn overlap_changes_timings_only() {
        let (_, tight) = working_budget();
        let (a, seen_a) = run_case(tight, false, true);
        let (b, seen_b) = run_case(tight, true, true);
        assert_eq!(a.unique, b.unique);
        assert_eq!(a.stage3_sum, b.stage3_sum);
        assert_eq!(seen_a, seen_b);
        assert!(b.trace.overlap && !a.trace.overlap);
    }

    #[test]
    fn unique_set_matches_naive_oracle() {
        let (in_core, _) = working_budget();
        let (result, seen) = run_case(in_core, false, false);
        let (ints, space) = gen_fixture_store(13, 10, 4, 0.7);
        let sources: Vec<_> = enumerate_sector(&space).into_iter().take(40).collect();
        let mut all = Vec::new();
        for c in &sources {
            all.extend(naive_coupled(c, &ints, &space, 0.0).into_iter().map(|(t, _)| t));
        }
        assert_eq!(result.unique, naive_dedup(&[all]));
        assert_eq!(seen, result.unique);
    }

    #[test]
    fn trace_peak_within_budget() {
        let (_, tight) = working_budget();
        for overlap in [false, true] {
            let (result, _) = run_case(tight, overlap, true);
            assert!(result.trace.peak_resident_bytes <= result.trace.budget_bytes);
            assert!(result.trace.peak_resident_bytes > 0);
        }
    }

    #[test]
    fn empty_sources_degenerate() {
        let (ints, space) = gen_fixture_store(13, 10, 4, 0.7);
        let tables = build_tables(&ints, &space, 0.0);
        let cfg = PipelineConfig {
            budget: MemoryBudget { budget_bytes: 1 << 30, reserved_bytes: 0 },
            overlap: false,
            ranks: 2,
            sample_count: 4,
            eps_gen: 0.0,
        };
        let mut store = SpillStore::in_memory();
        let mut driver = SumDriver { seen: Vec::new() };
        let result =
            run_pipeline(&[], &tables, &ints, &space, &cfg, &mut store, &mut driver).unwrap();
        assert!(result.trace.degenerate);
        assert!(result.unique.is_empty());
        assert_eq!(result.generated_records, 0);
        assert_eq!(result.stage3_sum, 0.0);
    }

    #[test]
    fn single_source_reference_only() {
        let (ints, space) = gen_fixture_store(13, 8, 3, 0.9);
        let tables = build_tables(&ints, &space, 0.0);
        let sources = vec![make_config(&[0, 1, 2], &space).unwrap()];
        let cfg = PipelineConfig {
            budget: MemoryBudget { budget_bytes: 1 << 30, reserved_bytes: 0 },
            overlap: true,
            ranks: 3,
            sample_count: 4,
            eps_gen: 0.0,
        };
        let mut store = SpillStore::in_memory();
        let mut driver = SumDriver { seen: Vec::new() };
        let result =
            run_pipeline(&sources, &tables, &ints, &space, &cfg, &mut store, &mut driver).unwrap();
        let expected: Vec<_> =
            naive_coupled(&sources[0], &ints, &space, 0.0).into_iter().map(|(t, _)| t).collect();
        assert_eq!(result.unique, naive_dedup(&[expected]));
    }
}
