//! Sort-based global de-duplication over logical ranks.
//!
//! Three steps per round: (1) each rank sorts and locally de-duplicates
//! its buffer, then draws pivots at regular intervals; (2) the root
//! gathers all samples, sorts them and broadcasts R-1 global splitters;
//! (3) every rank binary-searches its partition boundaries and the ranks
//! exchange partitions all-to-all, after which each rank merges its
//! received sorted runs and drops the remaining duplicates.
//!
//! Splitters partition the key space as: partition j holds keys k with
//! splitter_{j-1} <= k < splitter_j (lower-bound search), so keys equal to
//! a splitter land on one well-defined rank and the output slices are
//! mutually disjoint and ordered by rank.

use crate::conf::Configuration;
use std::time::Instant;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("need at least one rank")]
    NoRanks,
    #[error("rank ids must be 0..R in order, found {found} at position {position}")]
    BadRankId { found: usize, position: usize },
    #[error("sample count must be at least 1")]
    BadSampleCount,
}

/// One logical rank's key buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct RankBuffer {
    pub rank: usize,
    pub data: Vec<Configuration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitterSet {
    pub splitters: Vec<Configuration>,
}

/// Load-balance and throughput metrics of one de-duplication round.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BalanceMetrics {
    pub per_rank_counts: Vec<usize>,
    /// max/min of the per-rank output counts; infinite when a rank ends
    /// up empty (flagged degenerate).
    pub max_min_ratio: f64,
    pub degenerate: bool,
    /// Population coefficient of variation of the per-rank counts.
    pub cv: f64,
    pub throughput_items_per_sec: f64,
    /// Items that moved to a different rank in the all-to-all exchange.
    pub exchanged_items: usize,
    /// Total locally-unique items entering the exchange.
    pub local_unique_items: usize,
}

/// Pivots at indices k * len / s for k in 0..s.
pub fn regular_sample(sorted: &[Configuration], s: usize) -> Vec<Configuration> {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    if sorted.is_empty() {
        return Vec::new();
    }
    (0..s).map(|k| sorted[k * sorted.len() / s]).collect()
}

/// Sorts the gathered samples and takes R-1 equi-distant splitters.
pub fn compute_splitters(all_samples: &[Configuration], ranks: usize) -> SplitterSet {
    let mut samples = all_samples.to_vec();
    samples.sort_unstable();
    if ranks <= 1 || samples.is_empty() {
        return SplitterSet { splitters: Vec::new() };
    }
    let splitters = (1..ranks).map(|j| samples[j * samples.len() / ranks]).collect();
    SplitterSet { splitters }
}

/// Partition offsets of a sorted buffer under the splitter set:
/// offsets[j]..offsets[j+1] is the slice destined for rank j.
pub fn partition_bounds(sorted: &[Configuration], sp: &SplitterSet) -> Vec<usize> {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    let ranks = sp.splitters.len() + 1;
    let mut offsets = Vec::with_capacity(ranks + 1);
    offsets.push(0);
    for splitter in &sp.splitters {
        offsets.push(sorted.partition_point(|k| k < splitter));
    }
    offsets.push(sorted.len());
    offsets
}

fn sort_unique(mut data: Vec<Configuration>) -> Vec<Configuration> {
    data.sort_unstable();
    data.dedup();
    data
}

fn dedup_impl(
    buffers: Vec<RankBuffer>,
    sample_count: usize,
    parallel: bool,
) -> Result<(Vec<RankBuffer>, BalanceMetrics), DedupError> {
    if buffers.is_empty() {
        return Err(DedupError::NoRanks);
    }
    if sample_count == 0 {
        return Err(DedupError::BadSampleCount);
    }
    for (position, buf) in buffers.iter().enumerate() {
        if buf.rank != position {
            return Err(DedupError::BadRankId { found: buf.rank, position });
        }
    }
    let ranks = buffers.len();
    let total_in: usize = buffers.iter().map(|b| b.data.len()).sum();
    let started = Instant::now();

    // Step 1: local sort + unique, then regular sampling.
    let locals = map_ranks(buffers, parallel, |b| sort_unique(b.data));
    let local_unique_items: usize = locals.iter().map(Vec::len).sum();
    let mut all_samples = Vec::with_capacity(ranks * sample_count);
    for local in &locals {
        all_samples.extend(regular_sample(local, sample_count));
    }

    // Step 2: root computes splitters, broadcast.
    let splitters = compute_splitters(&all_samples, ranks);

    // Step 3: all-to-all exchange per partition bounds, then merge + unique.
    let bounds: Vec<Vec<usize>> =
        locals.iter().map(|local| partition_bounds(local, &splitters)).collect();
    let mut exchanged_items = 0;
    for (src, b) in bounds.iter().enumerate() {
        for dst in 0..ranks {
            if dst != src {
                exchanged_items += b[dst + 1] - b[dst];
            }
        }
    }
    let received: Vec<RankBuffer> = (0..ranks)
        .map(|dst| {
            let mut incoming = Vec::new();
            for (src, local) in locals.iter().enumerate() {
                incoming.extend_from_slice(&local[bounds[src][dst]..bounds[src][dst + 1]]);
            }
            RankBuffer { rank: dst, data: incoming }
        })
        .collect();
    let outputs: Vec<RankBuffer> = map_ranks(received, parallel, |b| sort_unique(b.data))
        .into_iter()
        .enumerate()
        .map(|(rank, data)| RankBuffer { rank, data })
        .collect();

    let counts: Vec<usize> = outputs.iter().map(|b| b.data.len()).collect();
    let mut metrics = balance_metrics(&counts, started.elapsed().as_secs_f64(), total_in);
    metrics.exchanged_items = exchanged_items;
    metrics.local_unique_items = local_unique_items;
    Ok((outputs, metrics))
}

fn map_ranks<T: Send, F: Fn(RankBuffer) -> T + Sync + Send>(
    buffers: Vec<RankBuffer>,
    parallel: bool,
    f: F,
) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if parallel {
        return buffers.into_par_iter().map(f).collect();
    }
    let _ = parallel;
    buffers.into_iter().map(f).collect()
}

/// Runs one full de-duplication round. Output slices are sorted, mutually
/// disjoint, ordered by rank, and their union is the deduplicated union of
/// all inputs.
pub fn run_distributed_dedup(
    buffers: Vec<RankBuffer>,
    sample_count: usize,
) -> Result<(Vec<RankBuffer>, BalanceMetrics), DedupError> {
    dedup_impl(buffers, sample_count, cfg!(feature = "parallel"))
}

/// Sequential variant, used as the feature-off fallback and as the
/// baseline in the benchmark suite.
pub fn run_distributed_dedup_serial(
    buffers: Vec<RankBuffer>,
    sample_count: usize,
) -> Result<(Vec<RankBuffer>, BalanceMetrics), DedupError> {
    dedup_impl(buffers, sample_count, false)
}

/// Computes balance metrics from per-rank output counts.
pub fn balance_metrics(counts: &[usize], elapsed_secs: f64, total_in: usize) -> BalanceMetrics {
    assert!(!counts.is_empty(), "counts must be non-empty");
    let max = *counts.iter().max().unwrap() as f64;
    let min = *counts.iter().min().unwrap() as f64;
    let degenerate = min == 0.0;
    let max_min_ratio = if degenerate { f64::INFINITY } else { max / min };
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let cv = if mean == 0.0 {
        0.0
    } else {
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>()
            / counts.len() as f64;
        var.sqrt() / mean
    };
    let throughput_items_per_sec =
        if elapsed_secs > 0.0 { total_in as f64 / elapsed_secs } else { f64::INFINITY };
    BalanceMetrics {
        per_rank_counts: counts.to_vec(),
        max_min_ratio,
        degenerate,
        cv,
        throughput_items_per_sec,
        exchanged_items: 0,
        local_unique_items: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{random_keys, KeyDistribution};
    use crate::oracle::naive_dedup;

    fn key(v: u64) -> Configuration {
        Configuration::from_words([v, 0])
    }

    #[test]
    fn regular_sample_fixed_intervals() {
        let data: Vec<_> = (0..8).map(key).collect();
        let sample = regular_sample(&data, 4);
        assert_eq!(sample, vec![key(0), key(2), key(4), key(6)]);
        // Short buffer: multiply-then-divide index rule, duplicates kept.
        let data: Vec<_> = (0..3).map(key).collect();
        assert_eq!(regular_sample(&data, 4), vec![key(0), key(0), key(1), key(2)]);
        assert!(regular_sample(&[], 4).is_empty());
    }

    #[test]
    fn splitters_from_sorted_samples() {
        let samples: Vec<_> = (1..=8).map(key).collect();
        let sp = compute_splitters(&samples, 2);
        assert_eq!(sp.splitters, vec![key(5)]);
        assert!(compute_splitters(&samples, 1).splitters.is_empty());
        let same = vec![key(7); 6];
        let sp = compute_splitters(&same, 3);
        assert_eq!(sp.splitters, vec![key(7), key(7)]);
    }

    #[test]
    fn partition_bounds_lower_bound_rule() {
        let data: Vec<_> = (1..=4).map(key).collect();
        let sp = SplitterSet { splitters: vec![key(3)] };
        assert_eq!(partition_bounds(&data, &sp), vec![0, 2, 4]);
        assert_eq!(partition_bounds(&[], &sp), vec![0, 0, 0]);
        let low: Vec<_> = (0..3).map(key).collect();
        let sp = SplitterSet { splitters: vec![key(10)] };
        assert_eq!(partition_bounds(&low, &sp), vec![0, 3, 3]);
    }

    #[test]
    fn dedup_small_example() {
        let (a, b, c) = (key(1), key(2), key(3));
        let buffers = vec![
            RankBuffer { rank: 0, data: vec![a, b, b] },
            RankBuffer { rank: 1, data: vec![b, c] },
        ];
        let (out, _) = run_distributed_dedup(buffers, 2).unwrap();
        let union: Vec<_> = out.iter().flat_map(|r| r.data.iter().copied()).collect();
        assert_eq!(union, vec![a, b, c]);
    }

    #[test]
    fn single_rank_is_sort_unique() {
        let data = vec![key(5), key(1), key(5), key(2)];
        let buffers = vec![RankBuffer { rank: 0, data: data.clone() }];
        let (out, _) = run_distributed_dedup(buffers, 4).unwrap();
        assert_eq!(out[0].data, naive_dedup(&[data]));
    }

    #[test]
    fn random_rounds_match_oracle_and_stay_disjoint() {
        for ranks in [2usize, 4, 8] {
            let keys = random_keys(20_000, KeyDistribution::Zipf(1.1), 7);
            let per = keys.len() / ranks;
            let buffers: Vec<_> = (0..ranks)
                .map(|r| RankBuffer { rank: r, data: keys[r * per..(r + 1) * per].to_vec() })
                .collect();
            let inputs: Vec<Vec<_>> = buffers.iter().map(|b| b.data.clone()).collect();
            let (out, metrics) = run_distributed_dedup(buffers, 64).unwrap();

            let union: Vec<_> = out.iter().flat_map(|r| r.data.iter().copied()).collect();
            assert_eq!(union, naive_dedup(&inputs));
            for pair in out.windows(2) {
                if let (Some(last), Some(first)) = (pair[0].data.last(), pair[1].data.first()) {
                    assert!(last < first);
                }
            }
            assert!(metrics.exchanged_items <= metrics.local_unique_items);
        }
    }

    #[test]
    fn deterministic_and_matches_serial() {
        let keys = random_keys(5_000, KeyDistribution::Uniform, 3);
        let make = || {
            vec![
                RankBuffer { rank: 0, data: keys[..2500].to_vec() },
                RankBuffer { rank: 1, data: keys[2500..].to_vec() },
            ]
        };
        let (a, _) = run_distributed_dedup(make(), 64).unwrap();
        let (b, _) = run_distributed_dedup(make(), 64).unwrap();
        let (c, _) = run_distributed_dedup_serial(make(), 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn balance_metrics_examples() {
        let m = balance_metrics(&[100, 100, 100, 100], 1.0, 400);
        assert_eq!(m.max_min_ratio, 1.0);
        assert_eq!(m.cv, 0.0);
        assert!(!m.degenerate);

        let m = balance_metrics(&[90, 110], 2.0, 200);
        assert!((m.max_min_ratio - 110.0 / 90.0).abs() < 1e-12);
        assert!((m.cv - 0.1).abs() < 1e-12);
        assert!((m.throughput_items_per_sec - 100.0).abs() < 1e-12);

        let m = balance_metrics(&[0, 10], 1.0, 10);
        assert!(m.degenerate);
        assert!(m.max_min_ratio.is_infinite());
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert_eq!(run_distributed_dedup(vec![], 4).unwrap_err(), DedupError::NoRanks);
        let buffers = vec![RankBuffer { rank: 1, data: vec![] }];
        assert!(matches!(
            run_distributed_dedup(buffers, 4).unwrap_err(),
            DedupError::BadRankId { .. }
        ));
        let buffers = vec![RankBuffer { rank: 0, data: vec![] }];
        assert_eq!(run_distributed_dedup(buffers, 0).unwrap_err(), DedupError::BadSampleCount);
    }
}
