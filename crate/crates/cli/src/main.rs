//! `sci` — command-line surface over the SCI engine.
//!
//! Batch-only: every subcommand reads its inputs, writes JSON (and
//! optionally CSV) and exits. Exit codes: 0 success, 1 generic failure,
//! 2 bad usage (clap), 3 missing input file, 4 infeasible memory budget.

use clap::{Parser, Subcommand};
use sci_core::conf::hilbert_dimension;
use sci_core::distdedup::{run_distributed_dedup, RankBuffer};
use sci_core::fixture::{gen_fixture, random_keys, KeyDistribution};
use sci_core::genkernel::{generate_coupled, local_unique};
use sci_core::hamiltonian::{
    build_tables, dump_tables, parse_fcidump, table_footprint, HamError, IntegralStore,
};
use sci_core::memexec::{ExecError, MemoryBudget};
use sci_core::oracle::{enumerate_sector, fci_energy};
use sci_core::solver::{sci_iterate, RunConfig, SolverError};
use sci_core::conf::OrbitalSpace;
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sci", version, about = "Deterministic memory-budgeted SCI engine")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the SCI loop on an FCIDUMP file.
    Solve(SolveArgs),
    /// Exact full-CI energy of an FCIDUMP file (small systems).
    Fci(FciArgs),
    /// Distributed de-duplication micro-benchmark.
    DedupBench(DedupBenchArgs),
    /// Coupled-generation micro-benchmark on a random fixture.
    GenBench(GenBenchArgs),
    /// Build excitation tables and report their footprint.
    Tables(TablesArgs),
    /// Emit a deterministic random-integral FCIDUMP fixture.
    GenFixture(GenFixtureArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    fcidump: PathBuf,
    /// Candidates merged into S per iteration.
    #[arg(long, default_value_t = 100)]
    topk: usize,
    #[arg(long, default_value_t = 0.0)]
    eps_gen: f64,
    #[arg(long, default_value_t = 0.0)]
    eps_table: f64,
    #[arg(long, default_value_t = 4)]
    ranks: usize,
    /// Regular-sampling pivots per rank.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 1024)]
    budget_mb: u64,
    /// Spill to files under this directory instead of host memory.
    #[arg(long)]
    spill_dir: Option<PathBuf>,
    /// Disable prefetch/writeback overlap (results are identical).
    #[arg(long)]
    no_overlap: bool,
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write per-iteration CSV rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FciArgs {
    #[arg(long)]
    fcidump: PathBuf,
}

#[derive(clap::Args)]
struct DedupBenchArgs {
    #[arg(long, default_value_t = 4)]
    ranks: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 1_000_000)]
    keys: usize,
    /// Key distribution: `uniform` or `zipf:THETA`.
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(clap::Args)]
struct GenBenchArgs {
    #[arg(long, default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 6)]
    n_elec: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Number of source configurations (taken from the sector head).
    #[arg(long, default_value_t = 512)]
    sources: usize,
    #[arg(long, default_value_t = 0.0)]
    eps_gen: f64,
    #[arg(long, default_value_t = 64)]
    chunk: usize,
}

#[derive(clap::Args)]
struct TablesArgs {
    #[arg(long)]
    fcidump: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    eps_table: f64,
    /// Dump the padded tables as a binary blob.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenFixtureArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n_elec: usize,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    MissingFile(PathBuf),
    InfeasibleBudget(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingFile(_) => 3,
            CliError::InfeasibleBudget(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::MissingFile(p) => format!("error: missing file: {}", p.display()),
            CliError::InfeasibleBudget(msg) => format!("error: infeasible budget: {msg}"),
            CliError::Other(msg) => format!("error: {msg}"),
        }
    }
}

impl From<HamError> for CliError {
    fn from(e: HamError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Exec(exec) => exec.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::BudgetInfeasible { .. } | ExecError::BadBudget { .. } => {
                CliError::InfeasibleBudget(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

fn open_fcidump(path: &PathBuf) -> Result<(IntegralStore, OrbitalSpace), CliError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile(path.clone())
        } else {
            CliError::Other(format!("{}: {e}", path.display()))
        }
    })?;
    Ok(parse_fcidump(BufReader::new(file))?)
}

fn write_output(path: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Other(format!("{}: {e}", p.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let (ints, space) = open_fcidump(&args.fcidump)?;
    let cfg = RunConfig {
        topk: args.topk,
        eps_gen: args.eps_gen,
        eps_table: args.eps_table,
        budget: MemoryBudget::from_mb(args.budget_mb, 0),
        ranks: args.ranks,
        sample_count: args.samples,
        max_iters: args.max_iters,
        tol: args.tol,
        overlap: !args.no_overlap,
    };
    let run = sci_iterate(&ints, &space, &cfg, args.spill_dir.as_deref())?;
    let json = serde_json::to_string_pretty(&run)
        .map_err(|e| CliError::Other(e.to_string()))?;
    write_output(args.report.as_ref(), &json)?;
    if let Some(csv_path) = &args.csv {
        let mut csv = String::from("iteration,energy,s_size,unique,redundancy\n");
        for r in &run.reports {
            writeln!(
                csv,
                "{},{:.12},{},{},{:.6}",
                r.iteration, r.energy, r.s_size, r.unique_size, r.redundancy
            )
            .unwrap();
        }
        write_output(Some(csv_path), &csv)?;
    }
    Ok(())
}

fn cmd_fci(args: &FciArgs) -> Result<(), CliError> {
    let (ints, space) = open_fcidump(&args.fcidump)?;
    let solution =
        fci_energy(&ints, &space).map_err(|e| CliError::Other(e.to_string()))?;
    println!(
        "{}",
        serde_json::json!({
            "energy": solution.energy,
            "dimension": hilbert_dimension(&space).to_string(),
        })
    );
    Ok(())
}

fn parse_dist(s: &str) -> Result<KeyDistribution, CliError> {
    if s == "uniform" {
        return Ok(KeyDistribution::Uniform);
    }
    if let Some(theta) = s.strip_prefix("zipf:") {
        let theta: f64 = theta
            .parse()
            .map_err(|_| CliError::Other(format!("bad zipf parameter in --dist {s}")))?;
        return Ok(KeyDistribution::Zipf(theta));
    }
    Err(CliError::Other(format!("unknown --dist {s} (expected uniform or zipf:THETA)")))
}

fn cmd_dedup_bench(args: &DedupBenchArgs) -> Result<(), CliError> {
    let dist = parse_dist(&args.dist)?;
    let keys = random_keys(args.keys, dist, args.seed);
    let per = args.keys / args.ranks.max(1);
    let buffers: Vec<RankBuffer> = (0..args.ranks)
        .map(|r| {
            let hi = if r + 1 == args.ranks { keys.len() } else { (r + 1) * per };
            RankBuffer { rank: r, data: keys[r * per..hi].to_vec() }
        })
        .collect();
    let (_, metrics) = run_distributed_dedup(buffers, args.samples)
        .map_err(|e| CliError::Other(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Other(e.to_string()))?
    );
    Ok(())
}

fn cmd_gen_bench(args: &GenBenchArgs) -> Result<(), CliError> {
    let (ints, space) =
        sci_core::fixture::gen_fixture_store(args.seed, args.m, args.n_elec, args.density);
    let tables = build_tables(&ints, &space, 0.0);
    let sources: Vec<_> = enumerate_sector(&space).into_iter().take(args.sources).collect();
    let started = Instant::now();
    let records = generate_coupled(&sources, &tables, &ints, &space, args.eps_gen, args.chunk)
        .map_err(|e| CliError::Other(e.to_string()))?;
    let elapsed = started.elapsed().as_secs_f64();
    let unique = local_unique(&records);
    let redundancy =
        if records.is_empty() { 0.0 } else { 1.0 - unique.len() as f64 / records.len() as f64 };
    println!(
        "{}",
        serde_json::json!({
            "sources": sources.len(),
            "records": records.len(),
            "unique_targets": unique.len(),
            "redundancy": redundancy,
            "seconds": elapsed,
            "records_per_sec": records.len() as f64 / elapsed.max(1e-12),
        })
    );
    Ok(())
}

fn cmd_tables(args: &TablesArgs) -> Result<(), CliError> {
    let (ints, space) = open_fcidump(&args.fcidump)?;
    let tables = build_tables(&ints, &space, args.eps_table);
    if let Some(out) = &args.out {
        std::fs::write(out, dump_tables(&tables))
            .map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
    }
    println!(
        "{}",
        serde_json::json!({
            "m": tables.m,
            "max_single_size": tables.max_single_size,
            "max_double_size": tables.max_double_size,
            "footprint_bytes": table_footprint(&tables),
        })
    );
    Ok(())
}

fn cmd_gen_fixture(args: &GenFixtureArgs) -> Result<(), CliError> {
    if args.m == 0 || args.m % 2 != 0 {
        return Err(CliError::Other(format!("--m must be even and positive, got {}", args.m)));
    }
    if args.n_elec == 0 || args.n_elec > args.m {
        return Err(CliError::Other(format!(
            "--n-elec must be in 1..={}, got {}",
            args.m, args.n_elec
        )));
    }
    let text = gen_fixture(args.seed, args.m, args.n_elec, args.density);
    match &args.out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Other(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    match &cli.cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Fci(args) => cmd_fci(args),
        Cmd::DedupBench(args) => cmd_dedup_bench(args),
        Cmd::GenBench(args) => cmd_gen_bench(args),
        Cmd::Tables(args) => cmd_tables(args),
        Cmd::GenFixture(args) => cmd_gen_fixture(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
