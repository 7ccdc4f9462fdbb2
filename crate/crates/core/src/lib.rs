//! Deterministic, memory-budgeted selected configuration interaction (SCI)
//! engine.
//!
//! The crate grows a variational configuration space by iterating
//! expand -> de-duplicate -> estimate -> select -> re-solve:
//!
//! * [`conf`] — fixed-width determinant bitstrings with fermionic parity.
//! * [`hamiltonian`] — FCIDUMP parsing, Slater-Condon matrix elements and
//!   the padded excitation tables driving generation.
//! * [`genkernel`] — data-parallel coupled-configuration generation with
//!   threshold filtering and chunk-local compaction.
//! * [`distdedup`] — sort-based regular-sampling global de-duplication
//!   over logical ranks, with load-balance metrics.
//! * [`memexec`] — budgeted, double-buffered staged execution with a
//!   spill store for out-of-core runs.
//! * [`solver`] — subspace eigensolver, amplitude estimation, streaming
//!   top-K selection and the SCI driver.
//! * [`oracle`] — independent brute-force references (full CI, naive
//!   enumeration, second-quantized operator elements).
//! * [`fixture`] — deterministic random-integral fixtures and key streams.
//!
//! With the default `parallel` feature the inner loops run on rayon;
//! without it every entry point falls back to an equivalent sequential
//! path producing byte-identical results.

pub mod conf;
pub mod distdedup;
pub mod fixture;
pub mod genkernel;
pub mod hamiltonian;
pub mod memexec;
pub mod oracle;
pub mod solver;
