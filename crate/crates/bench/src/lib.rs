//! Benchmark-only crate; see `benches/processes.rs`.
