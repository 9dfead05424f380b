//! Benchmark-only crate; see `benches/parsers.rs`.
