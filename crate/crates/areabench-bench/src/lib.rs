//! Benchmark-only crate; see `benches/benchmarks.rs`.
//!
//! Kept separate from the library so criterion and its dependency tree
//! stay out of the main build.
