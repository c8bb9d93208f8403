//! Criterion benchmarks for the design engine; see `benches/engine.rs`.
//! Run with `cargo bench -p oed-bench`.
