//! Criterion benchmarks for the iteration engine live under `benches/`.
