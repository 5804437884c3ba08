//! Criterion benchmarks for the `ppfpf` crate live in `benches/`.
