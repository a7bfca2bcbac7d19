//! Criterion benchmarks for the simulation kernel; see `benches/`.
