//! Criterion benchmarks for the bernmark solvers live under `benches/`.
