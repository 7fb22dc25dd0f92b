//! Criterion benchmarks for `sapx-core`; see `benches/`.
