//! Criterion benchmarks for the hot paths of `ergowass`; see `benches/`.
