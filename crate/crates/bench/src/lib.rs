//! Benchmarks for the fblab kernels; see `benches/`.
