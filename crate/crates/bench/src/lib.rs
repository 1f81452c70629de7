//! Criterion benchmarks for the sampling, variation and oracle kernels; see
//! `benches/kernels.rs`.
