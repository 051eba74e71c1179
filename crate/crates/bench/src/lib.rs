//! Criterion benchmarks for the simulation and estimation kernels live in
//! `benches/`; this crate has no library code.
