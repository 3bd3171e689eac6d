//! Criterion benchmarks for the flowcurv kernels; see `benches/`.
