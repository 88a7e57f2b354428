//! Criterion benchmarks for the network, linear algebra and training kernels.
//! Run with `cargo bench -p dipcert-bench`.
