//! Benchmarks for `ssel-core`; see `benches/`.
