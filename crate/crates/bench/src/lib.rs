//! Criterion benchmarks for the renderer and networks; see `benches/`.
