//! Benchmark fixtures shared by the criterion benches.

use amos_core::generator::{generate_rim, InternalGraph, RimGraph, RimSpec};

/// Planted graph with `k` clusters of `size` nodes, Erdős–Rényi inside.
pub fn planted(k: usize, size: usize, p_in: f64, p_cross: f64, seed: u64) -> RimGraph {
    generate_rim(&RimSpec::homogeneous(
        vec![size; k],
        InternalGraph::ErdosRenyi { p: p_in },
        p_cross,
        seed,
    ))
    .expect("benchmark spec is valid")
}
