//! Synthetic inputs shared by the benchmarks.

use gksvm_core::data::LabeledGraph;
use gksvm_core::EmbeddingSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Molecule-sized random graphs: `vertices` vertices, about 1.1 edges per
/// vertex, labels from `alphabet`, classes alternating.
pub fn molecule_like(n: usize, vertices: usize, alphabet: usize, seed: u64) -> (Vec<LabeledGraph>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = (0..n)
        .map(|_| {
            // a random tree plus a few chords
            let mut edges: Vec<(usize, usize)> = (1..vertices).map(|v| (rng.random_range(0..v), v)).collect();
            for _ in 0..vertices / 8 {
                edges.push((rng.random_range(0..vertices), rng.random_range(0..vertices)));
            }
            let labels = (0..vertices).map(|_| rng.random_range(0..alphabet)).collect();
            LabeledGraph::new(vertices, &edges, labels).expect("valid graph")
        })
        .collect();
    let classes = (0..n).map(|i| (i % 2) as u8).collect();
    (graphs, classes)
}

/// `n` sets of `len` random points in `dim` dimensions, all distinct.
pub fn random_sets(n: usize, len: usize, dim: usize, seed: u64) -> Vec<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..dim).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
            EmbeddingSet::from_rows(&rows).expect("non-empty rows")
        })
        .collect()
}
