//! Fully connected embedding graphs and subgraph sampling.
//!
//! A graph here is a node subset of an embedding set with the dense cosine
//! affinity matrix precomputed. Transductive estimation never reads labels
//! from a graph; they ride along for loss computation and evaluation only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingSet;
use crate::error::{Result, TtcError};

/// Fully connected graph over a subset of an embedding set. Edges carry the
/// cosine of the raw embeddings; the matrix is exactly symmetric with unit
/// diagonal.
#[derive(Debug, Clone)]
pub struct EmbGraph {
    nodes: EmbeddingSet,
    node_index: Vec<usize>,
    edge_cosine: Vec<f64>,
}

impl EmbGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    pub fn nodes(&self) -> &EmbeddingSet {
        &self.nodes
    }

    /// Positions of the graph's nodes in the source set.
    pub fn node_index(&self) -> &[usize] {
        &self.node_index
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.nodes.row(i)
    }

    pub fn labels(&self) -> &[i32] {
        self.nodes.labels()
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        self.edge_cosine[i * self.n() + j]
    }
}

/// Builds the fully connected graph over the given rows of `set`. Indices
/// must be distinct and in range; at least two nodes are required.
pub fn build_full_graph(set: &EmbeddingSet, indices: &[usize]) -> Result<EmbGraph> {
    if indices.len() < 2 {
        return Err(TtcError::InvalidArgument("a graph needs at least 2 nodes".into()));
    }
    let mut seen = indices.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(TtcError::InvalidArgument("duplicate node indices".into()));
    }
    let nodes = set.subset(indices)?;
    let n = nodes.len();
    let mut edge_cosine = vec![0.0; n * n];
    for i in 0..n {
        edge_cosine[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let a = nodes.cosine(i, j);
            edge_cosine[i * n + j] = a;
            edge_cosine[j * n + i] = a;
        }
    }
    Ok(EmbGraph { nodes, node_index: indices.to_vec(), edge_cosine })
}

/// Uniformly random orthogonal map as rows, via Gram-Schmidt on Gaussian
/// draws (reflections included; cosines don't care).
pub(crate) fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> =
            (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        for b in &basis {
            let along: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= along * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

/// The same graph with every node feature passed through the orthogonal map
/// `q`. Pairwise cosines are rotation-invariant, so the edge matrix carries
/// over unchanged.
pub(crate) fn rotate_graph(graph: &EmbGraph, q: &[Vec<f64>]) -> Result<EmbGraph> {
    let dim = graph.dim();
    let mut vectors = Vec::with_capacity(graph.n() * dim);
    for i in 0..graph.n() {
        let x = graph.feature(i);
        for row in q {
            vectors.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
        }
    }
    let nodes = EmbeddingSet::new(vectors, dim, graph.labels().to_vec())?;
    Ok(EmbGraph {
        nodes,
        node_index: graph.node_index.clone(),
        edge_cosine: graph.edge_cosine.clone(),
    })
}

/// The same graph with every node feature nudged by isotropic Gaussian noise
/// of scale `sigma` per coordinate, then renormalized. Unlike a rotation this
/// changes pairwise cosines, so the edge matrix is recomputed.
pub(crate) fn jitter_features(
    graph: &EmbGraph,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EmbGraph> {
    use rand::Rng;
    let (n, dim) = (graph.n(), graph.dim());
    let mut vectors = Vec::with_capacity(n * dim);
    for i in 0..n {
        let mut row: Vec<f64> = graph
            .feature(i)
            .iter()
            .map(|&x| x + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in row.iter_mut() {
                *x /= norm;
            }
            vectors.extend(row);
        } else {
            vectors.extend_from_slice(graph.feature(i));
        }
    }
    let nodes = EmbeddingSet::new(vectors, dim, graph.labels().to_vec())?;
    let mut edge_cosine = vec![0.0; n * n];
    for i in 0..n {
        edge_cosine[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let c = nodes.cosine(i, j);
            edge_cosine[i * n + j] = c;
            edge_cosine[j * n + i] = c;
        }
    }
    Ok(EmbGraph { nodes, node_index: graph.node_index.clone(), edge_cosine })
}

/// Samples `n_batches` node-index batches of size `batch_size`, uniformly
/// without replacement within each batch. Deterministic given the seed;
/// batches are sorted for a canonical pair order downstream.
pub fn sample_index_batches(
    set: &EmbeddingSet,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 || batch_size > set.len() {
        return Err(TtcError::InvalidArgument(format!(
            "batch size {batch_size} for a set of {}",
            set.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut idx = rand::seq::index::sample(&mut rng, set.len(), batch_size).into_vec();
        idx.sort_unstable();
        out.push(idx);
    }
    Ok(out)
}

/// Samples fully connected subgraphs (uniform node choice without
/// replacement per batch).
pub fn sample_subgraphs(
    set: &EmbeddingSet,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<Vec<EmbGraph>> {
    sample_index_batches(set, batch_size, n_batches, seed)?
        .iter()
        .map(|idx| build_full_graph(set, idx))
        .collect()
}

/// Class-stratified batches for training: each batch draws `n_classes`
/// distinct classes and up to `per_class` members from each, so positive
/// pairs are guaranteed and class balance is controlled. Classes smaller
/// than `per_class` contribute all their members.
pub fn sample_stratified_batches(
    set: &EmbeddingSet,
    n_classes: usize,
    per_class: usize,
    n_batches: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let class_ids = set.class_ids();
    if n_classes < 2 || per_class < 2 {
        return Err(TtcError::InvalidArgument(
            "stratified batches need n_classes >= 2 and per_class >= 2".into(),
        ));
    }
    if class_ids.len() < n_classes {
        return Err(TtcError::InvalidArgument(format!(
            "requested {n_classes} classes per batch, set has {}",
            class_ids.len()
        )));
    }
    let members: Vec<Vec<usize>> = class_ids.iter().map(|&c| set.indices_of_class(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let chosen = rand::seq::index::sample(&mut rng, class_ids.len(), n_classes);
        let mut batch = Vec::with_capacity(n_classes * per_class);
        for c in chosen.iter() {
            let pool = &members[c];
            if pool.len() <= per_class {
                batch.extend_from_slice(pool);
            } else {
                let picks = rand::seq::index::sample(&mut rng, pool.len(), per_class);
                batch.extend(picks.iter().map(|k| pool[k]));
            }
        }
        batch.sort_unstable();
        out.push(batch);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::pairwise_distances;
    use crate::synth::{generate_scenario, CountRange, ScenarioConfig};

    fn demo_set(n_classes: usize, per_class: usize, seed: u64) -> EmbeddingSet {
        let config = ScenarioConfig {
            n_train_classes: n_classes.max(2),
            n_cal_classes: 2,
            n_test_classes: 2,
            samples_per_class: CountRange { lo: per_class, hi: per_class },
            seed,
            ..Default::default()
        };
        generate_scenario(&config).unwrap().train
    }

    #[test]
    fn full_graph_shape_and_symmetry() {
        let set = demo_set(4, 16, 3);
        let idx: Vec<usize> = (0..64).collect();
        let g = build_full_graph(&set, &idx).unwrap();
        assert_eq!(g.n(), 64);
        // 64 nodes -> 2016 unordered edges; check via the condensed count
        assert_eq!(crate::curves::condensed_len(g.n()), 2016);
        for i in 0..8 {
            assert_eq!(g.cosine(i, i), 1.0);
            for j in 0..8 {
                assert_eq!(g.cosine(i, j), g.cosine(j, i));
            }
        }
    }

    #[test]
    fn full_graph_rejects_duplicates_and_singletons() {
        let set = demo_set(2, 4, 4);
        assert!(build_full_graph(&set, &[0, 0, 1]).is_err());
        assert!(build_full_graph(&set, &[0]).is_err());
    }

    #[test]
    fn batches_deterministic_and_in_range() {
        let set = demo_set(4, 10, 5);
        let a = sample_index_batches(&set, 8, 10, 99).unwrap();
        let b = sample_index_batches(&set, 8, 10, 99).unwrap();
        assert_eq!(a, b);
        for batch in &a {
            assert_eq!(batch.len(), 8);
            let mut sorted = batch.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), 8, "replacement within a batch");
        }
        let c = sample_index_batches(&set, 8, 10, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn batch_size_bounds_checked() {
        let set = demo_set(2, 4, 6);
        assert!(sample_index_batches(&set, 1, 1, 0).is_err());
        assert!(sample_index_batches(&set, set.len() + 1, 1, 0).is_err());
        assert!(sample_index_batches(&set, set.len(), 1, 0).is_ok());
    }

    #[test]
    fn appearance_counts_are_binomial() {
        // 1000 points, 10000 batches of 64: each point should appear about
        // 640 times. Every count stays within 4.5 standard deviations (a
        // 3-sigma cap would legitimately be crossed by ~3 of 1000 points),
        // and the empirical mean of the z-scores is near zero.
        let set = demo_set(5, 200, 7);
        assert_eq!(set.len(), 1000);
        let batches = sample_index_batches(&set, 64, 10_000, 12).unwrap();
        let mut counts = vec![0u32; set.len()];
        for batch in &batches {
            for &i in batch {
                counts[i] += 1;
            }
        }
        let p: f64 = 64.0 / 1000.0;
        let mean = 10_000.0 * p;
        let sd = (10_000.0 * p * (1.0 - p)).sqrt();
        let mut beyond_2sd = 0usize;
        for (i, &c) in counts.iter().enumerate() {
            let z = (c as f64 - mean) / sd;
            if z.abs() > 2.0 {
                beyond_2sd += 1;
            }
            assert!(
                z.abs() <= 4.5,
                "point {i} appeared {c} times (mean {mean:.1}, sd {sd:.2})"
            );
        }
        // the 2-sigma tail should hold roughly 4.6% of points (binomial
        // sd of that fraction is ~0.66%, so 2%..8% is a generous window)
        assert!(
            (20..=80).contains(&beyond_2sd),
            "{beyond_2sd} of 1000 counts beyond 2 sd"
        );
    }

    /// Two-sample Kolmogorov-Smirnov statistic.
    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut i, mut j) = (0usize, 0usize);
        let mut d: f64 = 0.0;
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }

    #[test]
    fn pooled_batch_distances_representative() {
        // Pooled pairwise distances from 500 batches of 64 track the full
        // 2000-point distance distribution: KS below 0.02.
        let set = demo_set(10, 200, 8);
        assert_eq!(set.len(), 2000);
        let full = pairwise_distances(&set);
        let mut pooled = Vec::new();
        for batch in sample_index_batches(&set, 64, 500, 21).unwrap() {
            let sub = set.subset(&batch).unwrap();
            pooled.extend(pairwise_distances(&sub));
        }
        let ks = ks_statistic(full, pooled);
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn stratified_batches_cover_requested_classes() {
        let set = demo_set(6, 12, 9);
        let batches = sample_stratified_batches(&set, 3, 4, 20, 31).unwrap();
        for batch in &batches {
            assert_eq!(batch.len(), 12);
            let mut classes: Vec<i32> = batch.iter().map(|&i| set.labels()[i]).collect();
            classes.sort_unstable();
            classes.dedup();
            assert_eq!(classes.len(), 3);
        }
        // small classes contribute what they have
        let err = sample_stratified_batches(&set, 7, 4, 1, 0);
        assert!(err.is_err());
    }

    #[test]
    fn rotation_moves_features_but_not_geometry() {
        let set = demo_set(4, 6, 3);
        let graph = build_full_graph(&set, &(0..24).collect::<Vec<_>>()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_orthogonal(set.dim(), &mut rng);
        let rotated = rotate_graph(&graph, &q).unwrap();
        assert_eq!(rotated.labels(), graph.labels());
        assert_eq!(rotated.node_index(), graph.node_index());
        let mut max_move: f64 = 0.0;
        for i in 0..graph.n() {
            for (a, b) in rotated.feature(i).iter().zip(graph.feature(i)) {
                max_move = max_move.max((a - b).abs());
            }
            for j in 0..graph.n() {
                // stored edge matrix stays consistent with the new features
                let fresh: f64 = rotated
                    .feature(i)
                    .iter()
                    .zip(rotated.feature(j))
                    .map(|(a, b)| a * b)
                    .sum();
                assert!((rotated.cosine(i, j) - fresh).abs() < 1e-9);
                assert!((rotated.cosine(i, j) - graph.cosine(i, j)).abs() < 1e-12);
            }
        }
        assert!(max_move > 0.1, "rotation should not be the identity");
    }
}
