//! Node-level density statistics, class-level verification scores, and the
//! closed-form estimators that connect the two.
//!
//! For node i with neighborhood N_i and cosine affinities a_ij:
//!
//! * `s_avg_i` — mean of `a_ij` over same-class neighbors (zeros elsewhere)
//! * `s_nbr_i` — mean of `a_ij * (+1 same-class / -1 cross-class)`
//! * `a_avg_i` — mean of `a_ij` over all neighbors
//!
//! These satisfy `s_nbr + a_avg = 2 * s_avg` and
//! `s_avg - s_nbr = mean of cross-class affinities` identically.
//!
//! Class scores summarize how verifiable a class is: `tpr_k` is the length of
//! the class's normalized resultant (mean embedding), `tnr_k` the mean of
//! `1 - a_ij` over cross pairs touching the class (so it lives in [0, 2]).
//! The two estimator functions recover these scores from density statistics
//! alone; their accuracy improves as cluster and neighborhood sizes grow.

use crate::embedding::{dot, EmbeddingSet};
use crate::error::{Result, TtcError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRecord {
    pub node: usize,
    pub s_avg: f64,
    pub s_nbr: f64,
    pub a_avg: f64,
    pub neighborhood_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class_id: i32,
    /// Norm of the class mean embedding; the attainable true-positive rate
    /// proxy for the class.
    pub tpr: f64,
    /// Mean of `1 - cosine` over cross pairs with one endpoint in the class;
    /// natural scale [0, 2].
    pub tnr: f64,
}

/// Neighborhood lists for a fully connected graph: every other node.
pub fn full_neighborhoods(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
}

/// k-nearest-neighborhood lists by cosine, ties broken by index. `k` is
/// clamped to the n-1 other nodes.
pub fn nearest_neighborhoods(set: &EmbeddingSet, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(TtcError::InvalidArgument("neighborhoods need k >= 1".into()));
    }
    if set.len() < 2 {
        return Err(TtcError::DegenerateInput("need at least two nodes".into()));
    }
    let k = k.min(set.len() - 1);
    let mut out = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let mut others: Vec<usize> = (0..set.len()).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            set.cosine(i, b).total_cmp(&set.cosine(i, a)).then(a.cmp(&b))
        });
        others.truncate(k);
        out.push(others);
    }
    Ok(out)
}

/// Per-node density statistics over explicit neighborhoods. Every
/// neighborhood must be non-empty, in range, and must not contain its owner.
pub fn node_densities(set: &EmbeddingSet, neighborhoods: &[Vec<usize>]) -> Result<Vec<DensityRecord>> {
    if neighborhoods.len() != set.len() {
        return Err(TtcError::InvalidArgument(format!(
            "{} neighborhoods for {} nodes",
            neighborhoods.len(),
            set.len()
        )));
    }
    let labels = set.labels();
    let mut out = Vec::with_capacity(set.len());
    for (i, nbrs) in neighborhoods.iter().enumerate() {
        if nbrs.is_empty() {
            return Err(TtcError::DegenerateInput(format!("node {i} has an empty neighborhood")));
        }
        let mut s_avg = 0.0;
        let mut s_nbr = 0.0;
        let mut a_avg = 0.0;
        for &j in nbrs {
            if j == i {
                return Err(TtcError::InvalidArgument(format!(
                    "node {i} lists itself as a neighbor"
                )));
            }
            if j >= set.len() {
                return Err(TtcError::InvalidArgument(format!(
                    "neighbor {j} out of range for node {i}"
                )));
            }
            let a = set.cosine(i, j);
            a_avg += a;
            if labels[i] == labels[j] {
                s_avg += a;
                s_nbr += a;
            } else {
                s_nbr -= a;
            }
        }
        let m = nbrs.len() as f64;
        out.push(DensityRecord {
            node: i,
            s_avg: s_avg / m,
            s_nbr: s_nbr / m,
            a_avg: a_avg / m,
            neighborhood_size: nbrs.len(),
        });
    }
    Ok(out)
}

/// Class verification scores for every class in the set. Errors if some class
/// has no cross pairs (i.e. the set holds a single class).
pub fn class_scores(set: &EmbeddingSet) -> Result<Vec<ClassScore>> {
    if set.class_ids().len() < 2 {
        return Err(TtcError::DegenerateInput(
            "class scores need at least two classes (no cross pairs otherwise)".into(),
        ));
    }
    let dim = set.dim();
    let labels = set.labels();
    let mut out = Vec::with_capacity(set.class_ids().len());
    for &k in set.class_ids() {
        let members: Vec<usize> = set.indices_of_class(k);
        let mut resultant = vec![0.0; dim];
        for &i in &members {
            for (r, x) in resultant.iter_mut().zip(set.row(i)) {
                *r += x;
            }
        }
        let tpr = dot(&resultant, &resultant).sqrt() / members.len() as f64;

        let mut acc = 0.0;
        let mut count = 0u64;
        for &i in &members {
            for j in 0..set.len() {
                if labels[j] != k {
                    acc += 1.0 - set.cosine(i, j);
                    count += 1;
                }
            }
        }
        // Each unordered cross pair appears exactly once: the in-class
        // endpoint enumerates it.
        out.push(ClassScore { class_id: k, tpr, tnr: acc / count as f64 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremEstimate {
    pub value: f64,
    /// True when a negative radicand was clamped to zero.
    pub clamped: bool,
}

/// Estimates a cluster's attainable TPR score from density statistics:
/// `sqrt((|N_i| / (2 |N|)) * (mean s_nbr + mean a_avg))`.
///
/// With `clamp` set, a negative radicand (possible on noise-dominated
/// clusters) yields 0 with the flag raised; otherwise it is a degenerate-input
/// error.
pub fn theorem1_estimate(
    records: &[DensityRecord],
    cluster_size: usize,
    neighborhood_size: usize,
    clamp: bool,
) -> Result<TheoremEstimate> {
    if records.is_empty() || cluster_size == 0 || neighborhood_size == 0 {
        return Err(TtcError::InvalidArgument("empty records or zero sizes".into()));
    }
    let n = records.len() as f64;
    let mean_s_nbr: f64 = records.iter().map(|r| r.s_nbr).sum::<f64>() / n;
    let mean_a_avg: f64 = records.iter().map(|r| r.a_avg).sum::<f64>() / n;
    let radicand =
        neighborhood_size as f64 / (2.0 * cluster_size as f64) * (mean_s_nbr + mean_a_avg);
    if radicand < 0.0 {
        if clamp {
            return Ok(TheoremEstimate { value: 0.0, clamped: true });
        }
        return Err(TtcError::DegenerateInput(format!(
            "negative radicand {radicand}; cluster is noise-dominated"
        )));
    }
    Ok(TheoremEstimate { value: radicand.sqrt(), clamped: false })
}

/// Estimates a cluster's attainable TNR score from density statistics:
/// `1 - (|N| / n_cross_pairs) * (mean s_avg - mean s_nbr)`, where
/// `n_cross_pairs` counts the cluster's negative pairs with one endpoint in
/// the majority class.
pub fn theorem2_estimate(records: &[DensityRecord], cluster_size: usize, n_cross_pairs: usize) -> Result<f64> {
    if records.is_empty() || cluster_size == 0 {
        return Err(TtcError::InvalidArgument("empty records or zero cluster".into()));
    }
    if n_cross_pairs == 0 {
        return Err(TtcError::DegenerateInput("cluster has no cross pairs".into()));
    }
    let n = records.len() as f64;
    let mean_s_avg: f64 = records.iter().map(|r| r.s_avg).sum::<f64>() / n;
    let mean_s_nbr: f64 = records.iter().map(|r| r.s_nbr).sum::<f64>() / n;
    Ok(1.0 - cluster_size as f64 / n_cross_pairs as f64 * (mean_s_avg - mean_s_nbr))
}
