//! Labeled unit-norm embedding sets and the train/cal/test partition.

use crate::error::{Result, TtcError};

/// How far a row norm may drift from 1 before the set is rejected.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// A set of L2-normalized embedding vectors with integer class labels.
///
/// Vectors are stored row-major (`n * dim` doubles). Every row has unit norm
/// within [`UNIT_NORM_TOL`]; constructors reject anything looser. Labels are
/// arbitrary i32 class ids, `-1` conventionally marking noise/pseudo-label
/// rejects downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<f64>,
    dim: usize,
    labels: Vec<i32>,
    class_ids: Vec<i32>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<f64>, dim: usize, labels: Vec<i32>) -> Result<Self> {
        if dim == 0 {
            return Err(TtcError::InvalidArgument("dim must be positive".into()));
        }
        if labels.is_empty() {
            return Err(TtcError::InvalidArgument("empty embedding set".into()));
        }
        if vectors.len() != labels.len() * dim {
            return Err(TtcError::InvalidArgument(format!(
                "vector buffer holds {} values, expected {} ({} rows x dim {})",
                vectors.len(),
                labels.len() * dim,
                labels.len(),
                dim
            )));
        }
        for (i, row) in vectors.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(TtcError::InvalidArgument(format!(
                    "row {i} has norm {norm}, expected 1 within {UNIT_NORM_TOL}"
                )));
            }
        }
        let mut class_ids = labels.clone();
        class_ids.sort_unstable();
        class_ids.dedup();
        Ok(Self { vectors, dim, labels, class_ids })
    }

    /// Builds a set from rows that may be slightly off unit norm (up to `tol`),
    /// renormalizing each row exactly. Used by the file readers.
    pub fn new_renormalized(vectors: Vec<f64>, dim: usize, labels: Vec<i32>, tol: f64) -> Result<Self> {
        if dim == 0 {
            return Err(TtcError::InvalidArgument("dim must be positive".into()));
        }
        if vectors.len() != labels.len() * dim {
            return Err(TtcError::InvalidArgument(format!(
                "vector buffer holds {} values, expected {}",
                vectors.len(),
                labels.len() * dim
            )));
        }
        let mut vectors = vectors;
        for (i, row) in vectors.chunks_exact_mut(dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > tol {
                return Err(TtcError::Format(format!(
                    "row {i} has norm {norm}, expected 1 within {tol}"
                )));
            }
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
        Self::new(vectors, dim, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    /// Sorted distinct labels present in the set.
    pub fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Cosine similarity of rows i and j. Rows are unit norm, so this is the
    /// plain dot product.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j))
    }

    /// New set holding the given rows (in the given order). Indices must be
    /// in range; duplicates are allowed here, graph construction rejects them.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(TtcError::InvalidArgument(format!(
                    "index {i} out of range for set of {}",
                    self.len()
                )));
            }
            vectors.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(vectors, self.dim, labels)
    }

    /// Indices of every row with the given label, in row order.
    pub fn indices_of_class(&self, class_id: i32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class_id).collect()
    }

    /// Replaces all labels, keeping vectors. Lengths must match.
    pub fn with_labels(&self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(TtcError::InvalidArgument(format!(
                "label count {} does not match row count {}",
                labels.len(),
                self.len()
            )));
        }
        Self::new(self.vectors.clone(), self.dim, labels)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Disjoint train/calibration/test split. Class id sets never overlap across
/// the three members; scenario generation assigns each partition its own id
/// range and the constructor enforces it.
#[derive(Debug, Clone)]
pub struct Partition {
    pub train: EmbeddingSet,
    pub cal: EmbeddingSet,
    pub test: EmbeddingSet,
}

impl Partition {
    pub fn new(train: EmbeddingSet, cal: EmbeddingSet, test: EmbeddingSet) -> Result<Self> {
        let overlap = |a: &EmbeddingSet, b: &EmbeddingSet| -> Option<i32> {
            a.class_ids().iter().copied().find(|id| b.class_ids().binary_search(id).is_ok())
        };
        for (name, pair) in [
            ("train/cal", overlap(&train, &cal)),
            ("train/test", overlap(&train, &test)),
            ("cal/test", overlap(&cal, &test)),
        ] {
            if let Some(id) = pair {
                return Err(TtcError::InvalidArgument(format!(
                    "class id {id} appears in both {name} partitions"
                )));
            }
        }
        if train.dim() != cal.dim() || cal.dim() != test.dim() {
            return Err(TtcError::InvalidArgument("partition dims differ".into()));
        }
        Ok(Self { train, cal, test })
    }
}

/// Planar unit vectors at the given angles — the hand-checkable fixture the
/// whole test suite leans on, since distances reduce to |angle| chords.
#[cfg(test)]
pub(crate) fn circle_set(degrees: &[f64], labels: &[i32]) -> EmbeddingSet {
    let mut v = Vec::new();
    for &d in degrees {
        let t = d.to_radians();
        v.extend_from_slice(&[t.cos(), t.sin()]);
    }
    EmbeddingSet::new(v, 2, labels.to_vec()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_norm_rows() {
        let v = vec![1.0, 0.0, 0.5, 0.5];
        let err = EmbeddingSet::new(v, 2, vec![0, 1]).unwrap_err();
        assert!(matches!(err, TtcError::InvalidArgument(_)));
    }

    #[test]
    fn rejects_length_mismatch() {
        let v = vec![1.0, 0.0, 0.0];
        assert!(EmbeddingSet::new(v, 2, vec![0, 1]).is_err());
    }

    #[test]
    fn renormalize_within_tolerance() {
        // Norm off by 5e-5: rejected by the strict constructor, accepted and
        // fixed by the renormalizing one at file-reader tolerance 1e-4.
        let v = vec![1.00005, 0.0];
        assert!(EmbeddingSet::new(v.clone(), 2, vec![0]).is_err());
        let set = EmbeddingSet::new_renormalized(v, 2, vec![0], 1e-4).unwrap();
        assert!((set.row(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn class_ids_sorted_distinct() {
        let set = circle_set(&[0.0, 10.0, 180.0, 90.0], &[7, 3, 7, -1]);
        assert_eq!(set.class_ids(), &[-1, 3, 7]);
        assert_eq!(set.indices_of_class(7), vec![0, 2]);
    }

    #[test]
    fn cosine_matches_angle() {
        let set = circle_set(&[0.0, 10.0, 180.0], &[0, 0, 1]);
        assert!((set.cosine(0, 1) - 10f64.to_radians().cos()).abs() < 1e-12);
        assert!((set.cosine(0, 2) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_rejects_shared_class() {
        let a = circle_set(&[0.0, 10.0], &[0, 0]);
        let b = circle_set(&[20.0, 30.0], &[1, 1]);
        let c = circle_set(&[40.0, 50.0], &[1, 1]);
        assert!(Partition::new(a.clone(), b.clone(), c).is_err());
        let c2 = circle_set(&[40.0, 50.0], &[2, 2]);
        assert!(Partition::new(a, b, c2).is_ok());
    }
}
