//! Approximate personalized-PageRank propagation and the attribute
//! similarity mask.
//!
//! `propagate` runs `Z ← (1-α) A Z + α M` for `K` steps starting from
//! `Z = M`, which equals `((1-α)^K A^K + α Σ_{k<K} (1-α)^k A^k) M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::sparse::{gram_on_pattern, hadamard, spmm, DenseMatrix, SparseAdjacency};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Restart probability; 1 keeps the input unchanged.
    pub alpha: f64,
    /// Number of propagation steps.
    pub k: usize,
}

impl PropagationConfig {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        let cfg = Self { alpha, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Invalid(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if self.k == 0 {
            return Err(Error::Invalid("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Pairwise node similarity restricted to the normalized adjacency pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMask(SparseAdjacency);

impl SimilarityMask {
    /// Mask of ones; masking with it leaves the adjacency unchanged.
    pub fn ones(norm_adj: &NormalizedAdjacency) -> Self {
        Self(norm_adj.as_sparse().map_values(|_| 1.0))
    }

    pub fn as_sparse(&self) -> &SparseAdjacency {
        &self.0
    }
}

/// `Â ⊙ A_s`, possibly row-renormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationMatrix(SparseAdjacency);

impl PropagationMatrix {
    /// Unmasked propagation over `Â` itself.
    pub fn unmasked(norm_adj: &NormalizedAdjacency) -> Self {
        Self(norm_adj.as_sparse().clone())
    }

    pub fn as_sparse(&self) -> &SparseAdjacency {
        &self.0
    }

    /// Rescales rows to sum to one (rows summing to zero are left alone).
    /// The result is generally no longer symmetric.
    pub fn row_renormalized(&self) -> Self {
        let a = &self.0;
        let mut values = a.values().to_vec();
        for i in 0..a.n() {
            let r = a.indptr()[i]..a.indptr()[i + 1];
            let s: f64 = values[r.clone()].iter().sum();
            if s != 0.0 {
                for v in &mut values[r] {
                    *v /= s;
                }
            }
        }
        Self(a.with_values(values).expect("same pattern"))
    }
}

/// Entry `(i,j)` is `⟨h_i, h_j⟩` for every stored entry of `Â`, diagonal
/// included. With softmax rows in `h` every entry lies in `[0,1]`.
pub fn build_similarity_mask(h: &DenseMatrix, norm_adj: &NormalizedAdjacency) -> Result<SimilarityMask> {
    Ok(SimilarityMask(gram_on_pattern(norm_adj.as_sparse(), h)?))
}

pub fn build_propagation_matrix(norm_adj: &NormalizedAdjacency, mask: &SimilarityMask) -> Result<PropagationMatrix> {
    Ok(PropagationMatrix(hadamard(norm_adj.as_sparse(), &mask.0)?))
}

pub fn propagate(a: &SparseAdjacency, m: &DenseMatrix, cfg: PropagationConfig) -> Result<DenseMatrix> {
    cfg.validate()?;
    if a.n() != m.rows() {
        return Err(Error::dims(format!(
            "propagation matrix n={} vs input rows={}",
            a.n(),
            m.rows()
        )));
    }
    let keep = 1.0 - cfg.alpha;
    let mut z = m.clone();
    for _ in 0..cfg.k {
        let mut next = spmm(a, &z)?;
        for (zv, mv) in next.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *zv = keep * *zv + cfg.alpha * mv;
        }
        z = next;
    }
    Ok(z)
}

/// Soft labels `Ā_p Y_L`.
pub fn propagate_labels(a_p: &PropagationMatrix, y_l: &DenseMatrix, cfg: PropagationConfig) -> Result<DenseMatrix> {
    if y_l.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeEntry("observed label matrix"));
    }
    propagate(&a_p.0, y_l, cfg)
}

/// `n × c` matrix with a one-hot row for every node in `nodes`.
pub fn one_hot_labels(
    n: usize,
    c: usize,
    nodes: &[usize],
    labels: &crate::graph::LabelAssignment,
) -> Result<DenseMatrix> {
    let mut y = DenseMatrix::zeros(n, c);
    for &u in nodes {
        let class = labels
            .get(u)
            .ok_or_else(|| Error::Invalid(format!("labeled node {u} has no class")))?;
        y.set(u, class, 1.0);
    }
    Ok(y)
}
