//! Seeded contextual stochastic block model: class-correlated sparse binary
//! features on a graph with a chosen fraction of intra-class edges.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::GraphBundle;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelAssignment};
use crate::sparse::SparseFeatures;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    pub edges: usize,
    /// Fraction of edges joining same-class nodes.
    pub homophily: f64,
    /// Probability a node carries each word of its own class block.
    pub p_in: f64,
    /// Probability of each word outside its block.
    pub p_out: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 600,
            classes: 4,
            features: 200,
            edges: 1800,
            homophily: 0.8,
            p_in: 0.08,
            p_out: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.nodes < 2 * self.classes {
            return Err(Error::Invalid("need at least 2 classes and 2 nodes per class".into()));
        }
        if self.features < self.classes {
            return Err(Error::Invalid("need at least one feature per class".into()));
        }
        for (name, p) in [
            ("homophily", self.homophily),
            ("p_in", self.p_in),
            ("p_out", self.p_out),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        let max_edges = self.nodes * (self.nodes - 1) / 2;
        if self.edges > max_edges / 2 {
            return Err(Error::Invalid(format!(
                "{} edges is too dense for {} nodes",
                self.edges, self.nodes
            )));
        }
        Ok(())
    }
}

/// Draws a bundle. Classes are assigned round-robin so they stay balanced.
pub fn generate_csbm(spec: &SyntheticSpec) -> Result<GraphBundle> {
    spec.validate()?;
    let (n, c, d) = (spec.nodes, spec.classes, spec.features);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes: Vec<usize> = (0..n).map(|u| u % c).collect();
    let members: Vec<Vec<usize>> = (0..c).map(|k| (k..n).step_by(c).collect()).collect();

    let mut edges = BTreeSet::new();
    while edges.len() < spec.edges {
        let u = rng.random_range(0..n);
        let same = rng.random_bool(spec.homophily);
        let pool = if same {
            &members[classes[u]]
        } else {
            let mut k = rng.random_range(0..c - 1);
            if k >= classes[u] {
                k += 1;
            }
            &members[k]
        };
        let v = pool[rng.random_range(0..pool.len())];
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let graph = Graph::from_edges(n, edges)?;

    let block = d / c;
    let mut triplets = Vec::new();
    for (u, &k) in classes.iter().enumerate() {
        let mut any = false;
        for j in 0..d {
            let own = j / block == k;
            if rng.random_bool(if own { spec.p_in } else { spec.p_out }) {
                triplets.push((u, j, 1.0));
                any = true;
            }
        }
        if !any {
            triplets.push((u, k * block + rng.random_range(0..block), 1.0));
        }
    }
    let features = SparseFeatures::from_triplets(n, d, &triplets)?;
    let labels = LabelAssignment::from_classes(&classes, c)?;
    GraphBundle::new(format!("csbm-{}", spec.seed), graph, features, labels, None)
}
