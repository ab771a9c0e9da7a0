//! Undirected graphs, the self-loop-augmented symmetric normalization and
//! label-aware structure-noise injection.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseAdjacency;

/// Simple undirected graph in CSR layout. Each edge is stored in both
/// directions; self-loops and multi-edges are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Graph {
    /// Builds a graph from undirected pairs. Duplicates and reversed
    /// duplicates collapse to one edge; self-loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!("edge ({u},{v}) references a node >= n={n}")));
            }
            if u == v {
                return Err(Error::Invalid(format!("self-loop on node {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(&row);
            indptr.push(indices.len());
        }
        Ok(Self { n, indptr, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.indices[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.indptr[u + 1] - self.indptr[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` on the graph pattern plus the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(SparseAdjacency);

impl NormalizedAdjacency {
    pub fn as_sparse(&self) -> &SparseAdjacency {
        &self.0
    }

    pub fn into_sparse(self) -> SparseAdjacency {
        self.0
    }
}

impl std::ops::Deref for NormalizedAdjacency {
    type Target = SparseAdjacency;

    fn deref(&self) -> &SparseAdjacency {
        &self.0
    }
}

/// Class id per node, `None` for unlabeled nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelAssignment {
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl LabelAssignment {
    pub fn new(labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::Invalid(format!("label {bad} >= class count {num_classes}")));
        }
        Ok(Self { labels, num_classes })
    }

    /// All nodes labeled.
    pub fn from_classes(classes: &[usize], num_classes: usize) -> Result<Self> {
        Self::new(classes.iter().map(|&c| Some(c)).collect(), num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.labels
    }

    fn known(&self, node: usize) -> Result<usize> {
        self.labels
            .get(node)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Invalid(format!("node {node} has no known label")))
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.n();
    let dt: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(g.indices().len() + n);
    let mut values = Vec::with_capacity(g.indices().len() + n);
    indptr.push(0);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        let split = nbrs.partition_point(|&j| j < i);
        let row = nbrs[..split]
            .iter()
            .copied()
            .chain(std::iter::once(i))
            .chain(nbrs[split..].iter().copied());
        for j in row {
            indices.push(j);
            values.push(if i == j {
                1.0 / dt[i]
            } else {
                1.0 / (dt[i] * dt[j]).sqrt()
            });
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency(SparseAdjacency::from_parts_unchecked(n, indptr, indices, values, true))
}

fn cross_edge_count(g: &Graph, labels: &LabelAssignment) -> Result<usize> {
    let mut cross = 0;
    for (u, v) in g.edges() {
        if labels.known(u)? != labels.known(v)? {
            cross += 1;
        }
    }
    Ok(cross)
}

/// Fraction of undirected edges whose endpoints carry different labels.
pub fn structure_noise_rate(g: &Graph, labels: &LabelAssignment) -> Result<f64> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    if labels.len() != g.n() {
        return Err(Error::dims(format!("{} labels for {} nodes", labels.len(), g.n())));
    }
    Ok(cross_edge_count(g, labels)? as f64 / g.num_edges() as f64)
}

/// Raises the structure-noise rate to `target_rate` by repeatedly swapping a
/// uniformly drawn same-label edge for a uniformly drawn absent cross-label
/// pair. Node set and edge count are preserved exactly.
pub fn inject_structure_noise(g: &Graph, labels: &LabelAssignment, target_rate: f64, rng_seed: u64) -> Result<Graph> {
    let current = structure_noise_rate(g, labels)?;
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(Error::Invalid(format!("target rate {target_rate} outside [0,1]")));
    }
    if target_rate < current - 1e-12 {
        return Err(Error::CannotDenoise {
            current,
            target: target_rate,
        });
    }
    let m = g.num_edges();
    let cross = cross_edge_count(g, labels)?;
    let want = (target_rate * m as f64).round() as usize;
    let swaps = want.saturating_sub(cross);
    if swaps == 0 {
        return Ok(g.clone());
    }

    let same: Vec<(usize, usize)> = g.edges().filter(|&(u, v)| labels.get(u) == labels.get(v)).collect();
    if same.len() < swaps {
        return Err(Error::TargetUnreachable(format!(
            "{swaps} swaps needed but only {} same-label edges exist",
            same.len()
        )));
    }
    let labeled: Vec<usize> = (0..g.n()).filter(|&u| labels.get(u).is_some()).collect();
    let mut per_class = vec![0u128; labels.num_classes()];
    for &u in &labeled {
        per_class[labels.get(u).unwrap()] += 1;
    }
    let total: u128 = per_class.iter().sum();
    let cross_pairs = (total * total - per_class.iter().map(|c| c * c).sum::<u128>()) / 2;
    if cross_pairs - (cross as u128) < swaps as u128 {
        return Err(Error::TargetUnreachable(format!(
            "{swaps} swaps needed but only {} absent cross-label pairs exist",
            cross_pairs - cross as u128
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut removed: Vec<(usize, usize)> = index::sample(&mut rng, same.len(), swaps)
        .into_iter()
        .map(|k| same[k])
        .collect();
    removed.sort_unstable();

    let mut added: HashSet<(usize, usize)> = HashSet::with_capacity(swaps);
    let mut added_order = Vec::with_capacity(swaps);
    let absent_cross = |u: usize, v: usize, added: &HashSet<(usize, usize)>| {
        u != v && labels.get(u) != labels.get(v) && !g.has_edge(u, v) && !added.contains(&(u.min(v), u.max(v)))
    };
    // rejection sampling over labeled pairs is uniform on the accepted set;
    // fall back to enumeration when cross pairs are too scarce for it
    let budget = 64 * swaps + 10_000;
    let mut tries = 0;
    while added_order.len() < swaps && tries < budget {
        tries += 1;
        let u = labeled[rng.random_range(0..labeled.len())];
        let v = labeled[rng.random_range(0..labeled.len())];
        if absent_cross(u, v, &added) {
            let e = (u.min(v), u.max(v));
            added.insert(e);
            added_order.push(e);
        }
    }
    if added_order.len() < swaps {
        let mut pool = Vec::new();
        for (a, &u) in labeled.iter().enumerate() {
            for &v in &labeled[a + 1..] {
                if absent_cross(u, v, &added) {
                    pool.push((u, v));
                }
            }
        }
        let need = swaps - added_order.len();
        for k in index::sample(&mut rng, pool.len(), need) {
            added_order.push(pool[k]);
        }
    }

    let edges = g
        .edges()
        .filter(|e| removed.binary_search(e).is_err())
        .chain(added_order);
    Graph::from_edges(g.n(), edges)
}
