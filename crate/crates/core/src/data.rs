//! On-disk dataset bundles and train/validation/test splits.
//!
//! A bundle directory holds:
//!
//! | file           | content                                             |
//! |----------------|-----------------------------------------------------|
//! | `meta.json`    | `{"n", "d", "c", "name", "format_version"}`         |
//! | `edges.tsv`    | `u<TAB>v` per undirected edge                       |
//! | `features.csv` | `n` lines of `d` comma-separated values, **or**     |
//! | `features.tsv` | `row<TAB>col<TAB>value` triplets of non-zeros       |
//! | `labels.tsv`   | `node<TAB>class`; unlisted nodes are unlabeled      |
//! | `splits.json`  | optional `{"train": [...], "val": [...], "test": [...]}` |
//!
//! `save_bundle` writes a canonical form (edges as `u < v` in row order,
//! labels in node order, triplet features when fewer than a third of the
//! entries are non-zero) so a canonical bundle round-trips byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelAssignment};
use crate::sparse::SparseFeatures;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub name: String,
    pub format_version: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Checks range, disjointness and that every node is labeled.
    pub fn validate(&self, labels: &LabelAssignment) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &u in self.train.iter().chain(&self.val).chain(&self.test) {
            if u >= labels.len() {
                return Err(Error::Invalid(format!("split node {u} >= n={}", labels.len())));
            }
            if labels.get(u).is_none() {
                return Err(Error::Invalid(format!("split node {u} is unlabeled")));
            }
            if !seen.insert(u) {
                return Err(Error::Invalid(format!("node {u} appears in more than one split")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphBundle {
    pub name: String,
    pub graph: Graph,
    pub features: SparseFeatures,
    pub labels: LabelAssignment,
    pub splits: Option<SplitSpec>,
}

/// Headline statistics of a bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
}

impl GraphBundle {
    pub fn new(
        name: impl Into<String>,
        graph: Graph,
        features: SparseFeatures,
        labels: LabelAssignment,
        splits: Option<SplitSpec>,
    ) -> Result<Self> {
        let b = Self {
            name: name.into(),
            graph,
            features,
            labels,
            splits,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.features.rows() != n || self.labels.len() != n {
            return Err(Error::dims(format!(
                "graph has {n} nodes, features {} rows, labels {} entries",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if let Some(s) = &self.splits {
            s.validate(&self.labels)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            nodes: self.n(),
            edges: self.graph.num_edges(),
            features: self.num_features(),
            classes: self.num_classes(),
        }
    }

    /// Same bundle over a different edge set (used by noise injection).
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        Self::new(
            self.name.clone(),
            graph,
            self.features.clone(),
            self.labels.clone(),
            self.splits.clone(),
        )
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines split on tabs, with 1-based line numbers.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("non-numeric {what} `{field}`")))
}

pub fn load_bundle(dir: &Path) -> Result<GraphBundle> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_str(&read(&meta_path)?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported bundle format_version {}",
            meta.format_version
        )));
    }
    let (n, d, c) = (meta.n, meta.d, meta.c);

    let edges_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (line, f) in tsv_rows(&read(&edges_path)?) {
        if f.len() != 2 {
            return Err(parse_err(&edges_path, line, "expected `u<TAB>v`"));
        }
        let u: usize = parse_field(&edges_path, line, f[0], "node id")?;
        let v: usize = parse_field(&edges_path, line, f[1], "node id")?;
        if u >= n || v >= n {
            return Err(parse_err(&edges_path, line, format!("node id >= n={n}")));
        }
        if u == v {
            return Err(parse_err(&edges_path, line, format!("self-loop on node {u}")));
        }
        edges.push((u, v));
    }
    let graph = Graph::from_edges(n, edges)?;

    let features = load_features(dir, n, d)?;

    let labels_path = dir.join("labels.tsv");
    let mut labels = vec![None; n];
    for (line, f) in tsv_rows(&read(&labels_path)?) {
        if f.len() != 2 {
            return Err(parse_err(&labels_path, line, "expected `node<TAB>class`"));
        }
        let u: usize = parse_field(&labels_path, line, f[0], "node id")?;
        let k: usize = parse_field(&labels_path, line, f[1], "label")?;
        if u >= n {
            return Err(parse_err(&labels_path, line, format!("node id {u} >= n={n}")));
        }
        if k >= c {
            return Err(parse_err(&labels_path, line, format!("label id {k} >= c={c}")));
        }
        if labels[u].replace(k).is_some() {
            return Err(parse_err(&labels_path, line, format!("node {u} labeled twice")));
        }
    }
    let labels = LabelAssignment::new(labels, c)?;

    let splits_path = dir.join("splits.json");
    let splits = if splits_path.exists() {
        Some(serde_json::from_str(&read(&splits_path)?)?)
    } else {
        None
    };
    GraphBundle::new(meta.name, graph, features, labels, splits)
}

fn load_features(dir: &Path, n: usize, d: usize) -> Result<SparseFeatures> {
    let csv = dir.join("features.csv");
    let tsv = dir.join("features.tsv");
    match (csv.exists(), tsv.exists()) {
        (true, true) => Err(Error::Invalid(format!(
            "{} holds both features.csv and features.tsv",
            dir.display()
        ))),
        (false, true) => {
            let mut triplets = Vec::new();
            for (line, f) in tsv_rows(&read(&tsv)?) {
                if f.len() != 3 {
                    return Err(parse_err(&tsv, line, "expected `row<TAB>col<TAB>value`"));
                }
                let i: usize = parse_field(&tsv, line, f[0], "row id")?;
                let j: usize = parse_field(&tsv, line, f[1], "column id")?;
                let v: f64 = parse_field(&tsv, line, f[2], "feature")?;
                if i >= n || j >= d {
                    return Err(parse_err(&tsv, line, format!("entry ({i},{j}) outside {n}x{d}")));
                }
                if !v.is_finite() {
                    return Err(parse_err(&tsv, line, "non-finite feature"));
                }
                triplets.push((i, j, v));
            }
            SparseFeatures::from_triplets(n, d, &triplets)
        }
        (true, false) => {
            let mut triplets = Vec::new();
            let text = read(&csv)?;
            let mut rows = 0;
            for (lineno, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let line = lineno + 1;
                if rows >= n {
                    return Err(parse_err(&csv, line, format!("more than n={n} feature rows")));
                }
                let fields: Vec<&str> = l.trim_end_matches('\r').split(',').collect();
                if fields.len() != d {
                    return Err(parse_err(
                        &csv,
                        line,
                        format!("{} values, expected d={d}", fields.len()),
                    ));
                }
                for (j, field) in fields.iter().enumerate() {
                    let v: f64 = parse_field(&csv, line, field, "feature")?;
                    if !v.is_finite() {
                        return Err(parse_err(&csv, line, "non-finite feature"));
                    }
                    if v != 0.0 {
                        triplets.push((rows, j, v));
                    }
                }
                rows += 1;
            }
            if rows != n {
                return Err(Error::Invalid(format!(
                    "{} has {rows} rows, expected n={n}",
                    csv.display()
                )));
            }
            SparseFeatures::from_triplets(n, d, &triplets)
        }
        (false, false) => Err(Error::MissingFile(csv)),
    }
}

pub fn save_bundle(bundle: &GraphBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = BundleMeta {
        n: bundle.n(),
        d: bundle.num_features(),
        c: bundle.num_classes(),
        name: bundle.name.clone(),
        format_version: FORMAT_VERSION,
    };
    write(&dir.join("meta.json"), &(serde_json::to_string_pretty(&meta)? + "\n"))?;

    let mut s = String::new();
    for (u, v) in bundle.graph.edges() {
        let _ = writeln!(s, "{u}\t{v}");
    }
    write(&dir.join("edges.tsv"), &s)?;

    let x = &bundle.features;
    let (csv, tsv) = (dir.join("features.csv"), dir.join("features.tsv"));
    for stale in [&csv, &tsv] {
        if stale.exists() {
            fs::remove_file(stale).map_err(|e| Error::io(stale, e))?;
        }
    }
    s.clear();
    if 3 * x.nnz() < x.rows() * x.cols() {
        for i in 0..x.rows() {
            for (j, v) in x.row(i) {
                let _ = writeln!(s, "{i}\t{j}\t{v}");
            }
        }
        write(&tsv, &s)?;
    } else {
        let dense = x.to_dense();
        for row in dense.row_iter() {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        write(&csv, &s)?;
    }

    s.clear();
    for (u, l) in bundle.labels.as_slice().iter().enumerate() {
        if let Some(k) = l {
            let _ = writeln!(s, "{u}\t{k}");
        }
    }
    write(&dir.join("labels.tsv"), &s)?;

    let splits_path = dir.join("splits.json");
    match &bundle.splits {
        Some(sp) => write(&splits_path, &(serde_json::to_string(sp)? + "\n"))?,
        None if splits_path.exists() => fs::remove_file(&splits_path).map_err(|e| Error::io(&splits_path, e))?,
        None => {}
    }
    Ok(())
}

/// Samples `per_class_train` training nodes from every class, then
/// `val_size` validation nodes from the remaining labeled nodes; all other
/// labeled nodes form the test set. Each list is sorted.
pub fn generate_split(bundle: &GraphBundle, per_class_train: usize, val_size: usize, seed: u64) -> Result<SplitSpec> {
    let c = bundle.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (u, l) in bundle.labels.as_slice().iter().enumerate() {
        if let Some(k) = l {
            by_class[*k].push(u);
        }
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class_train {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required: per_class_train,
            });
        }
    }
    let labeled: usize = by_class.iter().map(Vec::len).sum();
    if labeled < per_class_train * c + val_size + 1 {
        return Err(Error::InfeasibleSplit(format!(
            "{labeled} labeled nodes cannot hold {per_class_train}x{c} train + {val_size} val + a non-empty test set"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(per_class_train * c);
    let mut in_train = vec![false; bundle.n()];
    for members in &by_class {
        for k in index::sample(&mut rng, members.len(), per_class_train) {
            train.push(members[k]);
            in_train[members[k]] = true;
        }
    }
    train.sort_unstable();

    let rest: Vec<usize> = (0..bundle.n())
        .filter(|&u| bundle.labels.get(u).is_some() && !in_train[u])
        .collect();
    let mut in_val = vec![false; bundle.n()];
    let mut val: Vec<usize> = index::sample(&mut rng, rest.len(), val_size)
        .into_iter()
        .map(|k| rest[k])
        .collect();
    val.sort_unstable();
    for &u in &val {
        in_val[u] = true;
    }
    let test = rest.into_iter().filter(|&u| !in_val[u]).collect();
    Ok(SplitSpec { train, val, test })
}

/// Resolves a dataset argument: an existing directory is used as is,
/// otherwise it is looked up under `data_root`.
pub fn resolve_bundle_dir(arg: &str, data_root: Option<&Path>) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.is_dir() {
        return direct;
    }
    match data_root {
        Some(root) if root.join(arg).is_dir() => root.join(arg),
        _ => direct,
    }
}
