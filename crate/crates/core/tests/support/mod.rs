//! Dense reference implementations and random instance generators shared by
//! the integration tests and the acceptance gate.

#![allow(dead_code, clippy::needless_range_loop)]

use pamt_core::nn::{backward, forward, soft_cross_entropy, ClassifierParams, ForwardMode};
use pamt_core::{DenseMatrix, Graph, SparseFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_dense(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut ChaCha8Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Random row-stochastic matrix.
pub fn random_simplex_rows(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> DenseMatrix {
    let mut m = random_dense(rows, cols, 0.01, 1.0, r);
    for i in 0..rows {
        let s: f64 = m.row(i).iter().sum();
        for v in m.row_mut(i) {
            *v /= s;
        }
    }
    m
}

/// `D̃^{-1/2}(A+I)D̃^{-1/2}` from the definition.
pub fn dense_normalized(g: &Graph) -> Dense {
    let n = g.n();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
        for &j in g.neighbors(i) {
            a[i][j] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    a
}

pub fn to_dense(m: &DenseMatrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for t in 0..k {
            let av = a[i][t];
            for j in 0..m {
                out[i][j] += av * b[t][j];
            }
        }
    }
    out
}

/// `A ⊙ (H Hᵀ)` restricted to the nonzeros of `A`.
pub fn dense_masked(a: &Dense, h: &Dense) -> Dense {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                let s: f64 = h[i].iter().zip(&h[j]).map(|(x, y)| x * y).sum();
                out[i][j] = a[i][j] * s;
            }
        }
    }
    out
}

/// Closed form `(1-α)^K A^K M + α Σ_{k<K} (1-α)^k A^k M`.
pub fn dense_ppr(a: &Dense, m: &Dense, alpha: f64, k: usize) -> Dense {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut acc = vec![vec![0.0; cols]; rows];
    let mut power = m.clone();
    for step in 0..k {
        let c = alpha * (1.0 - alpha).powi(step as i32);
        for i in 0..rows {
            for j in 0..cols {
                acc[i][j] += c * power[i][j];
            }
        }
        power = matmul(a, &power);
    }
    let c = (1.0 - alpha).powi(k as i32);
    for i in 0..rows {
        for j in 0..cols {
            acc[i][j] += c * power[i][j];
        }
    }
    acc
}

pub fn max_abs_diff(a: &Dense, b: &DenseMatrix) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

/// A small classifier problem: sparse features, soft labels with a few
/// all-zero rows, random positive node weights.
pub struct GradInstance {
    pub x: SparseFeatures,
    pub y: DenseMatrix,
    pub w: Vec<f64>,
    pub p: ClassifierParams,
    pub wd: f64,
}

pub fn grad_instance(n: usize, d: usize, f: usize, c: usize, seed: u64) -> GradInstance {
    let mut r = rng(seed);
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..d {
            if r.random_bool(0.6) {
                trip.push((i, j, r.random_range(-1.0..1.0)));
            }
        }
    }
    let x = SparseFeatures::from_triplets(n, d, &trip).unwrap();
    let mut y = random_dense(n, c, 0.0, 1.0, &mut r);
    for i in 0..n {
        if r.random_bool(0.2) {
            y.row_mut(i).fill(0.0);
        }
    }
    let w = (0..n).map(|_| r.random_range(0.1..2.0)).collect();
    let mut p = ClassifierParams::glorot(d, f, c, r.random());
    for v in p.b1.iter_mut().chain(p.b2.iter_mut()) {
        *v = r.random_range(-0.5..0.5);
    }
    GradInstance {
        x,
        y,
        w,
        p,
        wd: r.random_range(0.0..0.1),
    }
}

fn objective(g: &GradInstance, p: &ClassifierParams) -> f64 {
    let (logits, _) = forward(&g.x, p, ForwardMode::Eval).unwrap();
    let reg: f64 = p.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum();
    soft_cross_entropy(&logits, &g.y, &g.w).unwrap() + 0.5 * g.wd * reg
}

/// Largest elementwise `|a-n| / max(|a|, |n|, 1e-7)` between the analytic
/// gradient and a central difference with step `h`.
pub fn grad_check_max_rel_error(g: &GradInstance, h: f64) -> f64 {
    let (_, cache) = forward(&g.x, &g.p, ForwardMode::Train { drop: 0.0, seed: 0 }).unwrap();
    let analytic = backward(&cache.unwrap(), &g.x, &g.y, &g.w, &g.p, g.wd).unwrap();
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut worst = 0.0f64;
    for (ti, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = g.p.clone();
            plus.tensors_mut()[ti][k] += h;
            let mut minus = g.p.clone();
            minus.tensors_mut()[ti][k] -= h;
            let num = (objective(g, &plus) - objective(g, &minus)) / (2.0 * h);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    worst
}
