//! One-hidden-layer relu classifier with dropout, soft-label cross-entropy,
//! hand-derived gradients and Adam.
//!
//! Weight decay is a coupled L2 term: `backward` adds `wd * θ` to every
//! gradient (biases included) and `adam_step` never touches `wd`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{DenseMatrix, SparseFeatures};

/// Parameters of `logits = relu(x W1 + b1) W2 + b2`.
///
/// The same struct carries gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(d: usize, f: usize, c: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(d, f),
            b1: vec![0.0; f],
            w2: DenseMatrix::zeros(f, c),
            b2: vec![0.0; c],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(d: usize, f: usize, c: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(d, f, c);
        let mut fill = |m: &mut DenseMatrix, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            for v in m.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p.w1, d, f);
        fill(&mut p.w2, f, c);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.num_classes())
    }

    fn check_shapes(&self) -> Result<()> {
        if self.b1.len() != self.w1.cols() || self.w2.rows() != self.w1.cols() || self.b2.len() != self.w2.cols() {
            return Err(Error::dims(format!(
                "inconsistent classifier shapes: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                self.w1.rows(),
                self.w1.cols(),
                self.b1.len(),
                self.w2.rows(),
                self.w2.cols(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    /// The four tensors in checkpoint order: w1, b1, w2, b2.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForwardMode {
    /// Deterministic, no dropout, no cache.
    Eval,
    /// Inverted dropout with rate `drop` on inputs and hidden units.
    Train { drop: f64, seed: u64 },
}

/// Everything `backward` needs from a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Per stored feature entry: 0 or 1/(1-drop). `None` when drop = 0.
    input_scale: Option<Vec<f64>>,
    hidden_pre: DenseMatrix,
    /// Post-relu, post-dropout hidden activations.
    hidden: DenseMatrix,
    hidden_scale: Option<Vec<f64>>,
    logits: DenseMatrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &DenseMatrix {
        &self.logits
    }
}

fn dropout_scales(rng: &mut ChaCha8Rng, len: usize, drop: f64) -> Option<Vec<f64>> {
    if drop == 0.0 {
        return None;
    }
    let keep = 1.0 - drop;
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect(),
    )
}

pub fn forward(
    x: &SparseFeatures,
    p: &ClassifierParams,
    mode: ForwardMode,
) -> Result<(DenseMatrix, Option<ForwardCache>)> {
    p.check_shapes()?;
    if x.cols() != p.input_dim() {
        return Err(Error::dims(format!(
            "features have {} columns, classifier expects {}",
            x.cols(),
            p.input_dim()
        )));
    }
    let (drop, mut rng) = match mode {
        ForwardMode::Eval => (0.0, None),
        ForwardMode::Train { drop, seed } => {
            if !(0.0..1.0).contains(&drop) {
                return Err(Error::Invalid(format!("dropout rate {drop} outside [0,1)")));
            }
            (drop, Some(ChaCha8Rng::seed_from_u64(seed)))
        }
    };
    let input_scale = rng.as_mut().and_then(|r| dropout_scales(r, x.nnz(), drop));

    let mut pre = x.matmul(&p.w1, input_scale.as_deref())?;
    let f = p.hidden_dim();
    if f > 0 {
        pre.as_mut_slice().par_chunks_mut(f).for_each(|row| {
            for (v, b) in row.iter_mut().zip(&p.b1) {
                *v += b;
            }
        });
    }
    let hidden_scale = rng.as_mut().and_then(|r| dropout_scales(r, pre.rows() * f, drop));
    let mut hidden = pre.clone();
    for (k, v) in hidden.as_mut_slice().iter_mut().enumerate() {
        *v = v.max(0.0);
        if let Some(s) = &hidden_scale {
            *v *= s[k];
        }
    }

    let logits = dense_affine(&hidden, &p.w2, &p.b2);
    let cache = rng.map(|_| ForwardCache {
        input_scale,
        hidden_pre: pre,
        hidden,
        hidden_scale,
        logits: logits.clone(),
    });
    Ok((logits, cache))
}

/// `h W + b`, row-parallel.
fn dense_affine(h: &DenseMatrix, w: &DenseMatrix, b: &[f64]) -> DenseMatrix {
    let c = w.cols();
    let mut out = DenseMatrix::zeros(h.rows(), c);
    if c == 0 {
        return out;
    }
    out.as_mut_slice().par_chunks_mut(c).enumerate().for_each(|(i, dst)| {
        dst.copy_from_slice(b);
        for (k, &hv) in h.row(i).iter().enumerate() {
            if hv == 0.0 {
                continue;
            }
            for (d, wv) in dst.iter_mut().zip(w.row(k)) {
                *d += hv * wv;
            }
        }
    });
    out
}

fn log_softmax(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for (o, v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Row-normalized targets and effective weights. Rows whose soft labels sum
/// to zero get weight zero.
fn normalized_targets(y_soft: &DenseMatrix, node_weights: &[f64]) -> Result<(DenseMatrix, Vec<f64>, f64)> {
    if y_soft.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeEntry("soft labels"));
    }
    if node_weights.iter().any(|&w| w < 0.0) {
        return Err(Error::NegativeEntry("node weights"));
    }
    let mut targets = y_soft.clone();
    let mut weights = node_weights.to_vec();
    for (i, w) in weights.iter_mut().enumerate() {
        let row = targets.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for v in row.iter_mut() {
                *v /= s;
            }
        } else {
            *w = 0.0;
        }
    }
    let total = weights.iter().sum();
    Ok((targets, weights, total))
}

fn check_loss_shapes(logits: &DenseMatrix, y_soft: &DenseMatrix, node_weights: &[f64]) -> Result<()> {
    if !logits.same_shape(y_soft) || node_weights.len() != logits.rows() {
        return Err(Error::dims(format!(
            "logits {}x{}, soft labels {}x{}, {} node weights",
            logits.rows(),
            logits.cols(),
            y_soft.rows(),
            y_soft.cols(),
            node_weights.len()
        )));
    }
    Ok(())
}

/// Weighted mean over nodes of `-Σ_k ŷ_ik log softmax(z_i)_k`, with `ŷ_i`
/// the L1-normalized soft label. Zero when no node carries weight.
pub fn soft_cross_entropy(logits: &DenseMatrix, y_soft: &DenseMatrix, node_weights: &[f64]) -> Result<f64> {
    check_loss_shapes(logits, y_soft, node_weights)?;
    let (targets, weights, total) = normalized_targets(y_soft, node_weights)?;
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut lsm = vec![0.0; logits.cols()];
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        log_softmax(logits.row(i), &mut lsm);
        let ce: f64 = targets.row(i).iter().zip(&lsm).map(|(t, l)| -t * l).sum();
        acc += w * ce;
    }
    Ok(acc / total)
}

/// Gradient of `soft_cross_entropy + wd/2 ‖θ‖²` with the cached dropout
/// masks held fixed.
pub fn backward(
    cache: &ForwardCache,
    x: &SparseFeatures,
    y_soft: &DenseMatrix,
    node_weights: &[f64],
    p: &ClassifierParams,
    wd: f64,
) -> Result<ClassifierParams> {
    check_loss_shapes(&cache.logits, y_soft, node_weights)?;
    let (n, f, c) = (cache.logits.rows(), p.hidden_dim(), p.num_classes());
    if x.rows() != n || cache.hidden.cols() != f || cache.logits.cols() != c || x.cols() != p.input_dim() {
        return Err(Error::dims("forward cache does not match inputs/parameters"));
    }
    let (targets, weights, total) = normalized_targets(y_soft, node_weights)?;

    // dL/dlogits = w_i / W * (softmax(z_i) - ŷ_i)
    let mut g_logits = DenseMatrix::zeros(n, c);
    if total > 0.0 {
        let mut lsm = vec![0.0; c];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            log_softmax(cache.logits.row(i), &mut lsm);
            let scale = w / total;
            for ((g, l), t) in g_logits.row_mut(i).iter_mut().zip(&lsm).zip(targets.row(i)) {
                *g = scale * (l.exp() - t);
            }
        }
    }

    let mut grads = p.zeros_like();
    for i in 0..n {
        for (b, g) in grads.b2.iter_mut().zip(g_logits.row(i)) {
            *b += g;
        }
        for (k, &h) in cache.hidden.row(i).iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            for (gw, g) in grads.w2.row_mut(k).iter_mut().zip(g_logits.row(i)) {
                *gw += h * g;
            }
        }
    }

    // back through W2, hidden dropout and relu
    let mut g_pre = DenseMatrix::zeros(n, f);
    if f > 0 {
        g_pre.as_mut_slice().par_chunks_mut(f).enumerate().for_each(|(i, dst)| {
            let gl = g_logits.row(i);
            for (k, d) in dst.iter_mut().enumerate() {
                if cache.hidden_pre.get(i, k) <= 0.0 {
                    continue;
                }
                let mut s: f64 = p.w2.row(k).iter().zip(gl).map(|(w, g)| w * g).sum();
                if let Some(hs) = &cache.hidden_scale {
                    s *= hs[i * f + k];
                }
                *d = s;
            }
        });
    }
    for i in 0..n {
        for (b, g) in grads.b1.iter_mut().zip(g_pre.row(i)) {
            *b += g;
        }
    }
    grads.w1 = x.transpose_matmul(&g_pre, cache.input_scale.as_deref())?;

    if wd != 0.0 {
        for (g, t) in grads.tensors_mut().into_iter().zip(p.tensors()) {
            for (gv, tv) in g.iter_mut().zip(t) {
                *gv += wd * tv;
            }
        }
    }
    Ok(grads)
}

/// Adam moments and hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: ClassifierParams,
    pub v: ClassifierParams,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(p: &ClassifierParams, lr: f64) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(p: &mut ClassifierParams, grads: &ClassifierParams, s: &mut OptimizerState) -> Result<()> {
    if p.w1.rows() != grads.w1.rows()
        || p.w1.cols() != grads.w1.cols()
        || p.w2.cols() != grads.w2.cols()
        || s.m.w1.rows() != p.w1.rows()
    {
        return Err(Error::dims("optimizer/parameter/gradient shapes differ"));
    }
    s.step += 1;
    let t = s.step as i32;
    let bc1 = 1.0 - s.beta1.powi(t);
    let bc2 = 1.0 - s.beta2.powi(t);
    let (lr, b1, b2, eps) = (s.lr, s.beta1, s.beta2, s.eps);
    let params = p.tensors_mut();
    let ms = s.m.tensors_mut();
    let vs = s.v.tensors_mut();
    for (((theta, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
        for k in 0..theta.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
