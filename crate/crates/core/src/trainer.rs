//! End-to-end training: classifier warm-up on labeled nodes, soft labels
//! from masked propagation, periodic mask/label refinement with a momentum
//! blend, early stopping, inference and evaluation.
//!
//! Variants share one loop:
//!
//! | variant  | initial mask from         | refinement            |
//! |----------|---------------------------|-----------------------|
//! | PAMT     | warmed-up classifier      | every `t_u`, blend β  |
//! | PAMT0    | warmed-up classifier      | never                 |
//! | PAMT1    | warmed-up classifier      | every `t_u`, β = 0    |
//! | PAMTR    | randomly initialized one  | every `t_u`, blend β  |
//! | PTS      | no mask (all ones)        | never                 |
//!
//! `LP_ONLY` skips training and predicts from propagated labels; `MLP_ONLY`
//! trains on the labeled nodes and predicts without propagation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{HyperParams, LossWeighting, Representation};
use crate::data::{GraphBundle, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, LabelAssignment, NormalizedAdjacency};
use crate::nn::{adam_step, backward, forward, soft_cross_entropy, ClassifierParams, ForwardMode, OptimizerState};
use crate::propagation::{
    build_propagation_matrix, build_similarity_mask, one_hot_labels, propagate, propagate_labels, PropagationConfig,
    PropagationMatrix, SimilarityMask,
};
use crate::sparse::{DenseMatrix, SparseFeatures};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelVariant {
    Pamt,
    Pamt0,
    Pamt1,
    PamtR,
    Pts,
    LpOnly,
    MlpOnly,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::Pamt,
        ModelVariant::Pamt0,
        ModelVariant::Pamt1,
        ModelVariant::PamtR,
        ModelVariant::Pts,
        ModelVariant::LpOnly,
        ModelVariant::MlpOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Pamt => "pamt",
            ModelVariant::Pamt0 => "pamt0",
            ModelVariant::Pamt1 => "pamt1",
            ModelVariant::PamtR => "pamtr",
            ModelVariant::Pts => "pts",
            ModelVariant::LpOnly => "lp_only",
            ModelVariant::MlpOnly => "mlp_only",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.to_ascii_lowercase().as_str() {
            "pamt" => ModelVariant::Pamt,
            "pamt0" | "pamt_0" => ModelVariant::Pamt0,
            "pamt1" | "pamt_1" => ModelVariant::Pamt1,
            "pamtr" | "pamt_r" => ModelVariant::PamtR,
            "pts" => ModelVariant::Pts,
            "lp" | "lp_only" => ModelVariant::LpOnly,
            "mlp" | "mlp_only" => ModelVariant::MlpOnly,
            _ => return Err(Error::UnknownVariant(s.to_string())),
        };
        Ok(v)
    }
}

impl From<ModelVariant> for String {
    fn from(v: ModelVariant) -> String {
        v.name().to_string()
    }
}

impl TryFrom<String> for ModelVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub refined: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned snapshot; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Serialize)]
struct FinalRecord {
    test_acc: Option<f64>,
    best_epoch: usize,
}

impl TrainingLog {
    /// One JSON object per epoch followed by `{test_acc, best_epoch}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r).expect("plain struct"));
            out.push('\n');
        }
        let last = FinalRecord {
            test_acc: self.test_acc,
            best_epoch: self.best_epoch,
        };
        out.push_str(&serde_json::to_string(&last).expect("plain struct"));
        out.push('\n');
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.loss).collect()
    }
}

/// Everything a run needs, derived once from a bundle and a split.
#[derive(Clone, Debug)]
pub struct Problem {
    pub features: SparseFeatures,
    pub norm_adj: NormalizedAdjacency,
    pub labels: LabelAssignment,
    pub split: SplitSpec,
    /// One-hot rows on training nodes, zero elsewhere.
    pub y_l: DenseMatrix,
}

impl Problem {
    pub fn new(bundle: &GraphBundle, split: SplitSpec, hp: &HyperParams) -> Result<Self> {
        bundle.validate()?;
        split.validate(&bundle.labels)?;
        if split.train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let features = if hp.normalize_features {
            bundle.features.row_l1_normalized()
        } else {
            bundle.features.clone()
        };
        let y_l = one_hot_labels(bundle.n(), bundle.num_classes(), &split.train, &bundle.labels)?;
        Ok(Self {
            features,
            norm_adj: normalize_adjacency(&bundle.graph),
            labels: bundle.labels.clone(),
            split,
            y_l,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ClassifierParams,
    pub log: TrainingLog,
}

/// Experiment switches that are not part of any named variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Replace the similarity mask with all ones (and skip the warm-up it
    /// would need).
    pub force_unit_mask: bool,
}

const STREAM_INIT: u64 = 1;
const STREAM_WARMUP: u64 = 2;
const STREAM_TRAIN: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for a named random stream of one run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn fresh_params(problem: &Problem, hp: &HyperParams) -> ClassifierParams {
    ClassifierParams::glorot(
        problem.features.cols(),
        hp.dim,
        problem.num_classes(),
        derive_seed(hp.seed, STREAM_INIT),
    )
}

/// Fixed-length supervised warm-up on the labeled nodes with one-hot
/// targets. With `init_epochs = 0` this is just the seeded initialization.
pub fn init_classifier(problem: &Problem, hp: &HyperParams) -> Result<ClassifierParams> {
    if problem.split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let mut params = fresh_params(problem, hp);
    let mut opt = OptimizerState::new(&params, hp.lr);
    let weights = vec![1.0; problem.n()];
    let stream = derive_seed(hp.seed, STREAM_WARMUP);
    for epoch in 1..=hp.init_epochs {
        let mode = ForwardMode::Train {
            drop: hp.drop,
            seed: derive_seed(stream, epoch as u64),
        };
        let (_, cache) = forward(&problem.features, &params, mode)?;
        let grads = backward(
            &cache.expect("train mode"),
            &problem.features,
            &problem.y_l,
            &weights,
            &params,
            hp.wd,
        )?;
        adam_step(&mut params, &grads, &mut opt)?;
    }
    Ok(params)
}

/// Node representation fed to the similarity mask.
pub fn node_representation(params: &ClassifierParams, x: &SparseFeatures, repr: Representation) -> Result<DenseMatrix> {
    let (logits, _) = forward(x, params, ForwardMode::Eval)?;
    Ok(match repr {
        Representation::Softmax => logits.softmax_rows(),
        Representation::Logits => logits,
    })
}

/// Propagation matrix `Â ⊙ A_s` for the current classifier.
pub fn masked_propagation_matrix(
    problem: &Problem,
    hp: &HyperParams,
    params: &ClassifierParams,
    unit_mask: bool,
) -> Result<PropagationMatrix> {
    let mask = if unit_mask {
        SimilarityMask::ones(&problem.norm_adj)
    } else {
        let h = node_representation(params, &problem.features, hp.representation)?;
        build_similarity_mask(&h, &problem.norm_adj)?
    };
    let ap = build_propagation_matrix(&problem.norm_adj, &mask)?;
    Ok(if hp.renormalize_mask { ap.row_renormalized() } else { ap })
}

/// Soft labels from masked propagation of the observed labels.
pub fn masked_soft_labels(
    problem: &Problem,
    hp: &HyperParams,
    params: &ClassifierParams,
    unit_mask: bool,
) -> Result<DenseMatrix> {
    let ap = masked_propagation_matrix(problem, hp, params, unit_mask)?;
    let mut y = propagate_labels(&ap, &problem.y_l, hp.propagation())?;
    if hp.representation == Representation::Logits {
        // logit similarities can be negative; negative label mass is dropped
        for v in y.as_mut_slice() {
            *v = v.max(0.0);
        }
    }
    Ok(y)
}

/// `β Y_soft + (1-β) Y_t`.
pub fn momentum_update(y_soft: &DenseMatrix, y_t: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Invalid(format!("momentum coefficient {beta} outside [0,1)")));
    }
    y_soft.lin_comb(beta, y_t, 1.0 - beta)
}

/// Eval-mode classifier, row softmax, propagation over `Â` (or over the
/// masked matrix when `masked`), then argmax with ties to the lowest class.
pub fn infer(
    params: &ClassifierParams,
    x: &SparseFeatures,
    norm_adj: &NormalizedAdjacency,
    cfg: PropagationConfig,
    masked: bool,
) -> Result<Vec<usize>> {
    let (logits, _) = forward(x, params, ForwardMode::Eval)?;
    let probs = logits.softmax_rows();
    let scores = if masked {
        let mask = build_similarity_mask(&probs, norm_adj)?;
        let ap = build_propagation_matrix(norm_adj, &mask)?;
        propagate(ap.as_sparse(), &probs, cfg)?
    } else {
        propagate(norm_adj.as_sparse(), &probs, cfg)?
    };
    Ok(scores.argmax_rows())
}

fn classifier_predictions(params: &ClassifierParams, x: &SparseFeatures) -> Result<Vec<usize>> {
    Ok(forward(x, params, ForwardMode::Eval)?.0.argmax_rows())
}

/// Fraction of `nodes` whose prediction matches the label.
pub fn evaluate(predictions: &[usize], labels: &LabelAssignment, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let mut correct = 0usize;
    for &u in nodes {
        let truth = labels
            .get(u)
            .ok_or_else(|| Error::Invalid(format!("evaluated node {u} is unlabeled")))?;
        if predictions.get(u) == Some(&truth) {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

#[derive(Clone, Copy, PartialEq)]
enum Predictor {
    Propagated,
    Classifier,
}

struct Refinement {
    beta: f64,
    unit_mask: bool,
}

fn predict(problem: &Problem, hp: &HyperParams, params: &ClassifierParams, predictor: Predictor) -> Result<Vec<usize>> {
    match predictor {
        Predictor::Propagated => infer(
            params,
            &problem.features,
            &problem.norm_adj,
            hp.propagation(),
            hp.masked_inference,
        ),
        Predictor::Classifier => classifier_predictions(params, &problem.features),
    }
}

fn node_weights(y_soft: &DenseMatrix, weighting: LossWeighting) -> Vec<f64> {
    match weighting {
        LossWeighting::Uniform => vec![1.0; y_soft.rows()],
        LossWeighting::Mass => y_soft.row_iter().map(|r| r.iter().sum()).collect(),
    }
}

fn run_training(
    problem: &Problem,
    hp: &HyperParams,
    mut params: ClassifierParams,
    mut y_soft: DenseMatrix,
    refinement: Option<Refinement>,
    predictor: Predictor,
) -> Result<TrainOutput> {
    hp.validate()?;
    let select_nodes = if problem.split.val.is_empty() {
        &problem.split.train
    } else {
        &problem.split.val
    };
    let mut opt = OptimizerState::new(&params, hp.lr);
    let stream = derive_seed(hp.seed, STREAM_TRAIN);
    let mut log = TrainingLog::default();
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;

    for epoch in 1..=hp.max_epochs {
        let mut refined = false;
        if let Some(r) = &refinement {
            if epoch % hp.t_u == 0 {
                let fresh = masked_soft_labels(problem, hp, &params, r.unit_mask)?;
                y_soft = momentum_update(&y_soft, &fresh, r.beta)?;
                refined = true;
            }
        }

        let weights = node_weights(&y_soft, hp.loss_weighting);
        let mode = ForwardMode::Train {
            drop: hp.drop,
            seed: derive_seed(stream, epoch as u64),
        };
        let (logits, cache) = forward(&problem.features, &params, mode)?;
        let loss = soft_cross_entropy(&logits, &y_soft, &weights)?;
        let grads = backward(
            &cache.expect("train mode"),
            &problem.features,
            &y_soft,
            &weights,
            &params,
            hp.wd,
        )?;
        adam_step(&mut params, &grads, &mut opt)?;
        if !params.is_finite() {
            return Err(Error::Invalid(format!("parameters diverged at epoch {epoch}")));
        }

        let preds = predict(problem, hp, &params, predictor)?;
        let val_acc = evaluate(&preds, &problem.labels, select_nodes)?;
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            val_acc,
            refined,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best.clone_from(&params);
            log.best_epoch = epoch;
            log.best_val_acc = val_acc;
        }
        if epoch - log.best_epoch >= hp.patience {
            break;
        }
    }
    Ok(TrainOutput { params: best, log })
}

pub fn train_pamt(problem: &Problem, hp: &HyperParams, variant: ModelVariant) -> Result<TrainOutput> {
    train_pamt_with(problem, hp, variant, TrainOptions::default())
}

pub fn train_pamt_with(
    problem: &Problem,
    hp: &HyperParams,
    variant: ModelVariant,
    opts: TrainOptions,
) -> Result<TrainOutput> {
    hp.validate()?;
    let beta = match variant {
        ModelVariant::Pamt | ModelVariant::PamtR => Some(hp.beta),
        ModelVariant::Pamt1 => Some(0.0),
        ModelVariant::Pamt0 => None,
        other => {
            return Err(Error::Invalid(format!("`{other}` is not a masked-propagation variant")));
        }
    };
    let unit_mask = opts.force_unit_mask;
    let params = if unit_mask || variant == ModelVariant::PamtR {
        fresh_params(problem, hp)
    } else {
        init_classifier(problem, hp)?
    };
    let y_soft = masked_soft_labels(problem, hp, &params, unit_mask)?;
    let refinement = beta.map(|beta| Refinement { beta, unit_mask });
    run_training(problem, hp, params, y_soft, refinement, Predictor::Propagated)
}

/// Static soft labels from unmasked propagation, fixed for the whole run.
pub fn train_pts(problem: &Problem, hp: &HyperParams) -> Result<TrainOutput> {
    hp.validate()?;
    let params = fresh_params(problem, hp);
    let y_soft = propagate_labels(
        &PropagationMatrix::unmasked(&problem.norm_adj),
        &problem.y_l,
        hp.propagation(),
    )?;
    run_training(problem, hp, params, y_soft, None, Predictor::Propagated)
}

/// Classifier trained on the labeled nodes only, predicting without
/// propagation.
pub fn train_mlp(problem: &Problem, hp: &HyperParams) -> Result<TrainOutput> {
    hp.validate()?;
    let params = fresh_params(problem, hp);
    run_training(problem, hp, params, problem.y_l.clone(), None, Predictor::Classifier)
}

/// Argmax of the unmasked label propagation; no classifier involved.
pub fn label_propagation_predictions(problem: &Problem, cfg: PropagationConfig) -> Result<Vec<usize>> {
    let y = propagate_labels(&PropagationMatrix::unmasked(&problem.norm_adj), &problem.y_l, cfg)?;
    Ok(y.argmax_rows())
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub variant: ModelVariant,
    /// `None` for `LP_ONLY`.
    pub params: Option<ClassifierParams>,
    pub log: TrainingLog,
    pub predictions: Vec<usize>,
    pub test_acc: f64,
}

/// Trains (if needed) and evaluates one variant on the problem's test split.
pub fn run_variant(problem: &Problem, hp: &HyperParams, variant: ModelVariant) -> Result<RunOutcome> {
    let (params, mut log, predictions) = match variant {
        ModelVariant::LpOnly => {
            hp.validate()?;
            (
                None,
                TrainingLog::default(),
                label_propagation_predictions(problem, hp.propagation())?,
            )
        }
        ModelVariant::MlpOnly => {
            let out = train_mlp(problem, hp)?;
            let preds = classifier_predictions(&out.params, &problem.features)?;
            (Some(out.params), out.log, preds)
        }
        _ => {
            let out = if variant == ModelVariant::Pts {
                train_pts(problem, hp)?
            } else {
                train_pamt(problem, hp, variant)?
            };
            let preds = predict(problem, hp, &out.params, Predictor::Propagated)?;
            (Some(out.params), out.log, preds)
        }
    };
    let test_acc = evaluate(&predictions, &problem.labels, &problem.split.test)?;
    log.test_acc = Some(test_acc);
    Ok(RunOutcome {
        variant,
        params,
        log,
        predictions,
        test_acc,
    })
}
