//! Semi-supervised node classification with adaptively masked label
//! propagation.
//!
//! A classifier over node features produces class distributions; their
//! pairwise similarities mask the symmetric-normalized adjacency, the masked
//! operator propagates the observed labels into soft targets, and the
//! classifier is trained on those targets while the mask is periodically
//! rebuilt.

pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod nn;
pub mod propagation;
pub mod sparse;
pub mod synthetic;
pub mod trainer;

pub use config::{load_config, parse_config, HyperParams, LossWeighting, Representation, PRESETS};
pub use data::{generate_split, load_bundle, resolve_bundle_dir, save_bundle, DatasetStats, GraphBundle, SplitSpec};
pub use error::{Error, Result};
pub use graph::{
    inject_structure_noise, normalize_adjacency, structure_noise_rate, Graph, LabelAssignment, NormalizedAdjacency,
};
pub use nn::{load_checkpoint, save_checkpoint, ClassifierParams};
pub use propagation::{
    build_propagation_matrix, build_similarity_mask, propagate, propagate_labels, PropagationConfig, PropagationMatrix,
    SimilarityMask,
};
pub use sparse::{DenseMatrix, SparseAdjacency, SparseFeatures};
pub use synthetic::{generate_csbm, SyntheticSpec};
pub use trainer::{
    evaluate, infer, run_variant, train_pamt, train_pamt_with, train_pts, ModelVariant, Problem, RunOutcome,
    TrainOptions, TrainOutput, TrainingLog,
};
