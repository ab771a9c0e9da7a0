//! Hyper-parameters, per-dataset presets and the flat `key = value` config
//! format.
//!
//! A config file may start from a preset (`preset = cora_ml`) and override
//! individual keys. Without a preset the eight model keys (`dim`, `alpha`,
//! `wd`, `lr`, `beta`, `K`, `drop`, `t_u`) are required; everything else
//! has a default. Unknown keys are rejected.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::PropagationConfig;

/// What the classifier output fed into the similarity mask is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Row softmax of the logits; keeps mask entries in [0,1].
    Softmax,
    /// Raw logits; mask entries may be negative.
    Logits,
}

/// Per-node weighting of the soft-label loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// Every node with non-zero soft-label mass weighs 1.
    Uniform,
    /// Nodes weigh their total soft-label mass, which amounts to
    /// cross-entropy against the unnormalized soft labels.
    Mass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub dim: usize,
    pub alpha: f64,
    pub wd: f64,
    pub lr: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub drop: f64,
    pub t_u: usize,
    pub max_epochs: usize,
    pub init_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub per_class_train: usize,
    pub val_size: usize,
    pub representation: Representation,
    pub renormalize_mask: bool,
    pub masked_inference: bool,
    pub loss_weighting: LossWeighting,
    pub normalize_features: bool,
}

pub const PRESETS: [&str; 4] = ["cora_ml", "citeseer", "pubmed", "ms_aca"];

impl HyperParams {
    #[allow(clippy::too_many_arguments)]
    fn with_model(dim: usize, alpha: f64, wd: f64, lr: f64, beta: f64, k: usize, drop: f64, t_u: usize) -> Self {
        Self {
            dim,
            alpha,
            wd,
            lr,
            beta,
            k,
            drop,
            t_u,
            max_epochs: 1000,
            init_epochs: 100,
            patience: 100,
            seed: 0,
            per_class_train: 20,
            val_size: 500,
            representation: Representation::Softmax,
            renormalize_mask: false,
            masked_inference: false,
            loss_weighting: LossWeighting::Mass,
            normalize_features: false,
        }
    }

    /// Tuned settings for the four benchmark datasets.
    pub fn preset(name: &str) -> Option<Self> {
        let hp = match name {
            "cora_ml" => Self::with_model(128, 0.10, 0.025, 0.05, 0.50, 10, 0.20, 30),
            "citeseer" => Self::with_model(128, 0.15, 0.055, 0.10, 0.25, 10, 0.15, 20),
            "pubmed" => Self::with_model(128, 0.10, 0.015, 0.10, 0.10, 10, 0.35, 10),
            "ms_aca" => Self::with_model(256, 0.10, 0.010, 0.05, 0.10, 10, 0.35, 10),
            _ => return None,
        };
        Some(hp)
    }

    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            alpha: self.alpha,
            k: self.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::BadValue {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.dim == 0 {
            return bad("dim", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0,1]");
        }
        if !(self.wd >= 0.0 && self.wd.is_finite()) {
            return bad("wd", "must be non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta", "must lie in [0,1)");
        }
        if self.k == 0 {
            return bad("K", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.drop) {
            return bad("drop", "must lie in [0,1)");
        }
        if self.t_u == 0 {
            return bad("t_u", "must be at least 1");
        }
        if self.per_class_train == 0 {
            return bad("per_class_train", "must be positive");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::BadValue {
                key: key.into(),
                msg: format!("cannot parse `{value}`"),
            })
        }
        match key {
            "dim" => self.dim = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "wd" => self.wd = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "K" | "k" => self.k = parse(key, value)?,
            "drop" => self.drop = parse(key, value)?,
            "t_u" => self.t_u = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "init_epochs" => self.init_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "per_class_train" => self.per_class_train = parse(key, value)?,
            "val_size" => self.val_size = parse(key, value)?,
            "representation" => {
                self.representation = match value {
                    "softmax" => Representation::Softmax,
                    "logits" => Representation::Logits,
                    _ => {
                        return Err(Error::BadValue {
                            key: key.into(),
                            msg: "expected softmax or logits".into(),
                        })
                    }
                }
            }
            "renormalize_mask" => self.renormalize_mask = parse(key, value)?,
            "masked_inference" => self.masked_inference = parse(key, value)?,
            "loss_weighting" => {
                self.loss_weighting = match value {
                    "uniform" => LossWeighting::Uniform,
                    "mass" => LossWeighting::Mass,
                    _ => {
                        return Err(Error::BadValue {
                            key: key.into(),
                            msg: "expected uniform or mass".into(),
                        })
                    }
                }
            }
            "normalize_features" => self.normalize_features = parse(key, value)?,
            _ => return Err(Error::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Serializes every field in the config file format.
    pub fn to_config_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "wd = {}", self.wd);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "K = {}", self.k);
        let _ = writeln!(s, "drop = {}", self.drop);
        let _ = writeln!(s, "t_u = {}", self.t_u);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "init_epochs = {}", self.init_epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "per_class_train = {}", self.per_class_train);
        let _ = writeln!(s, "val_size = {}", self.val_size);
        let repr = match self.representation {
            Representation::Softmax => "softmax",
            Representation::Logits => "logits",
        };
        let _ = writeln!(s, "representation = {repr}");
        let _ = writeln!(s, "renormalize_mask = {}", self.renormalize_mask);
        let _ = writeln!(s, "masked_inference = {}", self.masked_inference);
        let lw = match self.loss_weighting {
            LossWeighting::Uniform => "uniform",
            LossWeighting::Mass => "mass",
        };
        let _ = writeln!(s, "loss_weighting = {lw}");
        let _ = writeln!(s, "normalize_features = {}", self.normalize_features);
        f.write_str(&s)
    }
}

const REQUIRED: [&str; 8] = ["dim", "alpha", "wd", "lr", "beta", "K", "drop", "t_u"];

/// Parses config text. `path` is only used in error messages.
pub fn parse_config(text: &str, path: &Path) -> Result<HyperParams> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: "expected `key = value`".into(),
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }

    let preset = entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.clone());
    let mut hp = match &preset {
        Some(name) => HyperParams::preset(name).ok_or_else(|| Error::BadValue {
            key: "preset".into(),
            msg: format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")),
        })?,
        None => {
            for req in REQUIRED {
                let present = entries.iter().any(|(k, _)| k == req || (req == "K" && k == "k"));
                if !present {
                    return Err(Error::MissingKey(req.into()));
                }
            }
            HyperParams::with_model(1, 0.0, 0.0, 1.0, 0.0, 1, 0.0, 1)
        }
    };
    for (key, value) in entries.iter().filter(|(k, _)| k != "preset") {
        hp.set(key, value)?;
    }
    hp.validate()?;
    Ok(hp)
}

pub fn load_config(path: &Path) -> Result<HyperParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}
