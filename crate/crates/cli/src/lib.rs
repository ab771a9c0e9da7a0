//! Experiment harness: multi-seed benchmarks, structure-noise sweeps,
//! hyperparameter sweeps and ablations, with JSON reports carrying every
//! per-seed number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use pamt_core::trainer::derive_seed;
use pamt_core::{
    generate_split, inject_structure_noise, run_variant, structure_noise_rate, Error, GraphBundle, HyperParams,
    ModelVariant, Problem, Result, RunOutcome,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "PAMT_WORKERS";

const STREAM_SPLIT: u64 = 101;
const STREAM_NOISE: u64 = 102;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub variant: ModelVariant,
    pub dataset: String,
    /// Swept values for this cell, e.g. `{"noise_rate": 0.4}` or `{"K": 8}`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub setting: BTreeMap<String, f64>,
    pub seeds: Vec<u64>,
    /// Test accuracy per seed, in percent.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (0 for a single seed).
    pub std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_noise_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub dataset: String,
    pub hyper_params: HyperParams,
    pub base_seed: u64,
    pub results: Vec<ExperimentResult>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data") + "\n"
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub n_seeds: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    pub record_wall_time: bool,
    /// Use the bundle's stored split instead of drawing one per seed.
    pub bundle_split: bool,
}

impl RunOptions {
    pub fn new(n_seeds: usize, base_seed: u64) -> Self {
        Self {
            n_seeds,
            base_seed,
            workers: None,
            record_wall_time: false,
            bundle_split: false,
        }
    }

    /// Seed of the `i`-th run.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64)
            .map(|i| self.base_seed.wrapping_add(i))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Invalid("worker count must be positive".into()));
        }
        Ok(())
    }
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> std::result::Result<Option<usize>, String> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`")),
        Err(_) => Ok(None),
    }
}

/// Mean and population standard deviation.
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Invalid(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

struct SeedRun {
    acc: f64,
    noise: Option<f64>,
}

fn split_for(bundle: &GraphBundle, hp: &HyperParams, seed: u64, opts: &RunOptions) -> Result<pamt_core::SplitSpec> {
    if opts.bundle_split {
        bundle
            .splits
            .clone()
            .ok_or_else(|| Error::Invalid(format!("bundle `{}` has no stored split", bundle.name)))
    } else {
        generate_split(bundle, hp.per_class_train, hp.val_size, derive_seed(seed, STREAM_SPLIT))
    }
}

fn run_one(
    bundle: &GraphBundle,
    hp: &HyperParams,
    variant: ModelVariant,
    seed: u64,
    noise_rate: Option<f64>,
    opts: &RunOptions,
) -> Result<SeedRun> {
    let mut hp = hp.clone();
    hp.seed = seed;
    let (noisy, noise) = match noise_rate {
        Some(rate) => {
            let g = inject_structure_noise(&bundle.graph, &bundle.labels, rate, derive_seed(seed, STREAM_NOISE))?;
            let achieved = structure_noise_rate(&g, &bundle.labels)?;
            (Some(bundle.with_graph(g)?), Some(achieved))
        }
        None => (None, None),
    };
    let b = noisy.as_ref().unwrap_or(bundle);
    let split = split_for(b, &hp, seed, opts)?;
    let problem = Problem::new(b, split, &hp)?;
    let out = run_variant(&problem, &hp, variant)?;
    Ok(SeedRun {
        acc: 100.0 * out.test_acc,
        noise,
    })
}

/// One training run as the harness performs it for `seed` (same split and
/// noise streams), without noise injection.
pub fn single_run(
    bundle: &GraphBundle,
    hp: &HyperParams,
    variant: ModelVariant,
    seed: u64,
    bundle_split: bool,
) -> Result<RunOutcome> {
    let mut hp = hp.clone();
    hp.seed = seed;
    let mut opts = RunOptions::new(1, seed);
    opts.bundle_split = bundle_split;
    let split = split_for(bundle, &hp, seed, &opts)?;
    let problem = Problem::new(bundle, split, &hp)?;
    run_variant(&problem, &hp, variant)
}

fn run_cell(
    bundle: &GraphBundle,
    hp: &HyperParams,
    variant: ModelVariant,
    setting: BTreeMap<String, f64>,
    noise_rate: Option<f64>,
    opts: &RunOptions,
) -> Result<ExperimentResult> {
    let seeds = opts.seeds();
    let start = Instant::now();
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&s| run_one(bundle, hp, variant, s, noise_rate, opts))
        .collect::<Result<_>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|r| r.acc).collect();
    let (mean, std) = aggregate(&accuracies);
    Ok(ExperimentResult {
        variant,
        dataset: bundle.name.clone(),
        setting,
        seeds,
        accuracies,
        mean,
        std,
        achieved_noise_rates: noise_rate.map(|_| runs.iter().map(|r| r.noise.unwrap_or(f64::NAN)).collect()),
        wall_time_secs: opts.record_wall_time.then(|| start.elapsed().as_secs_f64()),
    })
}

fn report(
    command: &str,
    bundle: &GraphBundle,
    hp: &HyperParams,
    opts: &RunOptions,
    results: Vec<ExperimentResult>,
) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        dataset: bundle.name.clone(),
        hyper_params: hp.clone(),
        base_seed: opts.base_seed,
        results,
    }
}

/// Every variant over every seed, each seed with its own split.
pub fn run_benchmark(
    bundle: &GraphBundle,
    hp: &HyperParams,
    variants: &[ModelVariant],
    opts: &RunOptions,
) -> Result<Report> {
    opts.validate()?;
    hp.validate()?;
    let results = with_pool(opts.workers, || {
        variants
            .iter()
            .map(|&v| run_cell(bundle, hp, v, BTreeMap::new(), None, opts))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(report("benchmark", bundle, hp, opts, results))
}

/// Injects structure noise at each rate (fresh sample per seed) and trains
/// every variant on the perturbed graph. All variants of a seed see the
/// same perturbed graph.
pub fn noise_sweep(
    bundle: &GraphBundle,
    hp: &HyperParams,
    variants: &[ModelVariant],
    rates: &[f64],
    opts: &RunOptions,
) -> Result<Report> {
    opts.validate()?;
    hp.validate()?;
    let current = structure_noise_rate(&bundle.graph, &bundle.labels)?;
    for &r in rates {
        if r < current - 1e-12 {
            return Err(Error::CannotDenoise { current, target: r });
        }
    }
    let results = with_pool(opts.workers, || {
        let mut out = Vec::new();
        for &rate in rates {
            for &v in variants {
                let setting = BTreeMap::from([("noise_rate".to_string(), rate)]);
                out.push(run_cell(bundle, hp, v, setting, Some(rate), opts)?);
            }
        }
        Ok::<_, Error>(out)
    })??;
    Ok(report("noise-sweep", bundle, hp, opts, results))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    K,
    Alpha,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::K => "K",
            SweepParam::Alpha => "alpha",
        }
    }

    /// Grid used when no values are given: K in 6..=20 step 2, alpha in
    /// 0..=0.5 step 0.05.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::K => (3..=10).map(|i| (2 * i) as f64).collect(),
            SweepParam::Alpha => (0..=10).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "K" | "k" => Ok(SweepParam::K),
            "alpha" => Ok(SweepParam::Alpha),
            _ => Err(format!("unknown sweep parameter `{s}` (expected K or alpha)")),
        }
    }
}

pub fn param_sweep(
    bundle: &GraphBundle,
    hp: &HyperParams,
    variant: ModelVariant,
    param: SweepParam,
    values: &[f64],
    opts: &RunOptions,
) -> Result<Report> {
    opts.validate()?;
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let mut h = hp.clone();
        match param {
            SweepParam::K => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::BadValue {
                        key: "K".into(),
                        msg: format!("{v} is not a non-negative integer"),
                    });
                }
                h.k = v as usize;
            }
            SweepParam::Alpha => h.alpha = v,
        }
        h.validate()?;
        configs.push((v, h));
    }
    let results = with_pool(opts.workers, || {
        configs
            .iter()
            .map(|(v, h)| {
                let setting = BTreeMap::from([(param.key().to_string(), *v)]);
                run_cell(bundle, h, variant, setting, None, opts)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(report("param-sweep", bundle, hp, opts, results))
}

pub const ABLATION_VARIANTS: [ModelVariant; 4] = [
    ModelVariant::Pts,
    ModelVariant::Pamt0,
    ModelVariant::Pamt1,
    ModelVariant::Pamt,
];

pub fn ablate(bundle: &GraphBundle, hp: &HyperParams, opts: &RunOptions) -> Result<Report> {
    let mut r = run_benchmark(bundle, hp, &ABLATION_VARIANTS, opts)?;
    r.command = "ablate".into();
    Ok(r)
}

/// Structural checks on a parsed report: schema version, distinct seeds,
/// per-seed arrays of matching length, aggregates recomputable from the
/// per-seed values.
pub fn validate_report(r: &Report) -> std::result::Result<(), String> {
    if r.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "schema_version {} (expected {SCHEMA_VERSION})",
            r.schema_version
        ));
    }
    if r.results.is_empty() {
        return Err("no results".into());
    }
    for (i, e) in r.results.iter().enumerate() {
        let mut seen = std::collections::BTreeSet::new();
        if e.seeds.is_empty() || !e.seeds.iter().all(|s| seen.insert(*s)) {
            return Err(format!("result {i}: seeds empty or repeated"));
        }
        if e.accuracies.len() != e.seeds.len() {
            return Err(format!(
                "result {i}: {} accuracies for {} seeds",
                e.accuracies.len(),
                e.seeds.len()
            ));
        }
        if let Some(n) = &e.achieved_noise_rates {
            if n.len() != e.seeds.len() {
                return Err(format!("result {i}: noise rates do not match seeds"));
            }
        }
        if e.accuracies.iter().any(|a| !(0.0..=100.0).contains(a)) {
            return Err(format!("result {i}: accuracy outside [0,100]"));
        }
        let (mean, std) = aggregate(&e.accuracies);
        if (mean - e.mean).abs() > 1e-9 || (std - e.std).abs() > 1e-9 {
            return Err(format!("result {i}: mean/std do not match per-seed accuracies"));
        }
    }
    Ok(())
}

/// Aligned plain-text rendering of a report.
pub fn format_table(r: &Report) -> String {
    let keys: Vec<String> = {
        let mut k: Vec<String> = r.results.iter().flat_map(|e| e.setting.keys().cloned()).collect();
        k.sort();
        k.dedup();
        k
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["variant".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["accuracy (%)".to_string(), "seeds".to_string()]);
    if r.results.iter().any(|e| e.achieved_noise_rates.is_some()) {
        header.push("achieved noise".into());
    }
    rows.push(header.clone());
    for e in &r.results {
        let mut row = vec![e.variant.to_string()];
        for k in &keys {
            row.push(e.setting.get(k).map_or(String::new(), |v| format!("{v}")));
        }
        row.push(format!("{:.2} ± {:.2}", e.mean, e.std));
        row.push(e.seeds.len().to_string());
        if let Some(n) = &e.achieved_noise_rates {
            let (m, _) = aggregate(n);
            row.push(format!("{m:.4}"));
        } else if header.len() > row.len() {
            row.push(String::new());
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r.get(c).map_or(0, |s| s.chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{} ({}, base seed {})", r.command, r.dataset, r.base_seed);
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}
