use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pamt_cli::{
    ablate, format_table, noise_sweep, param_sweep, run_benchmark, single_run, workers_from_env, Report, RunOptions,
    SweepParam,
};
use pamt_core::{
    generate_csbm, generate_split, load_bundle, load_config, nn::save_checkpoint, resolve_bundle_dir, save_bundle,
    structure_noise_rate, GraphBundle, HyperParams, ModelVariant, SyntheticSpec,
};
use serde::Serialize;

const DATA_DIR_ENV: &str = "PAMT_DATA_DIR";

/// Semi-supervised node classification with adaptively masked propagation.
#[derive(Parser)]
#[command(name = "pamt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its log and checkpoint.
    Train(TrainArgs),
    /// Run variants over several seeds with fresh splits.
    Benchmark(BenchmarkArgs),
    /// Accuracy under injected structure noise.
    NoiseSweep(NoiseArgs),
    /// Accuracy as K or alpha varies.
    ParamSweep(SweepArgs),
    /// PTS, PAMT0, PAMT1 and PAMT side by side.
    Ablate(ExperimentArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Write a synthetic block-model dataset bundle.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Bundle directory, or a name looked up under $PAMT_DATA_DIR.
    #[arg(long)]
    data: String,
    /// Flat `key = value` configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in hyperparameters (cora_ml, citeseer, pubmed, ms_aca).
    /// Defaults to the dataset name when it matches one.
    #[arg(long)]
    preset: Option<String>,
    /// Override one hyperparameter, e.g. `--set K=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use the split stored in the bundle instead of sampling one per seed.
    #[arg(long)]
    bundle_split: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "pamt")]
    variant: ModelVariant,
    /// Drawn at random (and reported) when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for log.jsonl, checkpoint.json and run.json.
    #[arg(long, default_value = "pamt-run")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Seed of the first run; run i uses base + i. Drawn when omitted.
    #[arg(long)]
    base_seed: Option<u64>,
    /// JSON report destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
    /// Record wall time per cell (makes reports differ between runs).
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "pamt,pts")]
    variants: Vec<ModelVariant>,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "pamt,pts")]
    variants: Vec<ModelVariant>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5,0.6")]
    rates: Vec<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value = "pamt")]
    variant: ModelVariant,
    /// K or alpha.
    #[arg(long)]
    param: SweepParam,
    /// Defaults to K = 6,8,..,20 or alpha = 0,0.05,..,0.5.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long, default_value_t = 600)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    features: usize,
    #[arg(long, default_value_t = 1800)]
    edges: usize,
    #[arg(long, default_value_t = 0.8)]
    homophily: f64,
    #[arg(long, default_value_t = 0.08)]
    p_in: f64,
    #[arg(long, default_value_t = 0.02)]
    p_out: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also store a split with this many training nodes per class.
    #[arg(long)]
    split_per_class: Option<usize>,
    #[arg(long, default_value_t = 100)]
    split_val: usize,
}

/// Error raised for bad command-line input (exit code 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<pamt_core::Error>() {
            return if e.is_usage_error() { 2 } else { 1 };
        }
    }
    1
}

fn load_data(args: &DataArgs) -> Result<(GraphBundle, HyperParams)> {
    let root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    let dir = resolve_bundle_dir(&args.data, root.as_deref());
    let bundle = load_bundle(&dir)?;
    let mut hp = match (&args.config, &args.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => HyperParams::preset(name).ok_or_else(|| usage(format!("unknown preset `{name}`")))?,
        (None, None) => {
            let guess = bundle.name.to_ascii_lowercase().replace('-', "_");
            HyperParams::preset(&guess).ok_or_else(|| {
                usage(format!(
                    "no preset matches dataset `{}`; pass --preset or --config",
                    bundle.name
                ))
            })?
        }
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("override `{kv}` is not KEY=VALUE")))?;
        hp.set(k.trim(), v.trim())?;
    }
    hp.validate()?;
    Ok((bundle, hp))
}

fn run_options(exp: &ExperimentArgs) -> Result<RunOptions> {
    let mut opts = RunOptions::new(exp.seeds, exp.base_seed.unwrap_or_else(|| rand::random::<u32>() as u64));
    opts.workers = workers_from_env().map_err(usage)?;
    opts.record_wall_time = exp.wall_time;
    opts.bundle_split = exp.data.bundle_split;
    Ok(opts)
}

fn emit(report: &Report, exp: &ExperimentArgs) -> Result<()> {
    let json = report.to_json();
    if let Some(path) = &exp.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    if exp.json {
        print!("{json}");
    } else {
        print!("{}", format_table(report));
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    dataset: &'a str,
    variant: ModelVariant,
    seed: u64,
    test_acc: f64,
    best_epoch: usize,
    hyper_params: &'a HyperParams,
}

fn train(args: TrainArgs) -> Result<()> {
    let (bundle, mut hp) = load_data(&args.data)?;
    let seed = args.seed.unwrap_or_else(|| rand::random::<u32>() as u64);
    hp.seed = seed;
    let outcome = single_run(&bundle, &hp, args.variant, seed, args.data.bundle_split)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let log_path = args.out.join("log.jsonl");
    fs::write(&log_path, outcome.log.to_jsonl()).with_context(|| format!("writing {}", log_path.display()))?;
    if let Some(p) = &outcome.params {
        save_checkpoint(p, &args.out.join("checkpoint.json"))?;
    }
    let summary = RunSummary {
        dataset: &bundle.name,
        variant: args.variant,
        seed,
        test_acc: outcome.test_acc,
        best_epoch: outcome.log.best_epoch,
        hyper_params: &hp,
    };
    let run_path = args.out.join("run.json");
    fs::write(&run_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", run_path.display()))?;
    println!(
        "{} on {} (seed {seed}): test accuracy {:.2}% at epoch {}",
        args.variant,
        bundle.name,
        100.0 * outcome.test_acc,
        outcome.log.best_epoch
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct StatsOut<'a> {
    name: &'a str,
    nodes: usize,
    edges: usize,
    features: usize,
    classes: usize,
    labeled: usize,
    feature_nnz: usize,
    noise_rate: Option<f64>,
}

fn stats(args: StatsArgs) -> Result<()> {
    let root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    let b = load_bundle(&resolve_bundle_dir(&args.data, root.as_deref()))?;
    let s = b.stats();
    let out = StatsOut {
        name: &b.name,
        nodes: s.nodes,
        edges: s.edges,
        features: s.features,
        classes: s.classes,
        labeled: b.labels.as_slice().iter().filter(|l| l.is_some()).count(),
        feature_nnz: b.features.nnz(),
        noise_rate: structure_noise_rate(&b.graph, &b.labels).ok(),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("dataset     {}", out.name);
        println!("nodes       {}", out.nodes);
        println!("edges       {}", out.edges);
        println!("features    {}", out.features);
        println!("classes     {}", out.classes);
        println!("labeled     {}", out.labeled);
        println!("feature nnz {}", out.feature_nnz);
        match out.noise_rate {
            Some(r) => println!("noise rate  {r:.4}"),
            None => println!("noise rate  n/a (unlabeled endpoints)"),
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        nodes: args.nodes,
        classes: args.classes,
        features: args.features,
        edges: args.edges,
        homophily: args.homophily,
        p_in: args.p_in,
        p_out: args.p_out,
        seed: args.seed,
    };
    let mut bundle = generate_csbm(&spec)?;
    bundle.name = args.name;
    if let Some(ptc) = args.split_per_class {
        bundle.splits = Some(generate_split(&bundle, ptc, args.split_val, args.seed)?);
    }
    save_bundle(&bundle, &args.out)?;
    let s = bundle.stats();
    println!(
        "wrote {} ({} nodes, {} edges, {} features, {} classes)",
        args.out.display(),
        s.nodes,
        s.edges,
        s.features,
        s.classes
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Benchmark(a) => {
            let (b, hp) = load_data(&a.exp.data)?;
            let r = run_benchmark(&b, &hp, &a.variants, &run_options(&a.exp)?)?;
            emit(&r, &a.exp)
        }
        Command::NoiseSweep(a) => {
            let (b, hp) = load_data(&a.exp.data)?;
            let r = noise_sweep(&b, &hp, &a.variants, &a.rates, &run_options(&a.exp)?)?;
            emit(&r, &a.exp)
        }
        Command::ParamSweep(a) => {
            let (b, hp) = load_data(&a.exp.data)?;
            let values = if a.values.is_empty() {
                a.param.default_values()
            } else {
                a.values.clone()
            };
            let r = param_sweep(&b, &hp, a.variant, a.param, &values, &run_options(&a.exp)?)?;
            emit(&r, &a.exp)
        }
        Command::Ablate(a) => {
            let (b, hp) = load_data(&a.data)?;
            let r = ablate(&b, &hp, &run_options(&a)?)?;
            emit(&r, &a)
        }
        Command::Stats(a) => stats(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
