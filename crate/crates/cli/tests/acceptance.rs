//! Acceptance gate. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-4 and 9 are self-contained and fail the run when red.
//! Criteria 5-8 need the `cora_ml` and `citeseer` bundles under
//! `$PAMT_DATA_DIR` (default `<workspace>/data`); without them they report
//! FAIL and do not abort the run unless `PAMT_ACCEPTANCE_STRICT=1`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use pamt_cli::{ablate, noise_sweep, RunOptions};
use pamt_core::trainer::{masked_soft_labels, train_pamt, train_pamt_with, train_pts};
use pamt_core::{
    build_propagation_matrix, build_similarity_mask, generate_csbm, generate_split, inject_structure_noise,
    load_bundle, normalize_adjacency, propagate, propagate_labels, structure_noise_rate, GraphBundle, HyperParams,
    ModelVariant, Problem, PropagationConfig, PropagationMatrix, SyntheticSpec, TrainOptions,
};
use rand::Rng;
use support::*;

struct Outcome {
    pass: bool,
    detail: String,
    /// Red because an input is missing rather than a measured miss.
    needs_data: bool,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome {
        pass: ok,
        detail,
        needs_data: false,
    }
}

fn missing(detail: String) -> Outcome {
    Outcome {
        pass: false,
        detail,
        needs_data: true,
    }
}

fn data_root() -> PathBuf {
    std::env::var_os("PAMT_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .ancestors()
            .nth(2)
            .unwrap()
            .join("data")
    })
}

fn dataset(name: &str) -> Result<GraphBundle, String> {
    let dir = data_root().join(name);
    load_bundle(&dir).map_err(|e| format!("bundle `{name}` unavailable at {} ({e})", dir.display()))
}

fn c1_propagation_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for g_seed in 0..50u64 {
        let n = r.random_range(1..=50);
        let g = random_graph(n, r.random_range(0.02..0.4), 1000 + g_seed);
        let norm = normalize_adjacency(&g);
        let c = r.random_range(2..=6);
        let h = random_simplex_rows(n, c, &mut r);
        let m = random_dense(n, c, 0.0, 1.0, &mut r);
        let ap = build_propagation_matrix(&norm, &build_similarity_mask(&h, &norm).unwrap()).unwrap();
        let dense_ap = dense_masked(&dense_normalized(&g), &to_dense(&h));
        for alpha in [0.0, 0.1, 0.5, 1.0] {
            for k in [1, 5, 10] {
                let got = propagate(ap.as_sparse(), &m, PropagationConfig::new(alpha, k).unwrap()).unwrap();
                worst = worst.max(max_abs_diff(&dense_ppr(&dense_ap, &to_dense(&m), alpha, k), &got));
                cases += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 10.0,
        format!("max |diff| {worst:.2e} (<= 1e-10) over {cases} cases in {secs:.2} s (< 10 s)"),
    )
}

fn c2_gradients() -> Outcome {
    let start = Instant::now();
    let worst = (0..20u64)
        .map(|s| grad_check_max_rel_error(&grad_instance(8, 5, 4, 3, 500 + s), 1e-5))
        .fold(0.0f64, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-5 && secs < 10.0,
        format!("max relative error {worst:.2e} (<= 1e-5) over 20 instances in {secs:.2} s (< 10 s)"),
    )
}

fn c3_invariants() -> Outcome {
    let mut r = rng(77);
    let mut violations = 0usize;
    let mut entries = 0usize;
    for g_seed in 0..100u64 {
        let n = r.random_range(2..=60);
        let g = random_graph(n, r.random_range(0.02..0.3), 3000 + g_seed);
        let norm = normalize_adjacency(&g);
        let a = norm.as_sparse();
        let h = random_dense(n, r.random_range(2..=6), -3.0, 3.0, &mut r).softmax_rows();
        let mask = build_similarity_mask(&h, &norm).unwrap();
        let ap = build_propagation_matrix(&norm, &mask).unwrap();
        for i in 0..n {
            let di = (g.degree(i) + 1) as f64;
            for (j, w) in a.row(i) {
                entries += 1;
                let dj = (g.degree(j) + 1) as f64;
                let want = 1.0 / (di * dj).sqrt();
                if a.get(j, i) != Some(w) || (w - want).abs() > 1e-15 * want {
                    violations += 1;
                }
                let s = mask.as_sparse().get(i, j).unwrap();
                if mask.as_sparse().get(j, i) != Some(s) || !(0.0..=1.0).contains(&s) {
                    violations += 1;
                }
                let p = ap.as_sparse().get(i, j).unwrap();
                if p > w || p < 0.0 {
                    violations += 1;
                }
            }
            if a.row(i).count() != g.degree(i) + 1 {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("{violations} violations over 100 graphs ({entries} stored entries)"),
    )
}

fn collapse_problem() -> (Problem, HyperParams) {
    let mut hp = HyperParams::preset("citeseer").unwrap();
    hp.dim = 16;
    hp.max_epochs = 80;
    hp.init_epochs = 20;
    hp.patience = 40;
    hp.seed = 5;
    let b = generate_csbm(&SyntheticSpec {
        nodes: 300,
        classes: 3,
        features: 60,
        edges: 900,
        p_in: 0.25,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let split = generate_split(&b, 10, 60, 9).unwrap();
    (Problem::new(&b, split, &hp).unwrap(), hp)
}

fn c4_collapses() -> Outcome {
    let (p, hp) = collapse_problem();
    let mut notes = Vec::new();

    let mut alpha_one = true;
    for k in [1, 5, 10] {
        let cfg = PropagationConfig::new(1.0, k).unwrap();
        let y = propagate_labels(&PropagationMatrix::unmasked(&p.norm_adj), &p.y_l, cfg).unwrap();
        alpha_one &= y == p.y_l;
        let mut hp1 = hp.clone();
        hp1.alpha = 1.0;
        hp1.k = k;
        let params = pamt_core::trainer::init_classifier(&p, &hp1).unwrap();
        alpha_one &= masked_soft_labels(&p, &hp1, &params, false).unwrap() == p.y_l;
    }
    notes.push(format!("alpha=1 gives Y_L: {alpha_one}"));

    let unit = train_pamt_with(&p, &hp, ModelVariant::Pamt0, TrainOptions { force_unit_mask: true }).unwrap();
    let pts = train_pts(&p, &hp).unwrap();
    let pts_equal = unit.log.losses() == pts.log.losses() && unit.params == pts.params;
    notes.push(format!(
        "unit mask without refinement equals PTS bitwise over {} epochs: {pts_equal}",
        pts.log.epochs.len()
    ));

    let mut late = hp.clone();
    late.t_u = late.max_epochs + 1;
    let a = train_pamt(&p, &late, ModelVariant::Pamt).unwrap();
    let b = train_pamt(&p, &late, ModelVariant::Pamt0).unwrap();
    let max_gap = a
        .log
        .losses()
        .iter()
        .zip(b.log.losses())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let late_equal = a.log.epochs.len() == b.log.epochs.len() && max_gap <= 1e-12;
    notes.push(format!(
        "t_u > max_epochs equals PAMT0 (max loss gap {max_gap:.1e}): {late_equal}"
    ));

    check(alpha_one && pts_equal && late_equal, notes.join("; "))
}

struct Bench {
    pamt: f64,
    pts: f64,
    pamt0: f64,
    pamt1: f64,
}

fn ablation(b: &GraphBundle) -> Result<Bench, String> {
    let hp = HyperParams::preset(&b.name).ok_or(format!("no preset for `{}`", b.name))?;
    let r = ablate(b, &hp, &RunOptions::new(10, 0)).map_err(|e| e.to_string())?;
    let mean = |v: ModelVariant| r.results.iter().find(|e| e.variant == v).map(|e| e.mean).unwrap();
    Ok(Bench {
        pamt: mean(ModelVariant::Pamt),
        pts: mean(ModelVariant::Pts),
        pamt0: mean(ModelVariant::Pamt0),
        pamt1: mean(ModelVariant::Pamt1),
    })
}

fn c5_accuracy_bands(cora: &Result<Bench, String>, cite: &Result<Bench, String>) -> Outcome {
    match (cora, cite) {
        (Ok(c), Ok(s)) => {
            let ok = (84.5..=87.5).contains(&c.pamt)
                && (75.5..=78.5).contains(&s.pamt)
                && (c.pts - 85.62).abs() <= 1.5
                && (s.pts - 75.74).abs() <= 1.5;
            check(
                ok,
                format!(
                    "Cora_ML PAMT {:.2} in [84.5,87.5], PTS {:.2} in 85.62±1.5; Citeseer PAMT {:.2} in [75.5,78.5], PTS {:.2} in 75.74±1.5",
                    c.pamt, c.pts, s.pamt, s.pts
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => missing(e.clone()),
    }
}

fn c6_ordering(cite: &Result<Bench, String>) -> Outcome {
    match cite {
        Ok(s) => {
            let ok = s.pamt >= s.pts && s.pamt >= s.pamt1 - 0.3 && s.pamt1 >= s.pamt0 - 0.3;
            check(
                ok,
                format!(
                    "Citeseer 10 seeds: PAMT {:.2}, PAMT1 {:.2}, PAMT0 {:.2}, PTS {:.2}",
                    s.pamt, s.pamt1, s.pamt0, s.pts
                ),
            )
        }
        Err(e) => missing(e.clone()),
    }
}

fn c7_noise(cora: &Result<GraphBundle, String>) -> Outcome {
    let b = match cora {
        Ok(b) => b,
        Err(e) => return missing(e.clone()),
    };
    let hp = HyperParams::preset("cora_ml").unwrap();
    let opts = RunOptions::new(5, 0);
    let r = match noise_sweep(b, &hp, &[ModelVariant::Pamt, ModelVariant::Pts], &[0.6], &opts) {
        Ok(r) => r,
        Err(e) => return check(false, e.to_string()),
    };
    let rates_ok = r
        .results
        .iter()
        .flat_map(|e| e.achieved_noise_rates.clone().unwrap())
        .all(|a| (a - 0.6).abs() <= 0.01);
    let edges_ok = opts.seeds().iter().all(|&s| {
        let g = inject_structure_noise(&b.graph, &b.labels, 0.6, s).unwrap();
        g.num_edges() == b.graph.num_edges() && (structure_noise_rate(&g, &b.labels).unwrap() - 0.6).abs() <= 0.01
    });
    let (pamt, pts) = (r.results[0].mean, r.results[1].mean);
    check(
        pamt > pts && rates_ok && edges_ok,
        format!("noise 0.6, 5 seeds: PAMT {pamt:.2} vs PTS {pts:.2}; rates within 0.01: {rates_ok}; edge count preserved: {edges_ok}"),
    )
}

fn c8_stats(cora: &Result<GraphBundle, String>, cite: &Result<GraphBundle, String>) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (b, want) in [(cora, (2810, 7981, 2879, 7)), (cite, (2110, 3668, 3703, 6))] {
        match b {
            Ok(b) => {
                let s = b.stats();
                let got = (s.nodes, s.edges, s.features, s.classes);
                ok &= got == want;
                notes.push(format!("{}: {:?} (want {:?})", b.name, got, want));
            }
            Err(e) => return missing(e.clone()),
        }
    }
    check(ok, notes.join("; "))
}

fn c9_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_pamt");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    let st = Command::new(bin)
        .args(["synth", "--out", data.to_str().unwrap(), "--name", "citeseer"])
        .args([
            "--nodes",
            "200",
            "--classes",
            "3",
            "--features",
            "60",
            "--edges",
            "600",
            "--p-in",
            "0.25",
        ])
        .output()
        .unwrap();
    if !st.status.success() {
        return check(false, "synth failed".into());
    }
    let common = [
        "--seeds",
        "2",
        "--base-seed",
        "3",
        "--set",
        "dim=8",
        "--set",
        "max_epochs=20",
        "--set",
        "init_epochs=5",
        "--set",
        "patience=10",
        "--set",
        "t_u=5",
        "--set",
        "per_class_train=5",
        "--set",
        "val_size=30",
    ];
    let commands: [(&str, Vec<&str>); 4] = [
        ("benchmark", vec!["--variants", "pamt,pts,pamtr"]),
        ("noise-sweep", vec!["--rates", "0.3,0.5"]),
        ("param-sweep", vec!["--param", "K", "--values", "6,8"]),
        ("ablate", vec![]),
    ];
    let mut identical = 0;
    for (cmd, extra) in &commands {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{cmd}-{run}.json"));
            let st = Command::new(bin)
                .env("PAMT_WORKERS", "1")
                .arg(cmd)
                .args(["--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .args(common)
                .args(extra)
                .output()
                .unwrap();
            if !st.status.success() {
                return check(false, format!("{cmd} failed: {}", String::from_utf8_lossy(&st.stderr)));
            }
            outputs.push(std::fs::read(&out).unwrap());
        }
        if outputs[0] == outputs[1] {
            identical += 1;
        }
    }
    let mut logs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("train-{run}"));
        let st = Command::new(bin)
            .env("PAMT_WORKERS", "1")
            .args([
                "train",
                "--data",
                data.to_str().unwrap(),
                "--seed",
                "4",
                "--out",
                out.to_str().unwrap(),
            ])
            .args(["--set", "dim=8", "--set", "max_epochs=20", "--set", "init_epochs=5"])
            .args(["--set", "per_class_train=5", "--set", "val_size=30"])
            .output()
            .unwrap();
        if !st.status.success() {
            return check(false, format!("train failed: {}", String::from_utf8_lossy(&st.stderr)));
        }
        logs.push((
            std::fs::read(out.join("log.jsonl")).unwrap(),
            std::fs::read(out.join("checkpoint.json")).unwrap(),
            std::fs::read(out.join("run.json")).unwrap(),
        ));
    }
    let train_ok = logs[0] == logs[1];
    check(
        identical == commands.len() && train_ok,
        format!(
            "{identical}/{} report commands byte-identical on re-run; train artifacts identical: {train_ok}",
            commands.len()
        ),
    )
}

fn main() {
    let strict = std::env::var("PAMT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let cora = dataset("cora_ml");
    let cite = dataset("citeseer");
    let c1 = c1_propagation_oracle();
    let c2 = c2_gradients();
    let c3 = c3_invariants();
    let c4 = c4_collapses();
    let cora_bench = cora.as_ref().map_err(Clone::clone).and_then(ablation);
    let cite_bench = cite.as_ref().map_err(Clone::clone).and_then(ablation);
    let lines: Vec<(&str, &str, Outcome)> = vec![
        ("1", "propagation oracle", c1),
        ("2", "gradient check", c2),
        ("3", "normalization and mask invariants", c3),
        ("4", "trivial-parameter collapses", c4),
        ("5", "accuracy bands", c5_accuracy_bands(&cora_bench, &cite_bench)),
        ("6", "improvement ordering", c6_ordering(&cite_bench)),
        ("7", "noise robustness", c7_noise(&cora)),
        ("8", "dataset statistics", c8_stats(&cora, &cite)),
        ("9", "determinism", c9_determinism()),
    ];

    println!();
    let mut hard_fail = false;
    for (id, name, o) in &lines {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id} ({name}): {}", o.detail);
        if !o.pass && (!o.needs_data || strict) {
            hard_fail = true;
        }
    }
    let passed = lines.iter().filter(|(_, _, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());
    if hard_fail {
        std::process::exit(1);
    }
}
