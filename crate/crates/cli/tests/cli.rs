use std::path::Path;
use std::process::{Command, Output};

fn pamt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pamt"))
        .env_remove("PAMT_DATA_DIR")
        .env("PAMT_WORKERS", "1")
        .args(args)
        .output()
        .unwrap()
}

fn synth(dir: &Path) {
    let out = pamt(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--name",
        "cora_ml",
        "--nodes",
        "150",
        "--classes",
        "3",
        "--features",
        "45",
        "--edges",
        "450",
        "--p-in",
        "0.25",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const FAST: [&str; 10] = [
    "--set",
    "dim=8",
    "--set",
    "max_epochs=10",
    "--set",
    "init_epochs=3",
    "--set",
    "per_class_train=5",
    "--set",
    "val_size=20",
];

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth(&data);
    let out_dir = tmp.path().join("run");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend(FAST);
    let o = pamt(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("test accuracy"));
    let log = std::fs::read_to_string(out_dir.join("log.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert!(last["test_acc"].is_number());
    assert!(last["best_epoch"].is_number());
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["epoch", "loss", "val_acc", "refined"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert!(out_dir.join("checkpoint.json").exists());
}

#[test]
fn omitted_seed_is_drawn_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth(&data);
    let out_dir = tmp.path().join("run");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--variant",
        "lp_only",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend(FAST);
    assert!(pamt(&args).status.success());
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert!(run["seed"].is_u64());

    let report = tmp.path().join("r.json");
    let mut args = vec![
        "benchmark",
        "--data",
        data.to_str().unwrap(),
        "--seeds",
        "1",
        "--variants",
        "lp",
        "--out",
        report.to_str().unwrap(),
    ];
    args.extend(FAST);
    assert!(pamt(&args).status.success());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["base_seed"].is_u64());
    assert_eq!(r["results"][0]["std"], 0.0);
}

#[test]
fn unknown_variant_is_a_usage_error() {
    let o = pamt(&["train", "--data", "whatever", "--variant", "gcn"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown variant"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let o = pamt(&["train", "--data", "/nonexistent/bundle", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing file"), "{}", stderr(&o));
}

#[test]
fn validation_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth(&data);
    let d = data.to_str().unwrap();

    let o = pamt(&["train", "--data", d, "--set", "gamma=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = pamt(&["train", "--data", d, "--set", "alpha=2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = pamt(&["noise-sweep", "--data", d, "--rates", "0.0", "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot denoise"), "{}", stderr(&o));

    let o = pamt(&["param-sweep", "--data", d, "--param", "gamma"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_pamt"))
        .env("PAMT_WORKERS", "0")
        .args(["benchmark", "--data", d, "--seeds", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth(&data);
    let o = pamt(&["stats", "--data", data.to_str().unwrap(), "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nodes"], 150);
    assert_eq!(v["edges"], 450);
    assert_eq!(v["features"], 45);
    assert_eq!(v["classes"], 3);
}

#[test]
fn config_file_and_data_root_lookup() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("toy"));
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\npreset = citeseer\ndim = 8\nmax_epochs = 5\ninit_epochs = 2\nper_class_train = 5\nval_size = 20\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pamt"))
        .env("PAMT_DATA_DIR", tmp.path())
        .args([
            "benchmark",
            "--data",
            "toy",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "1",
            "--json",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["hyper_params"]["wd"], 0.055);
    assert_eq!(v["hyper_params"]["dim"], 8);
}
