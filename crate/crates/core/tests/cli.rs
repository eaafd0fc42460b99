mod common;

use std::path::Path;
use std::process::{Command, Output};

fn sma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sma")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn split_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 20, 30, 0.3, 11);
    let split = dir.path().join("split");
    let out = sma(&["split", "--data", p(&data), "--seed", "4", "--out-dir", p(&split)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(split.join("train.tsv"))
        .unwrap()
        .starts_with("# seed="));

    let models = dir.path().join("models");
    let out = sma(&[
        "train",
        "--data",
        p(&data),
        "--trainer",
        "rsvd",
        "--rank",
        "3",
        "--lr",
        "0.01",
        "--max-epochs",
        "40",
        "--seed",
        "4",
        "--split-dir",
        p(&split),
        "--out-dir",
        p(&models),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let trained_rmse: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("test_rmse\t"))
        .unwrap()
        .parse()
        .unwrap();

    let out = sma(&[
        "evaluate",
        "--model",
        p(&models.join("model_4.txt")),
        "--split-dir",
        p(&split),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rmse = metrics["test_rmse"].as_f64().unwrap();
    assert!((rmse - trained_rmse).abs() < 1e-6);

    let out = sma(&[
        "evaluate",
        "--model",
        p(&models.join("model_4.txt")),
        "--split-dir",
        p(&split),
        "--task",
        "topn",
    ]);
    assert!(out.status.success());
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["test_ndcg@10"].as_f64().is_some());
}

#[test]
fn experiment_and_sweep_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 20, 30, 0.3, 12);
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "[data]\npath = {:?}\n[experiment]\ntrainer = \"sma_rating\"\nseeds = [1, 2]\n[train]\nrank = 3\nlr = 0.01\nmax_epochs = 15\n",
            p(&data)
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("exp");
    let out = sma(&["experiment", "--config", p(&cfg), "--out-dir", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("run_1.json").exists() && out_dir.join("run_2.json").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("test_rmse"));

    let sweep_dir = dir.path().join("sweep");
    let out = sma(&[
        "sweep",
        "--config",
        p(&cfg),
        "--param",
        "K",
        "--values",
        "1,3",
        "--seed",
        "9",
        "--out-dir",
        p(&sweep_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sweep_dir.join("K=1").join("run_9.json").exists());
    assert!(sweep_dir.join("K=3").join("aggregate.json").exists());

    let stab_dir = dir.path().join("stab");
    let out = sma(&[
        "stability",
        "--config",
        p(&cfg),
        "--set",
        "trainer=rsvd",
        "--runs",
        "3",
        "--epsilon",
        "0.5",
        "--out-dir",
        p(&stab_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stab_dir.join("stability_rsvd.csv").exists());
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 10, 10, 0.5, 13);
    let out_dir = dir.path().join("o");

    let out = sma(&[
        "experiment",
        "--data",
        p(&data),
        "--rank",
        "0",
        "--out-dir",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.rank"));

    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "1\t1\tfive\t0\n").unwrap();
    let out = sma(&["split", "--data", p(&bad), "--seed", "1", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let out = sma(&[
        "train",
        "--data",
        p(&data),
        "--lr",
        "5",
        "--max-epochs",
        "300",
        "--set",
        "clamp=false",
        "--seed",
        "1",
        "--out-dir",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}
