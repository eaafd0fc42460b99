mod common;

use std::path::Path;

use sma_core::config::ExperimentConfig;
use sma_core::report::{read_epochs_csv, RunReport};
use sma_core::runner::{
    aggregate_metrics, prepare_split, run_experiment, run_sparsity_sweep, run_stability, Aggregate,
};

fn config(data: &Path, trainer: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        "[data]\npath = {:?}\n\n[experiment]\ntrainer = \"{trainer}\"\nseeds = [3, 5, 8]\n\n[train]\nrank = 3\nlr = 0.01\nmax_epochs = 30\n{extra}",
        data.display().to_string()
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn reports_persist_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 30, 40, 0.3, 1);
    let cfg = config(&data, "sma_rating", "\n[sma_rating]\nK = 2\n");
    let out = dir.path().join("out");
    let result = run_experiment(&cfg, Some(&out)).unwrap();
    assert_eq!(result.points.len(), 1);
    let point = &result.points[0];
    assert_eq!(point.runs.len(), 3);

    let mut persisted = Vec::new();
    for seed in [3u64, 5, 8] {
        let report = RunReport::read_json(&out.join(format!("run_{seed}.json"))).unwrap();
        assert_eq!(report.seed, seed);
        assert_eq!(report.trainer, "sma_rating");
        // epochs strictly increasing, and the CSV sidecar matches the JSON
        assert!(report.epochs.windows(2).all(|w| w[0].epoch < w[1].epoch));
        assert_eq!(
            read_epochs_csv(&out.join(format!("run_{seed}.csv"))).unwrap(),
            report.epochs
        );
        persisted.push(report);
    }
    let recomputed = aggregate_metrics(persisted.iter());
    let stored: Aggregate = serde_json::from_str(&read(&out.join("aggregate.json"))).unwrap();
    assert_eq!(stored.metrics, recomputed);
    assert_eq!(stored.seeds, vec![3, 5, 8]);
    assert!(read(&out.join("summary.csv"))
        .lines()
        .any(|l| l.contains(",test_rmse,")));
    assert!(ExperimentConfig::from_file(out.join("config.toml")).is_ok());
}

#[test]
fn report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 20, 25, 0.3, 2);
    let cfg = config(&data, "sma_topn_boundary", "\n[topn]\neval_every = 5\n");
    let result = run_experiment(&cfg, None).unwrap();
    for report in result.points[0].reports() {
        let back = RunReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(&back, report);
        assert!(report.epochs.iter().all(|e| e.subset_size.is_some()));
        assert!(report.metric("test_precision@10").is_some());
        assert!(report.metric("test_ndcg@20").is_some());
    }
}

#[test]
fn reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 25, 30, 0.3, 3);
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(
        &cfg_path,
        format!(
            "[data]\npath = {:?}\n[experiment]\ntrainer = \"sma_rating\"\nseeds = [1, 2]\nsweep = {{ param = \"K\", values = [1, 2] }}\n[train]\nrank = 4\nlr = 0.01\nmax_epochs = 20\n",
            data.display().to_string()
        ),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&ExperimentConfig::from_file(&cfg_path).unwrap(), Some(&a)).unwrap();
    run_experiment(&ExperimentConfig::from_file(&cfg_path).unwrap(), Some(&b)).unwrap();
    for point in ["K=1", "K=2"] {
        for file in ["run_1.json", "run_2.json", "run_1.csv", "aggregate.json"] {
            assert_eq!(
                read(&a.join(point).join(file)),
                read(&b.join(point).join(file)),
                "{point}/{file}"
            );
        }
    }
    assert_eq!(read(&a.join("summary.csv")), read(&b.join("summary.csv")));
}

#[test]
fn failed_runs_do_not_abort_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 20, 20, 0.4, 4);
    // large step sizes diverge for some seeds but not necessarily all
    let cfg = config(&data, "rsvd", "")
        .with_override("lr", toml::Value::Float(2.0))
        .unwrap();
    let cfg = cfg.with_override("clamp", toml::Value::Boolean(false)).unwrap();
    let out = dir.path().join("out");
    let result = run_experiment(&cfg, Some(&out)).unwrap();
    let point = &result.points[0];
    assert_eq!(point.runs.len(), 3);
    for run in &point.runs {
        if let Err(e) = &run.result {
            assert!(e.contains("diverged"), "{e}");
            assert!(out.join(format!("run_{}.err", run.seed)).exists());
        }
    }
    assert_eq!(point.aggregate.failed_seeds.len() + point.aggregate.seeds.len(), 3);
    assert!(!point.aggregate.failed_seeds.is_empty());
}

#[test]
fn sparsity_sweep_subsamples_training_side_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 30, 30, 0.3, 5);
    let cfg = config(&data, "rsvd", "");
    let full = run_experiment(&cfg, None).unwrap();
    let swept = run_sparsity_sweep(&cfg, &[0.5, 1.0], None).unwrap();
    assert_eq!(swept.points.len(), 2);
    let whole: Vec<&RunReport> = full.points[0].reports().collect();
    let at_one: Vec<&RunReport> = swept.points[1].reports().collect();
    for (a, b) in whole.iter().zip(&at_one) {
        assert_eq!(a.final_metrics, b.final_metrics);
        assert_eq!(a.epochs, b.epochs);
    }

    let dataset = sma_core::runner::load_data(&cfg).unwrap();
    let half = swept.points[0].config.clone();
    for &seed in &cfg.seeds {
        let whole = prepare_split(&dataset, &cfg, seed).unwrap();
        let sub = prepare_split(&dataset, &half, seed).unwrap();
        assert!((sub.train.len() as f64 - whole.train.len() as f64 * 0.5).abs() <= 1.0);
        assert_eq!(sub.test.entries(), whole.test.entries());
    }
    assert!(run_sparsity_sweep(&cfg, &[0.0], None).is_err());
}

#[test]
fn stability_runs_persist_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    common::write_synthetic(&data, 20, 25, 0.3, 6);
    let cfg = config(
        &data,
        "rsvd",
        "\n[stability]\nn_runs = 2\nfixed_seed = true\nepsilon = 1e9\n",
    );
    let out = dir.path().join("stab");
    let res = run_stability(&cfg, Some(&out)).unwrap();
    let est = &res[0].1;
    assert_eq!(est.runs[0].gap, est.runs[1].gap);
    assert_eq!(est.probability, 1.0);
    let csv = read(&out.join("stability_rsvd.csv"));
    assert!(csv.starts_with("run_index,seed,train_rmse,test_rmse,gap"));
    assert_eq!(csv.lines().count(), 3);
    assert!(read(&out.join("stability.csv")).contains("rsvd,"));
}
