use std::path::Path;

use sma_core::config::ExperimentConfig;

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let points = cfg.sweep_points().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!points.is_empty());
            for (_, _, p) in points {
                p.trainer.validate().unwrap();
            }
            count += 1;
        }
    }
    assert!(count >= 5);
}
