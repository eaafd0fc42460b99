#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use sma_core::seed::rng_from_seed;

/// Writes a tab-separated ratings file drawn from a noisy rank-2 model,
/// rounded to the 1..=5 scale. Every user and item gets at least one rating.
pub fn write_synthetic(path: &Path, users: u64, items: u64, density: f64, seed: u64) -> usize {
    let mut rng = rng_from_seed(seed);
    let uf: Vec<[f64; 2]> = (0..users)
        .map(|_| [rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0)])
        .collect();
    let vf: Vec<[f64; 2]> = (0..items)
        .map(|_| [rng.gen_range(1.5..3.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let mut out = String::new();
    let mut count = 0;
    for u in 0..users {
        for i in 0..items {
            if i == u % items || u == i % users || rng.gen::<f64>() < density {
                let score = uf[u as usize][0] * vf[i as usize][0]
                    + uf[u as usize][1] * vf[i as usize][1]
                    + rng.gen_range(-0.5..0.5);
                let r = score.round().clamp(1.0, 5.0);
                let ts = 880_000_000 + u * 1000 + i;
                writeln!(out, "{}\t{}\t{}\t{}", u + 1, i + 1, r, ts).unwrap();
                count += 1;
            }
        }
    }
    std::fs::write(path, out).unwrap();
    count
}
