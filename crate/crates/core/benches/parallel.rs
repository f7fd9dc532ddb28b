//! Sequential vs parallel execution of the data-parallel kernels.

use std::hint::black_box;

use corisk::evaluation::{auc, bootstrap_ci, BootstrapConfig};
use corisk::forest::{ColumnKind, DenseColumns, Forest, ForestConfig, Task};
use corisk::imputation::{impute, Column, FeatureMatrix, ImputeConfig};
use corisk::{seed, Execution};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn regression_data(n: usize, p: usize) -> (DenseColumns, Vec<f64>) {
    let mut r = seed::item_rng(1, 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
    let y = rows.iter().map(|x| 2.0 * x[0] - x[1] + 0.5 * x[2] * x[3]).collect();
    (DenseColumns::from_rows(vec![ColumnKind::Continuous; p], &rows).unwrap(), y)
}

fn forest(c: &mut Criterion) {
    let (x, y) = regression_data(2000, 20);
    let mut g = c.benchmark_group("forest_fit");
    g.sample_size(10);
    for (name, execution) in MODES {
        let cfg = ForestConfig {
            n_trees: 64,
            execution,
            ..ForestConfig::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| Forest::fit(black_box(&x), &y, Task::Regression, cfg, 7).unwrap())
        });
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let mut r = seed::item_rng(2, 0);
    let labels: Vec<bool> = (0..2000).map(|_| r.random_bool(0.2)).collect();
    let scores: Vec<f64> = labels.iter().map(|&l| r.random::<f64>() + if l { 0.4 } else { 0.0 }).collect();
    let mut g = c.benchmark_group("bootstrap_auc");
    g.sample_size(10);
    for (name, execution) in MODES {
        let cfg = BootstrapConfig {
            n_boot: 1000,
            execution,
            ..BootstrapConfig::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| bootstrap_ci(black_box(&scores), &labels, auc, cfg, 3).unwrap())
        });
    }
    g.finish();
}

fn imputation(c: &mut Criterion) {
    let mut r = seed::item_rng(3, 0);
    let p = 8;
    let rows: Vec<Vec<Option<f64>>> = (0..600)
        .map(|_| {
            let z: f64 = r.random();
            (0..p)
                .map(|k| (k == 0 || !r.random_bool(0.2)).then(|| z * (k + 1) as f64 + r.random::<f64>()))
                .collect()
        })
        .collect();
    let cols = (0..p).map(|k| Column::continuous(format!("x{k}"))).collect();
    let m = FeatureMatrix::new(cols, rows).unwrap();
    let mut g = c.benchmark_group("missforest");
    g.sample_size(10);
    for (name, execution) in MODES {
        let cfg = ImputeConfig {
            n_trees: 20,
            max_iters: 3,
            execution,
            ..ImputeConfig::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| impute(black_box(&m), cfg, 5).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, forest, bootstrap, imputation);
criterion_main!(benches);
