//! Sequential vs parallel execution of the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use waqr::cdf::{fit_conditional_cdf, CdfConfig};
use waqr::estimator::split_sample;
use waqr::simulator::{gen_dgp, psi_type, run_mc, Dgp, EstimatorChoice, Noise, SimConfig};
use waqr::transform::{transform_all, TransformGrid};
use waqr::Exec;

const POLICIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn base() -> SimConfig {
    let mut cfg =
        SimConfig::standard(Dgp::Dgp1, Noise::Normal, 2, 0.3, 600, psi_type(1).unwrap()).unwrap();
    cfg.fit.cdf.n_trees = 50;
    cfg.fit.cdf.leaf_candidates = vec![10];
    cfg
}

fn stages(c: &mut Criterion) {
    let cfg = base();
    let data = gen_dgp(&cfg, 0).unwrap();
    let (train, eval) = split_sample(&data, 2.0 / 3.0).unwrap();
    let w = psi_type(1).unwrap();

    let mut g = c.benchmark_group("cdf_fit");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let cdf = CdfConfig {
            exec,
            ..cfg.fit.cdf.clone()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_conditional_cdf(black_box(&train), &cdf, 1).unwrap())
        });
    }
    g.finish();

    let model = fit_conditional_cdf(&train, &cfg.fit.cdf, 1).unwrap();
    let grid = TransformGrid::build(train.y().as_slice(), 512).unwrap();
    let mut g = c.benchmark_group("transform_all");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| transform_all(&model, &w, black_box(&eval), &grid, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("run_mc");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let mut mc = base();
        mc.t = 300;
        mc.reps = 8;
        mc.exec = exec;
        mc.fit = mc.fit.with_exec(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_mc(black_box(&mc), EstimatorChoice::SplitSample).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
