//! End-to-end properties of the estimator on simulated data.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use waqr::cdf::CdfConfig;
use waqr::estimator::{split_sizes, waqr_crossfit, waqr_fit, Dataset, FitConfig};
use waqr::rng::stream;
use waqr::simulator::Noise;
use waqr::{Exec, WeightingSpec};

fn fast(n_trees: usize) -> FitConfig {
    FitConfig {
        cdf: CdfConfig {
            n_trees,
            leaf_candidates: vec![5],
            ..CdfConfig::default()
        },
        ..FitConfig::default()
    }
}

/// OLS through the normal equations, independent of the library's solver.
fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    xtx.cholesky()
        .expect("full rank")
        .solve(&(x.transpose() * y))
}

/// X = (1, U[0,2], N(0,1)...), Y = (1 + X₁²)ε + 0.3·X₁.
fn heteroskedastic(t: usize, extra: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, &[0xda7a]);
    let p = 2 + extra;
    let mut x = DMatrix::zeros(t, p);
    let mut y = DVector::zeros(t);
    for i in 0..t {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = 2.0 * rng.random::<f64>();
        for j in 2..p {
            x[(i, j)] = rng.sample(StandardNormal);
        }
        let e: f64 = rng.sample(StandardNormal);
        y[i] = (1.0 + x[(i, 1)] * x[(i, 1)]) * e + 0.3 * x[(i, 1)];
    }
    Dataset::new(x, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_weighting_collapses_to_ols(t in 40usize..140, extra in 0usize..3, seed in any::<u64>(), ratio in 0.4f64..0.8) {
        let data = heteroskedastic(t, extra, seed);
        let cfg = FitConfig { split_ratio: ratio, ..fast(5) };
        let fit = waqr_fit(&data, &WeightingSpec::constant(), &cfg, seed).unwrap();
        let (t1, t2) = split_sizes(t, ratio).unwrap();
        let x = data.x().rows(t1, t2).into_owned();
        let y = data.y().rows(t1, t2).into_owned();
        let ols = normal_equations(&x, &y);
        for j in 0..ols.len() {
            prop_assert!((fit.beta_hat[j] - ols[j]).abs() < 1e-9, "{} vs {}", fit.beta_hat[j], ols[j]);
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(t in 60usize..160, seed in any::<u64>(), alpha in 0.05f64..0.5) {
        let data = heteroskedastic(t, 1, seed);
        let fit = waqr_fit(&data, &WeightingSpec::upper(alpha).unwrap(), &fast(10), seed).unwrap();
        let s = &fit.sigma_hat;
        prop_assert_eq!(s, &s.transpose());
        let min_eig = s.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-10 * s.norm().max(1.0));
        for j in 0..s.nrows() {
            let se = (s[(j, j)] / fit.n_obs as f64).sqrt();
            prop_assert!((se - fit.std_errors[j]).abs() <= 1e-15 * se.max(1.0));
        }
    }
}

#[test]
fn sequential_and_parallel_fits_agree_bitwise() {
    let data = heteroskedastic(300, 1, 5);
    let w = WeightingSpec::middle(0.2).unwrap();
    let seq = waqr_fit(&data, &w, &fast(20).with_exec(Exec::Sequential), 9).unwrap();
    let par = waqr_fit(&data, &w, &fast(20).with_exec(Exec::Parallel), 9).unwrap();
    assert_eq!(seq, par);
    let seq = waqr_crossfit(&data, &w, &fast(20).with_exec(Exec::Sequential), 9).unwrap();
    let par = waqr_crossfit(&data, &w, &fast(20).with_exec(Exec::Parallel), 9).unwrap();
    assert_eq!(seq, par);
}

/// With a nonlinear target (1 + X₁²)·ES + 0.3·X₁, the estimate approaches the
/// least-squares projection of that target on (1, X₁).
#[test]
fn estimate_tracks_best_linear_predictor() {
    let w = WeightingSpec::upper(0.1).unwrap();
    let es = w
        .integrate_against_quantiles(|u| Noise::Normal.quantile(u), 400)
        .unwrap();

    let mut rng = stream(77, &[1]);
    let n = 100_000;
    let x = DMatrix::from_fn(n, 2, |_, j| {
        if j == 0 {
            1.0
        } else {
            2.0 * rng.random::<f64>()
        }
    });
    let target = DVector::from_fn(n, |i, _| (1.0 + x[(i, 1)].powi(2)) * es + 0.3 * x[(i, 1)]);
    let projection = normal_equations(&x, &target);

    // Average of independent fits; the standard error of the mean uses the
    // reported standard errors.
    let reps = 4;
    let cfg = FitConfig {
        cdf: CdfConfig {
            n_trees: 50,
            ..CdfConfig::default()
        },
        ..FitConfig::default()
    };
    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    for r in 0..reps {
        let fit = waqr_fit(&heteroskedastic(3000, 0, 2024 + r), &w, &cfg, r).unwrap();
        for j in 0..2 {
            mean[j] += fit.beta_hat[j] / reps as f64;
            var[j] += fit.std_errors[j].powi(2) / (reps * reps) as f64;
        }
    }
    for j in 0..2 {
        let z = (mean[j] - projection[j]) / var[j].sqrt();
        assert!(
            z.abs() < 2.0,
            "coefficient {j}: {} vs {} (z = {z})",
            mean[j],
            projection[j]
        );
    }
}
