use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{gram, symmetrize};

/// Bartlett weights w(j, m) = 1 − j/(m+1).
pub fn bartlett(j: usize, m: usize) -> f64 {
    1.0 - j as f64 / (m as f64 + 1.0)
}

/// ⌊T₂^{1/5}⌋.
pub fn default_lag(t2: usize) -> usize {
    // Guard against 32^{1/5} evaluating to 1.9999…
    let m = (t2 as f64).powf(0.2).floor() as usize;
    if (m + 1).pow(5) <= t2 {
        m + 1
    } else {
        m
    }
}

/// Normalisation of the lagged cross-products Ω̂ⱼ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NwDivisor {
    /// 1/T₂, the usual sample-average scaling.
    #[default]
    EvalSize,
    /// An explicit divisor, e.g. the literal T₂ − T₁; must be positive.
    Fixed(i64),
}

/// Ω̂ⱼ = d⁻¹ Σ_{t>j} ê_t ê_{t−j} X_t X_{t−j}'.
pub fn omega(x: &DMatrix<f64>, resid: &DVector<f64>, j: usize, divisor: f64) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut out = DMatrix::zeros(p, p);
    for t in j..n {
        let c = resid[t] * resid[t - j];
        if c == 0.0 {
            continue;
        }
        for a in 0..p {
            let xa = c * x[(t, a)];
            for b in 0..p {
                out[(a, b)] += xa * x[(t - j, b)];
            }
        }
    }
    out / divisor
}

/// Σ̂ = Q⁻¹ [Ω̂₀ + Σ_{j=1}^m w(j,m)(Ω̂ⱼ + Ω̂ⱼ')] Q⁻¹ with Q = T₂⁻¹ Σ X_t X_t',
/// symmetrised. The caller is responsible for the PSD check.
pub fn newey_west_cov<K: Fn(usize, usize) -> f64>(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    m: usize,
    kernel: K,
    divisor: NwDivisor,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if resid.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: resid.len(),
        });
    }
    if m >= n {
        return Err(Error::Parameter(format!(
            "lag {m} must be below the sample size {n}"
        )));
    }
    let d = match divisor {
        NwDivisor::EvalSize => n as f64,
        NwDivisor::Fixed(v) if v > 0 => v as f64,
        NwDivisor::Fixed(v) => {
            return Err(Error::Parameter(format!(
                "Newey-West divisor must be positive, got {v}"
            )))
        }
    };
    let mut om = omega(x, resid, 0, d);
    for j in 1..=m {
        let oj = omega(x, resid, j, d);
        om += (&oj + oj.transpose()) * kernel(j, m);
    }
    let q = gram(x) / n as f64;
    let q_inv = q.try_inverse().ok_or_else(|| Error::Singular {
        columns: crate::linalg::collinear_columns(x),
    })?;
    let mut sigma = &q_inv * om * &q_inv;
    symmetrize(&mut sigma);
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ensure_psd;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn lag_rule() {
        assert_eq!(default_lag(31), 1);
        assert_eq!(default_lag(32), 2);
        assert_eq!(default_lag(243), 3);
        assert_eq!(default_lag(1000), 3);
    }

    #[test]
    fn three_row_hand_case() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, -1.0, 1.0, 0.5]);
        let e = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        // Ω̂₁ by hand: t=1: e1 e0 x1 x0' ; t=2: e2 e1 x2 x1', over T = 3.
        let o1 = DMatrix::from_row_slice(2, 2, &[-2.5, 1.0, -0.5, 2.0]) / 3.0;
        let mut brute = DMatrix::zeros(2, 2);
        for t in 1..3 {
            for a in 0..2 {
                for b in 0..2 {
                    brute[(a, b)] += e[t] * e[t - 1] * x[(t, a)] * x[(t - 1, b)];
                }
            }
        }
        brute /= 3.0;
        assert_eq!(omega(&x, &e, 1, 3.0), brute);
        assert!((omega(&x, &e, 1, 3.0) - o1).abs().max() < 1e-15);
    }

    #[test]
    fn zero_lag_is_the_sandwich() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let x = DMatrix::from_fn(n, 3, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample(StandardNormal)
            }
        });
        let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = newey_west_cov(&x, &e, 0, bartlett, NwDivisor::EvalSize).unwrap();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let meat = x.transpose() * DMatrix::from_diagonal(&e.map(|v| v * v)) * &x;
        let ehw = &xtx_inv * meat * &xtx_inv * n as f64;
        assert!((s - ehw).abs().max() < 1e-12);
    }

    #[test]
    fn errors_on_bad_lag_and_divisor() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let e = DVector::from_element(4, 1.0);
        assert!(matches!(
            newey_west_cov(&x, &e, 4, bartlett, NwDivisor::EvalSize),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            newey_west_cov(&x, &e, 1, bartlett, NwDivisor::Fixed(-2)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn psd_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.random_range(10..80);
            let p = rng.random_range(1..5);
            let m = rng.random_range(0..6);
            let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut s = newey_west_cov(&x, &e, m, bartlett, NwDivisor::EvalSize).unwrap();
            assert_eq!(s, s.transpose());
            assert!(!ensure_psd(&mut s), "Bartlett weights keep Σ̂ PSD");
        }
    }

    #[test]
    fn lags_are_negligible_for_iid_residuals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 5000;
        let x = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample(StandardNormal)
            }
        });
        let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s0 = newey_west_cov(&x, &e, 0, bartlett, NwDivisor::EvalSize).unwrap();
        let s3 = newey_west_cov(&x, &e, 3, bartlett, NwDivisor::EvalSize).unwrap();
        for i in 0..2 {
            assert!((s3[(i, i)] / s0[(i, i)] - 1.0).abs() < 0.15);
        }
    }
}
