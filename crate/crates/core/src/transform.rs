//! The orthogonalised dependent variable R̂.
//!
//! For a fitted F̂ that is piecewise constant between grid points,
//!
//! ```text
//! R̂ = s_k Ψ̄ + Σ_{j<k} (s_{j+1} − s_j) M(s_j, s_{j+1}),
//! M(s_j, s_{j+1}) = −Ψ(F̂(s_j)) + (F̂(s_j) − Ĩ(y; s_j, s_{j+1})) ψ(F̂(s_j)),
//! ```
//!
//! with Ĩ the fractional indicator of y ≤ s inside the cell. Observations
//! outside the grid range pick up the exact contribution of the flat tails
//! (F̂ = 0 below s₁, F̂ = 1 above s_k), which keeps R̂ = y under ψ ≡ 1 for
//! every y.

use crate::cdf::ConditionalCdf;
use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::exec::Exec;
use crate::weighting::WeightingSpec;

pub const DEFAULT_MAX_GRID_POINTS: usize = 512;

/// Ordered, strictly increasing evaluation points s₁ < … < s_k.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGrid {
    points: Vec<f64>,
}

impl TransformGrid {
    /// Sorted distinct training values, thinned to at most `max_points` by
    /// keeping both extremes and equally spaced ranks in between.
    pub fn build(train_y: &[f64], max_points: usize) -> Result<Self> {
        if max_points < 2 {
            return Err(Error::Parameter(format!(
                "grid needs at least 2 points, got {max_points}"
            )));
        }
        if train_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite training value".into()));
        }
        let mut v = train_y.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.len() < 2 {
            return Err(Error::Degenerate(
                "training values are all identical".into(),
            ));
        }
        if v.len() > max_points {
            let n = v.len() - 1;
            let m = max_points - 1;
            v = (0..=m).map(|i| v[(i * n + m / 2) / m]).collect();
        }
        Ok(Self { points: v })
    }

    /// Uses `points` verbatim; they must be finite and strictly increasing.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Grid("grid needs at least 2 points".into()));
        }
        if points.iter().any(|v| !v.is_finite()) || points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Grid(
                "grid points must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// clamp((s_j1 − y)/(s_j1 − s_j), 0, 1).
pub fn fractional_indicator(y: f64, s_j: f64, s_j1: f64) -> Result<f64> {
    if !(s_j < s_j1) {
        return Err(Error::Grid(format!("cell [{s_j}, {s_j1}] is empty")));
    }
    Ok(frac(y, s_j, s_j1))
}

#[inline]
fn frac(y: f64, a: f64, b: f64) -> f64 {
    ((b - y) / (b - a)).clamp(0.0, 1.0)
}

/// R̂ from F̂ evaluated at the grid points (`cdf[j]` = F̂(s_j | x)). The last
/// value is not used.
pub fn rhat_from_cdf(cdf: &[f64], w: &WeightingSpec, y: f64, grid: &TransformGrid) -> Result<f64> {
    let s = grid.points();
    if cdf.len() != s.len() {
        return Err(Error::Shape {
            expected: s.len(),
            got: cdf.len(),
        });
    }
    if !y.is_finite() {
        return Err(Error::Numeric("non-finite outcome".into()));
    }
    let k = s.len();
    let mut acc = s[k - 1] * w.total();
    for j in 0..k - 1 {
        let f = cdf[j];
        if !f.is_finite() {
            return Err(Error::Numeric(format!("non-finite F̂ at s = {}", s[j])));
        }
        let m = -w.Psi(f) + (f - frac(y, s[j], s[j + 1])) * w.psi(f);
        acc += (s[j + 1] - s[j]) * m;
    }
    if y > s[k - 1] {
        acc += (y - s[k - 1]) * w.psi(1.0);
    } else if y < s[0] {
        acc -= (s[0] - y) * w.psi(0.0);
    }
    Ok(acc)
}

pub fn compute_rhat<M: ConditionalCdf + ?Sized>(
    model: &M,
    w: &WeightingSpec,
    x: &[f64],
    y: f64,
    grid: &TransformGrid,
) -> Result<f64> {
    let f = model.evaluate(x, grid.points())?;
    rhat_from_cdf(&f, w, y, grid)
}

/// R̂_t for every row of `data`, in row order.
pub fn transform_all<M: ConditionalCdf + ?Sized>(
    model: &M,
    w: &WeightingSpec,
    data: &Dataset,
    grid: &TransformGrid,
    exec: Exec,
) -> Result<Vec<f64>> {
    exec.map(data.nrows(), |t| {
        compute_rhat(model, w, &data.row(t), data.y()[t], grid)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// F̂ that ignores x: a fixed function of s.
    struct Marginal<F: Fn(f64) -> f64 + Sync>(F);

    impl<F: Fn(f64) -> f64 + Sync> ConditionalCdf for Marginal<F> {
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, _x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
            Ok(grid.iter().map(|&s| (self.0)(s)).collect())
        }
    }

    #[test]
    fn grid_construction() {
        assert_eq!(
            TransformGrid::build(&[3.0, 1.0, 2.0, 2.0], 10)
                .unwrap()
                .points(),
            &[1.0, 2.0, 3.0]
        );
        assert_eq!(
            TransformGrid::build(&[0.0, 1.0], 2).unwrap().points(),
            &[0.0, 1.0]
        );
        let many: Vec<f64> = (0..10_000)
            .map(|i| (i as f64 * 0.7).sin() * 1e3 + i as f64)
            .collect();
        let g = TransformGrid::build(&many, 500).unwrap();
        assert_eq!(g.len(), 500);
        let (lo, hi) = many
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert_eq!(g.points()[0], lo);
        assert_eq!(g.points()[499], hi);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(
            TransformGrid::build(&[2.0, 2.0], 10),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            TransformGrid::build(&[1.0, 2.0], 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            TransformGrid::from_points(vec![1.0, 1.0]),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn fractional_indicator_examples() {
        assert_eq!(fractional_indicator(2.0, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(fractional_indicator(1.0, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(fractional_indicator(1.5, 1.0, 2.0).unwrap(), 0.5);
        assert_eq!(fractional_indicator(-7.0, 1.0, 2.0).unwrap(), 1.0);
        assert!(matches!(
            fractional_indicator(0.0, 2.0, 2.0),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn point_mass_returns_y() {
        let grid =
            TransformGrid::from_points((0..=40).map(|i| -2.0 + 0.1 * i as f64).collect()).unwrap();
        for (i, &y) in grid.points().iter().enumerate().step_by(3) {
            let f: Vec<f64> = (0..grid.len())
                .map(|j| if j >= i { 1.0 } else { 0.0 })
                .collect();
            for w in [
                WeightingSpec::upper(0.1).unwrap(),
                WeightingSpec::upper(0.5).unwrap(),
            ] {
                let r = rhat_from_cdf(&f, &w, y, &grid).unwrap();
                assert!((r - y).abs() < 1e-12, "{r} vs {y}");
            }
        }
    }

    #[test]
    fn empirical_cdf_matches_quadrature_oracle() {
        // Sample on a dyadic lattice, so the grid, the midpoint oracle and
        // the integrand breakpoints are all exact in binary.
        let sample: Vec<f64> = (0..37)
            .map(|i| ((i * 29 % 37) as f64 - 13.0) * 0.125)
            .collect();
        let n = sample.len() as f64;
        let ecdf = |s: f64| sample.iter().filter(|&&v| v <= s).count() as f64 / n;
        let model = Marginal(ecdf);
        let w = WeightingSpec::upper(0.5).unwrap();
        let grid = TransformGrid::build(&sample, 512).unwrap();
        let y = sample.iter().copied().fold(f64::MIN, f64::max);
        let r = compute_rhat(&model, &w, &[0.0], y, &grid).unwrap();

        // R = ∫_0^∞ [Ψ̄ − Ψ(F) + (F − 𝟙{y ≤ s})ψ(F)] ds
        //   − ∫_{-∞}^0 [Ψ(F) − (F − 𝟙{y ≤ s})ψ(F)] ds, by a fine midpoint rule.
        let (lo, hi, h) = (-3.0, 3.0, 1.0 / 4096.0);
        let steps = ((hi - lo) / h) as usize;
        let mut oracle = 0.0;
        for i in 0..steps {
            let s = lo + (i as f64 + 0.5) * h;
            let f = ecdf(s);
            let ind = if y <= s { 1.0 } else { 0.0 };
            let corr = (f - ind) * w.psi(f);
            oracle += h * if s >= 0.0 {
                w.total() - w.Psi(f) + corr
            } else {
                -w.Psi(f) + corr
            };
        }
        assert!((r - oracle).abs() < 1e-6, "{r} vs {oracle}");
    }

    #[test]
    fn tail_terms_extend_the_grid() {
        // Evaluating off-grid equals evaluating on a grid extended to y.
        let pts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let f = |s: f64| (s / 4.75).clamp(0.0, 1.0).powi(2);
        let w = WeightingSpec::exponential(3.0).unwrap();
        let grid = TransformGrid::from_points(pts.clone()).unwrap();
        for y in [-1.5, 6.0] {
            let mut ext = pts.clone();
            if y < 0.0 {
                ext.insert(0, y)
            } else {
                ext.push(y)
            }
            let ext = TransformGrid::from_points(ext).unwrap();
            let r = compute_rhat(&Marginal(f), &w, &[0.0], y, &grid).unwrap();
            let fe: Vec<f64> = ext
                .points()
                .iter()
                .map(|&s| if s < 0.0 { 0.0 } else { f(s) })
                .collect();
            let re = rhat_from_cdf(&fe, &w, y, &ext).unwrap();
            assert!((r - re).abs() < 1e-12, "y={y}: {r} vs {re}");
        }
    }

    #[test]
    fn grid_refinement_halves_the_error() {
        let f = |s: f64| 1.0 / (1.0 + (-s).exp());
        let w = WeightingSpec::upper(0.2).unwrap();
        let y = 0.37;
        let rhat = |k: usize| {
            let grid = TransformGrid::from_points(
                (0..=k)
                    .map(|i| -30.0 + 60.0 * i as f64 / k as f64)
                    .collect(),
            )
            .unwrap();
            compute_rhat(&Marginal(f), &w, &[0.0], y, &grid).unwrap()
        };
        let truth = rhat(1 << 20);
        let e1 = (rhat(1000) - truth).abs();
        let e2 = (rhat(2000) - truth).abs();
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn linear_in_the_weighting_function() {
        let f = |s: f64| (0.5 + 0.3 * (2.0 * s).sin() + 0.1 * s).clamp(0.0, 1.0);
        let grid =
            TransformGrid::from_points((0..200).map(|i| -4.0 + 0.04 * i as f64).collect()).unwrap();
        for alpha in [0.05, 0.1, 0.3] {
            let up = WeightingSpec::upper(alpha).unwrap();
            let low = WeightingSpec::lower(alpha).unwrap();
            let ineq = WeightingSpec::inequality(alpha).unwrap();
            for y in [-5.0, -1.3, 0.0, 2.2, 9.0] {
                let r =
                    |w: &WeightingSpec| compute_rhat(&Marginal(f), w, &[0.0], y, &grid).unwrap();
                assert!((r(&ineq) - (r(&up) - r(&low))).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn constant_weighting_collapses_to_y(
            raw in proptest::collection::vec(-50.0f64..50.0, 2..60),
            f in proptest::collection::vec(0.0f64..1.0, 60),
            y in -80.0f64..80.0,
        ) {
            prop_assume!(raw.iter().any(|&v| v != raw[0]));
            let grid = TransformGrid::build(&raw, 512).unwrap();
            // Arbitrary, non-monotone F̂ with the 0/1 boundary values.
            let mut cdf = f[..grid.len()].to_vec();
            *cdf.last_mut().unwrap() = 1.0;
            let r = rhat_from_cdf(&cdf, &WeightingSpec::constant(), y, &grid).unwrap();
            prop_assert!((r - y).abs() < 1e-9);
        }
    }
}
