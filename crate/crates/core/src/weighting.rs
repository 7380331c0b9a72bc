//! Weighting functions ψ on the unit interval.
//!
//! A [`WeightingSpec`] bundles a signed weight ψ over quantile ranks with its
//! cumulative Ψ(s) = ∫₀ˢ ψ and total mass Ψ̄ = Ψ(1). Every built-in family
//! has closed forms for all three. ψ is right-continuous: at a jump the right
//! limit is returned (at u = 1 the left limit, since nothing lies beyond).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::gl16;

/// Maximum number of knots accepted for a custom piecewise-linear ψ.
pub const MAX_CUSTOM_KNOTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// 𝟙{u ≥ 1−α}/α, the expected-shortfall spectrum.
    Upper {
        alpha: f64,
    },
    /// 𝟙{u ≤ α}/α
    Lower {
        alpha: f64,
    },
    /// 𝟙{α ≤ u ≤ 1−α}/(1−2α)
    Middle {
        alpha: f64,
    },
    /// (𝟙{u ≥ 1−α} − 𝟙{u ≤ α})/α
    Inequality {
        alpha: f64,
    },
    /// a·e^{−a(1−u)}/(1−e^{−a})
    Exponential {
        a: f64,
    },
    /// a·u^{a−1}
    Polynomial {
        a: f64,
    },
    /// The exponential spectrum mirrored, a·e^{−au}/(1−e^{−a}).
    WelfareExponential {
        a: f64,
    },
    /// ψ ≡ 1; the weighted average is the mean.
    Constant,
    Custom(PiecewiseLinear),
}

/// Piecewise-linear ψ given by knots `(u, ψ(u))` spanning [0, 1].
///
/// Repeated abscissae encode jumps; the last knot at a repeated abscissa
/// supplies the right limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    u: Vec<f64>,
    v: Vec<f64>,
    #[serde(skip)]
    cum: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Parameter("custom ψ needs at least two knots".into()));
        }
        if knots.len() > MAX_CUSTOM_KNOTS {
            return Err(Error::Parameter(format!(
                "custom ψ has {} knots, limit is {MAX_CUSTOM_KNOTS}",
                knots.len()
            )));
        }
        if knots.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
            return Err(Error::Parameter("custom ψ knots must be finite".into()));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::Parameter(
                "custom ψ knots must start at 0 and end at 1".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Parameter(
                "custom ψ knots must be sorted by u".into(),
            ));
        }
        let u: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let v: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let mut cum = Vec::with_capacity(u.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 1..u.len() {
            acc += 0.5 * (u[i] - u[i - 1]) * (v[i] + v[i - 1]);
            cum.push(acc);
        }
        Ok(Self { u, v, cum })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.u.iter().copied().zip(self.v.iter().copied())
    }

    /// Index of the segment `[u[i], u[i+1])` holding `x`, using the last
    /// knot among duplicates so that evaluation is right-continuous.
    fn segment(&self, x: f64) -> usize {
        let k = self.u.partition_point(|&u| u <= x);
        k.saturating_sub(1).min(self.u.len() - 2)
    }

    fn psi(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (u0, u1) = (self.u[i], self.u[i + 1]);
        if u1 == u0 {
            return self.v[i + 1];
        }
        let t = ((x - u0) / (u1 - u0)).clamp(0.0, 1.0);
        self.v[i] + t * (self.v[i + 1] - self.v[i])
    }

    fn cum(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (u0, u1) = (self.u[i], self.u[i + 1]);
        if u1 == u0 {
            return self.cum[i + 1];
        }
        let dx = (x - u0).clamp(0.0, u1 - u0);
        let vx = self.v[i] + dx / (u1 - u0) * (self.v[i + 1] - self.v[i]);
        self.cum[i] + 0.5 * dx * (self.v[i] + vx)
    }

    fn jumps(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .u
            .windows(2)
            .filter(|w| w[0] == w[1])
            .map(|w| w[0])
            .collect();
        out.dedup();
        out
    }

    fn total(&self) -> f64 {
        *self.cum.last().expect("at least two knots")
    }
}

/// A validated weighting function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightingSpec {
    #[serde(flatten)]
    family: Family,
}

impl WeightingSpec {
    pub fn new(family: Family) -> Result<Self> {
        let in_unit = |alpha: f64, hi: f64, name: &str| {
            if alpha > 0.0 && alpha < hi {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} requires α in (0, {hi}), got {alpha}"
                )))
            }
        };
        match &family {
            Family::Upper { alpha } => in_unit(*alpha, 1.0, "upper")?,
            Family::Lower { alpha } => in_unit(*alpha, 1.0, "lower")?,
            Family::Inequality { alpha } => in_unit(*alpha, 1.0, "inequality")?,
            Family::Middle { alpha } => in_unit(*alpha, 0.5, "middle")?,
            Family::Exponential { a } | Family::WelfareExponential { a } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "exponential requires a > 0, got {a}"
                    )));
                }
            }
            Family::Polynomial { a } => {
                if !(*a > 1.0 && a.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "polynomial requires a > 1, got {a}"
                    )));
                }
            }
            Family::Constant | Family::Custom(_) => {}
        }
        Ok(Self { family })
    }

    pub fn upper(alpha: f64) -> Result<Self> {
        Self::new(Family::Upper { alpha })
    }
    pub fn lower(alpha: f64) -> Result<Self> {
        Self::new(Family::Lower { alpha })
    }
    pub fn middle(alpha: f64) -> Result<Self> {
        Self::new(Family::Middle { alpha })
    }
    pub fn inequality(alpha: f64) -> Result<Self> {
        Self::new(Family::Inequality { alpha })
    }
    pub fn exponential(a: f64) -> Result<Self> {
        Self::new(Family::Exponential { a })
    }
    pub fn polynomial(a: f64) -> Result<Self> {
        Self::new(Family::Polynomial { a })
    }
    pub fn welfare_exponential(a: f64) -> Result<Self> {
        Self::new(Family::WelfareExponential { a })
    }
    pub fn constant() -> Self {
        Self {
            family: Family::Constant,
        }
    }
    pub fn custom(knots: &[(f64, f64)]) -> Result<Self> {
        Ok(Self {
            family: Family::Custom(PiecewiseLinear::new(knots)?),
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Short lowercase name of the family, as used on the command line.
    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Upper { .. } => "upper",
            Family::Lower { .. } => "lower",
            Family::Middle { .. } => "middle",
            Family::Inequality { .. } => "inequality",
            Family::Exponential { .. } => "exponential",
            Family::Polynomial { .. } => "polynomial",
            Family::WelfareExponential { .. } => "welfare_exponential",
            Family::Constant => "constant",
            Family::Custom(_) => "custom",
        }
    }

    /// Nonnegative, increasing and of unit mass.
    pub fn is_spectral(&self) -> bool {
        matches!(
            self.family,
            Family::Upper { .. } | Family::Exponential { .. } | Family::Polynomial { .. }
        )
    }

    /// ψ(u). Arguments are clamped to [0, 1].
    pub fn psi(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let ind = |c: bool| if c { 1.0 } else { 0.0 };
        match &self.family {
            Family::Upper { alpha } => ind(u >= 1.0 - alpha) / alpha,
            Family::Lower { alpha } => ind(u < *alpha) / alpha,
            Family::Middle { alpha } => ind(u >= *alpha && u < 1.0 - alpha) / (1.0 - 2.0 * alpha),
            Family::Inequality { alpha } => (ind(u >= 1.0 - alpha) - ind(u < *alpha)) / alpha,
            Family::Exponential { a } => exp_psi(*a, u),
            Family::WelfareExponential { a } => exp_psi(*a, 1.0 - u),
            Family::Polynomial { a } => {
                if u == 0.0 {
                    0.0
                } else {
                    a * u.powf(a - 1.0)
                }
            }
            Family::Constant => 1.0,
            Family::Custom(pl) => pl.psi(u),
        }
    }

    /// Ψ(s) = ∫₀ˢ ψ(u) du, closed form for every family.
    #[allow(non_snake_case)]
    pub fn Psi(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        if s == 0.0 {
            return 0.0;
        }
        if s == 1.0 {
            return self.total();
        }
        match &self.family {
            Family::Upper { alpha } => upper_cum(*alpha, s),
            Family::Lower { alpha } => lower_cum(*alpha, s),
            Family::Middle { alpha } => {
                (s - alpha).clamp(0.0, 1.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha)
            }
            Family::Inequality { alpha } => upper_cum(*alpha, s) - lower_cum(*alpha, s),
            Family::Exponential { a } => exp_cum(*a, s),
            Family::WelfareExponential { a } => 1.0 - exp_cum(*a, 1.0 - s),
            Family::Polynomial { a } => s.powf(*a),
            Family::Constant => s,
            Family::Custom(pl) => pl.cum(s),
        }
    }

    /// Ψ̄ = ∫₀¹ ψ(u) du.
    pub fn total(&self) -> f64 {
        match &self.family {
            Family::Inequality { .. } => 0.0,
            Family::Custom(pl) => pl.total(),
            _ => 1.0,
        }
    }

    /// Interior discontinuities of ψ, ascending.
    pub fn jump_points(&self) -> Vec<f64> {
        match &self.family {
            Family::Upper { alpha } => vec![1.0 - alpha],
            Family::Lower { alpha } => vec![*alpha],
            Family::Middle { alpha } => vec![*alpha, 1.0 - alpha],
            Family::Inequality { alpha } => {
                let mut v = vec![*alpha, 1.0 - alpha];
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            Family::Custom(pl) => pl.jumps(),
            _ => Vec::new(),
        }
        .into_iter()
        .filter(|&u| u > 0.0 && u < 1.0)
        .collect()
    }

    /// ∫₀¹ q(u) ψ(u) du by composite Gauss-Legendre quadrature.
    ///
    /// Panels break at every jump of ψ and are graded geometrically towards
    /// both endpoints (down to 1e-12), so quantile functions with integrable
    /// endpoint singularities are handled. `panels` (≥ 100) uniform panels
    /// are spread over the interior.
    pub fn integrate_against_quantiles<Q>(&self, q: Q, panels: usize) -> Result<f64>
    where
        Q: Fn(f64) -> f64,
    {
        if panels < 100 {
            return Err(Error::Parameter(format!(
                "need at least 100 panels, got {panels}"
            )));
        }
        const EDGE: f64 = 1e-9;
        let mut breaks = vec![0.0, 1.0];
        breaks.extend(self.jump_points());
        for k in 1..=12 {
            let e = 10f64.powi(-k);
            breaks.push(e);
            breaks.push(1.0 - e);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        // Uniform panels cover [0.1, 0.9]; the graded ones handle the rest.
        let span = 0.8;
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            // Graded edge panels are already short; interior ones are split.
            let pieces = if a >= 0.1 && b <= 0.9 {
                (((b - a) / span * panels as f64).ceil() as usize).max(1)
            } else {
                1
            };
            let h = (b - a) / pieces as f64;
            for i in 0..pieces {
                let lo = a + h * i as f64;
                let hi = if i + 1 == pieces { b } else { lo + h };
                let mut bad = None;
                let part = gl16(lo, hi, |u| {
                    let qu = q(u);
                    if qu.is_finite() {
                        qu * self.psi(u)
                    } else {
                        if u > EDGE && u < 1.0 - EDGE {
                            bad = Some(u);
                        }
                        0.0
                    }
                });
                if let Some(u) = bad {
                    return Err(Error::Numeric(format!(
                        "quantile function is not finite at u = {u}"
                    )));
                }
                total += part;
            }
        }
        Ok(total)
    }
}

fn upper_cum(alpha: f64, s: f64) -> f64 {
    (s - (1.0 - alpha)).max(0.0) / alpha
}

fn lower_cum(alpha: f64, s: f64) -> f64 {
    s.min(alpha) / alpha
}

fn exp_psi(a: f64, u: f64) -> f64 {
    a * (-a * (1.0 - u)).exp() / -(-a).exp_m1()
}

fn exp_cum(a: f64, s: f64) -> f64 {
    let denom = -(-a).exp_m1();
    if a <= 1.0 {
        (-a).exp() * (a * s).exp_m1() / denom
    } else {
        ((-a * (1.0 - s)).exp() - (-a).exp()) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn builtins() -> Vec<WeightingSpec> {
        vec![
            WeightingSpec::upper(0.1).unwrap(),
            WeightingSpec::lower(0.2).unwrap(),
            WeightingSpec::middle(0.2).unwrap(),
            WeightingSpec::inequality(0.1).unwrap(),
            WeightingSpec::exponential(10.0).unwrap(),
            WeightingSpec::exponential(0.3).unwrap(),
            WeightingSpec::polynomial(2.5).unwrap(),
            WeightingSpec::polynomial(1.3).unwrap(),
            WeightingSpec::welfare_exponential(10.0).unwrap(),
            WeightingSpec::constant(),
            WeightingSpec::custom(&[(0.0, 0.0), (0.5, 1.0), (0.5, 3.0), (1.0, 1.0)]).unwrap(),
        ]
    }

    /// Tanh-sinh quadrature of ψ over [a, b], split at jumps.
    fn oracle_integral(w: &WeightingSpec, a: f64, b: f64) -> f64 {
        let mut cuts = vec![a, b];
        cuts.extend(w.jump_points().into_iter().filter(|&j| j > a && j < b));
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .map(|c| tanh_sinh(|u| w.psi(u), c[0], c[1]))
            .sum()
    }

    fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
        let h = 1.0 / 64.0;
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let mut sum = 0.0;
        for k in -400..=400 {
            let t = k as f64 * h;
            let s = std::f64::consts::FRAC_PI_2 * t.sinh();
            let x = s.tanh();
            let wt = std::f64::consts::FRAC_PI_2 * t.cosh() / s.cosh().powi(2);
            if wt < 1e-300 {
                continue;
            }
            // Keep nodes strictly inside so that one-sided limits apply.
            let u = c + r * x;
            if u <= a || u >= b {
                continue;
            }
            sum += wt * f(u);
        }
        sum * h * r
    }

    #[test]
    fn psi_examples() {
        assert_eq!(WeightingSpec::upper(0.1).unwrap().psi(0.95), 10.0);
        assert_eq!(WeightingSpec::inequality(0.1).unwrap().psi(0.05), -10.0);
        let e = WeightingSpec::exponential(10.0).unwrap().psi(1.0);
        let expected = 10.0 / (1.0 - (-10.0f64).exp());
        assert!((e - expected).abs() < 1e-12);
        assert!((e - 10.000454).abs() < 1e-6);
        // Right limits at jumps.
        assert_eq!(WeightingSpec::upper(0.25).unwrap().psi(0.75), 4.0);
        assert_eq!(WeightingSpec::lower(0.25).unwrap().psi(0.25), 0.0);
        assert_eq!(WeightingSpec::lower(0.25).unwrap().psi(0.0), 4.0);
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(WeightingSpec::constant().Psi(0.7), 0.7);
        assert!((WeightingSpec::upper(0.1).unwrap().Psi(0.95) - 0.5).abs() < 1e-12);
        assert_eq!(WeightingSpec::inequality(0.1).unwrap().Psi(1.0), 0.0);
        assert_eq!(WeightingSpec::upper(0.2).unwrap().total(), 1.0);
        assert_eq!(WeightingSpec::inequality(0.1).unwrap().total(), 0.0);
        assert_eq!(WeightingSpec::polynomial(2.0).unwrap().total(), 1.0);
    }

    #[test]
    fn endpoints_are_exact() {
        for w in builtins() {
            assert_eq!(w.Psi(0.0), 0.0, "{w:?}");
            assert_eq!(w.Psi(1.0), w.total(), "{w:?}");
        }
    }

    #[test]
    fn exponential_mass_is_one_by_quadrature() {
        let w = WeightingSpec::exponential(10.0).unwrap();
        assert!((oracle_integral(&w, 0.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(WeightingSpec::upper(0.0).is_err());
        assert!(WeightingSpec::upper(1.0).is_err());
        assert!(WeightingSpec::middle(0.5).is_err());
        assert!(WeightingSpec::exponential(0.0).is_err());
        assert!(WeightingSpec::polynomial(1.0).is_err());
        assert!(WeightingSpec::custom(&[(0.0, 1.0), (0.9, 1.0)]).is_err());
        assert!(WeightingSpec::custom(&[(0.0, 1.0), (0.7, 1.0), (0.5, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn cumulative_matches_quadrature_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for w in builtins() {
            for _ in 0..1000 {
                let s: f64 = rng.random();
                let q = oracle_integral(&w, 0.0, s);
                assert!(
                    (w.Psi(s) - q).abs() < 1e-10,
                    "{w:?} at {s}: {} vs {q}",
                    w.Psi(s)
                );
            }
        }
    }

    #[test]
    fn welfare_mirrors_exponential() {
        let e = WeightingSpec::exponential(3.0).unwrap();
        let m = WeightingSpec::welfare_exponential(3.0).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert_eq!(m.psi(u), e.psi(1.0 - u));
        }
    }

    #[test]
    fn quantile_integrals() {
        use statrs::distribution::{Continuous, ContinuousCDF, Normal};
        let n = Normal::standard();
        let q = |u: f64| n.inverse_cdf(u);
        let mid = WeightingSpec::middle(0.2).unwrap();
        assert!(mid.integrate_against_quantiles(q, 200).unwrap().abs() < 1e-12);
        let up = WeightingSpec::upper(0.1).unwrap();
        let es = n.pdf(n.inverse_cdf(0.9)) / 0.1;
        let v = up.integrate_against_quantiles(q, 200).unwrap();
        assert!((v - es).abs() < 1e-10, "{v} vs {es}");
        assert!((v - 1.7550).abs() < 1e-4);
        let c = WeightingSpec::constant()
            .integrate_against_quantiles(|u| u, 100)
            .unwrap();
        assert!((c - 0.5).abs() < 1e-14);
        // Mean of a standard normal, including both tails.
        let m = WeightingSpec::constant()
            .integrate_against_quantiles(q, 100)
            .unwrap();
        assert!(m.abs() < 1e-10);
        assert!(up.integrate_against_quantiles(q, 99).is_err());
        assert!(up
            .integrate_against_quantiles(|u| if u > 0.5 { f64::NAN } else { u }, 100)
            .is_err());
    }

    proptest! {
        #[test]
        fn spectral_families_are_nonnegative_and_increasing(
            u1 in 0.0f64..1.0, u2 in 0.0f64..1.0, alpha in 0.01f64..0.99, a in 1.01f64..20.0
        ) {
            let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
            for w in [
                WeightingSpec::upper(alpha).unwrap(),
                WeightingSpec::exponential(a).unwrap(),
                WeightingSpec::polynomial(a).unwrap(),
            ] {
                prop_assert!(w.is_spectral());
                prop_assert!(w.psi(lo) >= 0.0);
                prop_assert!(w.psi(lo) <= w.psi(hi) * (1.0 + 1e-12));
            }
        }
    }
}
