//! Monte Carlo designs with known WAQR coefficients, and the coverage / MAE
//! harness.
//!
//! X = (1, |Z₁|, Z₂, …, Z_p) with Z standard normal and
//!
//! * DGP1: Y = ε − X'β̄
//! * DGP2: Y = (1 + 0.2 X¹) ε − X'β̄
//!
//! so ∫ q_{Y|X}(u) ψ(u) du is linear in X with slopes −β̄Ψ̄ (plus 0.2∫q_εψ
//! on X¹ under DGP2) and intercept ∫q_εψ.

use rand::Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{confidence_intervals, waqr_crossfit, waqr_fit, Dataset, FitConfig};
use crate::exec::Exec;
use crate::linalg::CompensatedSum;
use crate::rng::{self, purpose};
use crate::weighting::WeightingSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    Dgp1,
    Dgp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Normal,
    StudentT4,
}

impl Noise {
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            Noise::Normal => Normal::standard().inverse_cdf(u),
            Noise::StudentT4 => t4_quantile(u),
        }
    }

    pub fn cdf(self, v: f64) -> f64 {
        match self {
            Noise::Normal => Normal::standard().cdf(v),
            Noise::StudentT4 => {
                let s = v / (4.0 + v * v).sqrt();
                0.5 + 0.25 * s * (3.0 - s * s)
            }
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            Noise::Normal => rng.sample(StandardNormal),
            Noise::StudentT4 => rng.sample(StudentT::new(4.0).expect("valid degrees of freedom")),
        }
    }
}

/// Quantile of Student's t with 4 degrees of freedom, in closed form.
pub fn t4_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let alpha = 4.0 * p * (1.0 - p);
    let sa = alpha.sqrt();
    let q = ((sa.acos() / 3.0).cos() / sa - 1.0).max(0.0).sqrt();
    2.0 * (p - 0.5).signum() * q
}

/// Which estimator the harness runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    #[default]
    SplitSample,
    Crossfit,
}

/// The four weighting functions of the standard designs: 1 Upper(0.1),
/// 2 Inequality(0.1), 3 Middle(0.2), 4 Exponential(a = 10).
pub fn psi_type(k: u8) -> Result<WeightingSpec> {
    match k {
        1 => WeightingSpec::upper(0.1),
        2 => WeightingSpec::inequality(0.1),
        3 => WeightingSpec::middle(0.2),
        4 => WeightingSpec::exponential(10.0),
        _ => Err(Error::Parameter(format!(
            "unknown weighting type {k}; expected 1-4"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dgp: Dgp,
    pub noise: Noise,
    /// β̄ including β̄₁; its length is the number of slopes p.
    pub beta_bar: Vec<f64>,
    pub t: usize,
    pub reps: usize,
    pub psi: WeightingSpec,
    pub seed: u64,
    pub level: f64,
    pub fit: FitConfig,
    /// Parallelism across replications.
    pub exec: Exec,
}

impl SimConfig {
    /// Standard design: β̄ = (β̄₁, 0.5, 0, …) with p ∈ {2, 5} slopes.
    pub fn standard(
        dgp: Dgp,
        noise: Noise,
        p: usize,
        beta1: f64,
        t: usize,
        psi: WeightingSpec,
    ) -> Result<Self> {
        if !(p == 2 || p == 5) {
            return Err(Error::Parameter(format!(
                "standard designs have 2 or 5 slopes, got {p}"
            )));
        }
        let mut beta_bar = vec![0.0; p];
        beta_bar[0] = beta1;
        beta_bar[1] = 0.5;
        Ok(Self {
            dgp,
            noise,
            beta_bar,
            t,
            reps: 500,
            psi,
            seed: 0,
            level: 0.9,
            fit: FitConfig::default(),
            exec: Exec::default(),
        })
    }

    pub fn p(&self) -> usize {
        self.beta_bar.len()
    }

    fn validate(&self) -> Result<()> {
        if self.beta_bar.is_empty() {
            return Err(Error::Parameter("at least one slope is required".into()));
        }
        if self.reps == 0 {
            return Err(Error::Parameter(
                "at least one replication is required".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Parameter(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.t <= self.p() + 1 {
            return Err(Error::Size(format!(
                "{} rows for {} regressors",
                self.t,
                self.p() + 1
            )));
        }
        Ok(())
    }
}

/// Draws replication `rep`: T i.i.d. rows with an intercept column.
pub fn gen_dgp(cfg: &SimConfig, rep: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, &[rep, purpose::DATA]);
    let p = cfg.p();
    let mut rows = Vec::with_capacity(cfg.t);
    let mut y = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        let mut row = Vec::with_capacity(p + 1);
        row.push(1.0);
        for j in 0..p {
            let z: f64 = r.sample(StandardNormal);
            row.push(if j == 0 { z.abs() } else { z });
        }
        let eps = cfg.noise.sample(&mut r);
        let lin: f64 = row[1..].iter().zip(&cfg.beta_bar).map(|(x, b)| x * b).sum();
        let scale = match cfg.dgp {
            Dgp::Dgp1 => 1.0,
            Dgp::Dgp2 => 1.0 + 0.2 * row[1],
        };
        y.push(scale * eps - lin);
        rows.push(row);
    }
    Ok(Dataset::from_rows(&rows, y)?.with_time_ordered(false))
}

/// ∫₀¹ q_ε(u) ψ(u) du.
pub fn noise_functional(noise: Noise, w: &WeightingSpec) -> Result<f64> {
    w.integrate_against_quantiles(|u| noise.quantile(u), 400)
}

/// (intercept, slopes) of the linear WAQR model implied by the design.
pub fn true_beta(cfg: &SimConfig, w: &WeightingSpec) -> Result<Vec<f64>> {
    let c = noise_functional(cfg.noise, w)?;
    let total = w.total();
    let mut beta = Vec::with_capacity(cfg.p() + 1);
    beta.push(c);
    beta.extend(cfg.beta_bar.iter().map(|b| -b * total));
    if cfg.dgp == Dgp::Dgp2 {
        beta[1] += 0.2 * c;
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub dgp: Dgp,
    pub noise: Noise,
    pub p: usize,
    pub t: usize,
    pub beta1_bar: f64,
    pub psi: String,
    pub estimator: EstimatorChoice,
    pub level: f64,
    pub reps: usize,
    pub failed: usize,
    pub true_beta1: f64,
    /// Share of successful replications whose CI for β₁ covers the truth.
    pub coverage: f64,
    pub coverage_se: f64,
    /// Mean |β̂₁ − β₁|.
    pub mae: f64,
    pub mae_se: f64,
    pub mean_beta1: f64,
}

struct RepOutcome {
    hit: bool,
    abs_err: f64,
    beta1: f64,
}

fn run_rep(cfg: &SimConfig, choice: EstimatorChoice, truth: f64, rep: u64) -> Result<RepOutcome> {
    let data = gen_dgp(cfg, rep)?;
    let seed = rng::derive_seed(cfg.seed, &[rep, purpose::FIT]);
    let fit = match choice {
        EstimatorChoice::SplitSample => waqr_fit(&data, &cfg.psi, &cfg.fit, seed)?,
        EstimatorChoice::Crossfit => waqr_crossfit(&data, &cfg.psi, &cfg.fit, seed)?,
    };
    let ci = confidence_intervals(&fit, cfg.level)?;
    let b1 = fit.beta_hat[1];
    Ok(RepOutcome {
        hit: ci[1].contains(truth),
        abs_err: (b1 - truth).abs(),
        beta1: b1,
    })
}

/// Runs `cfg.reps` replications. Each replication depends only on
/// (seed, rep), so results do not depend on the execution policy, and a
/// partial run can be resumed by index. Failed replications are excluded;
/// more than 2% failures is an error.
pub fn run_mc(cfg: &SimConfig, choice: EstimatorChoice) -> Result<McReport> {
    run_mc_with(cfg, choice, |_, _| {})
}

/// [`run_mc`] with a callback invoked after each replication with
/// (replication index, outcome ok).
pub fn run_mc_with<F: Fn(usize, bool) + Sync>(
    cfg: &SimConfig,
    choice: EstimatorChoice,
    progress: F,
) -> Result<McReport> {
    cfg.validate()?;
    let truth = true_beta(cfg, &cfg.psi)?[1];
    let outcomes = cfg.exec.map(cfg.reps, |rep| {
        let out = run_rep(cfg, choice, truth, rep as u64);
        progress(rep, out.is_ok());
        out
    });

    let (mut hits, mut err, mut err2, mut b1) = (
        CompensatedSum::default(),
        CompensatedSum::default(),
        CompensatedSum::default(),
        CompensatedSum::default(),
    );
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(o) => {
                hits.add(if o.hit { 1.0 } else { 0.0 });
                err.add(o.abs_err);
                err2.add(o.abs_err * o.abs_err);
                b1.add(o.beta1);
            }
            Err(e) if e.is_numeric() || matches!(e, Error::Degenerate(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed * 50 > cfg.reps {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.reps,
        });
    }
    let n = (cfg.reps - failed) as f64;
    let coverage = hits.value() / n;
    let mae = err.value() / n;
    let var = (err2.value() / n - mae * mae).max(0.0);
    Ok(McReport {
        dgp: cfg.dgp,
        noise: cfg.noise,
        p: cfg.p(),
        t: cfg.t,
        beta1_bar: cfg.beta_bar[0],
        psi: cfg.psi.name().to_string(),
        estimator: choice,
        level: cfg.level,
        reps: cfg.reps,
        failed,
        true_beta1: truth,
        coverage,
        coverage_se: (coverage * (1.0 - coverage) / n).sqrt(),
        mae,
        mae_se: (var / n).sqrt(),
        mean_beta1: b1.value() / n,
    })
}
