//! Split-sample and cross-fitted WAQR estimation.
//!
//! The conditional CDF is fitted on one part of the sample, R̂ is built on
//! the other and regressed on X by OLS; inference uses a Newey-West
//! covariance for the split-sample fit and the heteroskedasticity-robust
//! sandwich for the cross-fitted one.

mod dataset;
mod newey_west;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cdf::{fit_conditional_cdf, CdfConfig, ForestCdf};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{ensure_psd, least_squares, COND_WARN};
use crate::rng::{derive_seed, purpose};
use crate::transform::{transform_all, TransformGrid, DEFAULT_MAX_GRID_POINTS};
use crate::weighting::WeightingSpec;

pub use dataset::Dataset;
pub use newey_west::{bartlett, default_lag, newey_west_cov, omega, NwDivisor};

/// How the two cross-fitted halves are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossfitCombine {
    /// One OLS over all rows, each R̂ built from the other half's F̂.
    #[default]
    Pooled,
    /// Mean of the two half-sample OLS estimates.
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub split_ratio: f64,
    /// Newey-West lag; `None` means ⌊T₂^{1/5}⌋.
    pub nw_lag: Option<usize>,
    pub nw_divisor: NwDivisor,
    pub max_grid_points: usize,
    pub crossfit_combine: CrossfitCombine,
    pub cdf: CdfConfig,
    /// Parallelism over eval rows; the CDF fit uses `cdf.exec`.
    pub exec: Exec,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            split_ratio: 2.0 / 3.0,
            nw_lag: None,
            nw_divisor: NwDivisor::EvalSize,
            max_grid_points: DEFAULT_MAX_GRID_POINTS,
            crossfit_combine: CrossfitCombine::Pooled,
            cdf: CdfConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl FitConfig {
    /// Sets the execution policy of every stage.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self.cdf.exec = exec;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    SplitSample,
    Crossfit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub condition_number: f64,
    pub warnings: Vec<String>,
    /// Σ̂ failed the Cholesky test and was projected onto the PSD cone.
    pub psd_repaired: bool,
    /// Selected minimum leaf size, one per fitted CDF.
    pub leaf_sizes: Vec<usize>,
    pub grid_points: Vec<usize>,
    /// Half-sample estimates of a cross-fit: F̂ from the first half, then
    /// from the second.
    pub crossfit_betas: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: FitKind,
    pub beta_hat: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Estimated covariance of √n (β̂ − β), n = `n_obs`.
    pub sigma_hat: DMatrix<f64>,
    pub std_errors: DVector<f64>,
    pub rhat: DVector<f64>,
    /// (T₁, T₂); the two half sizes for a cross-fit.
    pub split: (usize, usize),
    /// Observations entering the regression: T₂, or T for a cross-fit.
    pub n_obs: usize,
    pub nw_lag: usize,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    /// Zero standard error: the interval collapses to the point estimate.
    pub degenerate: bool,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Sizes (T₁, T₂) of a consecutive split, T₁ = ⌈ratio·T⌉.
pub fn split_sizes(t: usize, ratio: f64) -> Result<(usize, usize)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    // The slack keeps 2/3·300 at 200 despite rounding in 2/3.
    let t1 = ((ratio * t as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok((t1, t - t1))
}

/// First ⌈ratio·T⌉ rows and the remainder, in time order.
pub fn split_sample(data: &Dataset, ratio: f64) -> Result<(Dataset, Dataset)> {
    let (t1, t2) = split_sizes(data.nrows(), ratio)?;
    let need = data.ncols() + 1;
    if t1 < need || t2 < need {
        return Err(Error::Size(format!(
            "split ({t1}, {t2}) leaves fewer than {need} rows in a part"
        )));
    }
    Ok((data.slice(0, t1), data.slice(t1, data.nrows())))
}

struct Regression {
    beta: DVector<f64>,
    residuals: DVector<f64>,
    condition_number: f64,
}

fn regress(x: &DMatrix<f64>, r: &DVector<f64>) -> Result<Regression> {
    let ls = least_squares(x, r)?;
    let residuals = r - x * &ls.beta;
    Ok(Regression {
        beta: ls.beta,
        residuals,
        condition_number: ls.condition_number,
    })
}

fn finish_covariance(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    lag: usize,
    divisor: NwDivisor,
    n_obs: usize,
    diag: &mut Diagnostics,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut sigma = newey_west_cov(x, resid, lag, bartlett, divisor)?;
    diag.psd_repaired = ensure_psd(&mut sigma);
    if diag.psd_repaired {
        diag.warnings
            .push("covariance estimate was not PSD and has been repaired".into());
    }
    let se = DVector::from_fn(sigma.nrows(), |i, _| {
        (sigma[(i, i)].max(0.0) / n_obs as f64).sqrt()
    });
    Ok((sigma, se))
}

fn note_condition(diag: &mut Diagnostics, cond: f64) {
    diag.condition_number = cond;
    if cond > COND_WARN {
        diag.warnings.push(format!(
            "design is near-singular (condition number {cond:.3e})"
        ));
    }
}

/// Regresses given R̂ values on the eval design: β̂, residuals and the
/// Newey-West covariance.
pub fn regress_rhat(
    x_eval: &DMatrix<f64>,
    rhat: DVector<f64>,
    t1: usize,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let t2 = x_eval.nrows();
    if rhat.len() != t2 {
        return Err(Error::Shape {
            expected: t2,
            got: rhat.len(),
        });
    }
    let lag = cfg.nw_lag.unwrap_or_else(|| default_lag(t2));
    if lag >= t2 {
        return Err(Error::Parameter(format!(
            "Newey-West lag {lag} must be below T₂ = {t2}"
        )));
    }
    let reg = regress(x_eval, &rhat)?;
    let mut diagnostics = Diagnostics::default();
    note_condition(&mut diagnostics, reg.condition_number);
    let (sigma_hat, std_errors) = finish_covariance(
        x_eval,
        &reg.residuals,
        lag,
        cfg.nw_divisor,
        t2,
        &mut diagnostics,
    )?;
    Ok(FitResult {
        kind: FitKind::SplitSample,
        beta_hat: reg.beta,
        residuals: reg.residuals,
        sigma_hat,
        std_errors,
        rhat,
        split: (t1, t2),
        n_obs: t2,
        nw_lag: lag,
        diagnostics,
    })
}

/// F̂ on `train`, R̂ on `eval`.
fn transform_part(
    train: &Dataset,
    eval: &Dataset,
    w: &WeightingSpec,
    cfg: &FitConfig,
    seed: u64,
) -> Result<(DVector<f64>, ForestCdf, TransformGrid)> {
    let model = fit_conditional_cdf(train, &cfg.cdf, seed)?;
    let ty: Vec<f64> = train.y().iter().copied().collect();
    let grid = TransformGrid::build(&ty, cfg.max_grid_points)?;
    let r = transform_all(&model, w, eval, &grid, cfg.exec)?;
    Ok((DVector::from_vec(r), model, grid))
}

/// Split-sample WAQR fit: F̂ on the first ⌈ratio·T⌉ rows, OLS of R̂ on X over
/// the rest, Newey-West standard errors.
pub fn waqr_fit(
    data: &Dataset,
    w: &WeightingSpec,
    cfg: &FitConfig,
    seed: u64,
) -> Result<FitResult> {
    let (train, eval) = split_sample(data, cfg.split_ratio)?;
    let t1 = train.nrows();
    let t2 = eval.nrows();
    let lag = cfg.nw_lag.unwrap_or_else(|| default_lag(t2));
    if lag >= t2 {
        return Err(Error::Parameter(format!(
            "Newey-West lag {lag} must be below T₂ = {t2}"
        )));
    }
    let bad = crate::linalg::collinear_columns(eval.x());
    if !bad.is_empty() {
        return Err(Error::Singular { columns: bad });
    }
    let (rhat, model, grid) = transform_part(&train, &eval, w, cfg, seed)?;
    let mut fit = regress_rhat(eval.x(), rhat, t1, cfg)?;
    fit.diagnostics.leaf_sizes = vec![model.leaf_size()];
    fit.diagnostics.grid_points = vec![grid.len()];
    Ok(fit)
}

/// Cross-fitted WAQR for i.i.d. data: the sample is cut into equal halves,
/// each half's R̂ uses F̂ from the other, and the covariance is the
/// heteroskedasticity-robust sandwich on the pooled residuals.
pub fn waqr_crossfit(
    data: &Dataset,
    w: &WeightingSpec,
    cfg: &FitConfig,
    seed: u64,
) -> Result<FitResult> {
    let t = data.nrows();
    let h = t / 2;
    let need = data.ncols() + 1;
    if h < need || t - h < need {
        return Err(Error::Size(format!(
            "{t} rows cannot be cross-fitted with {} regressors",
            data.ncols()
        )));
    }
    let bad = crate::linalg::collinear_columns(data.x());
    if !bad.is_empty() {
        return Err(Error::Singular { columns: bad });
    }
    let a = data.slice(0, h);
    let b = data.slice(h, t);
    let (r_b, model_a, grid_a) =
        transform_part(&a, &b, w, cfg, derive_seed(seed, &[purpose::CROSSFIT, 0]))?;
    let (r_a, model_b, grid_b) =
        transform_part(&b, &a, w, cfg, derive_seed(seed, &[purpose::CROSSFIT, 1]))?;

    let fit_b = regress(b.x(), &r_b);
    let fit_a = regress(a.x(), &r_a);
    let rhat = DVector::from_iterator(t, r_a.iter().chain(r_b.iter()).copied());
    let x = data.x();

    let mut diagnostics = Diagnostics {
        leaf_sizes: vec![model_a.leaf_size(), model_b.leaf_size()],
        grid_points: vec![grid_a.len(), grid_b.len()],
        ..Diagnostics::default()
    };
    if let (Ok(fb), Ok(fa)) = (&fit_b, &fit_a) {
        diagnostics.crossfit_betas = Some((
            fb.beta.iter().copied().collect(),
            fa.beta.iter().copied().collect(),
        ));
    }

    let (beta_hat, residuals, cond) = match cfg.crossfit_combine {
        CrossfitCombine::Pooled => {
            let reg = regress(x, &rhat)?;
            (reg.beta, reg.residuals, reg.condition_number)
        }
        CrossfitCombine::Average => {
            let (fb, fa) = (fit_b?, fit_a?);
            let beta = (&fb.beta + &fa.beta) / 2.0;
            let residuals =
                DVector::from_iterator(t, fa.residuals.iter().chain(fb.residuals.iter()).copied());
            (
                beta,
                residuals,
                fa.condition_number.max(fb.condition_number),
            )
        }
    };
    note_condition(&mut diagnostics, cond);
    let (sigma_hat, std_errors) =
        finish_covariance(x, &residuals, 0, NwDivisor::EvalSize, t, &mut diagnostics)?;
    Ok(FitResult {
        kind: FitKind::Crossfit,
        beta_hat,
        residuals,
        sigma_hat,
        std_errors,
        rhat,
        split: (h, t - h),
        n_obs: t,
        nw_lag: 0,
        diagnostics,
    })
}

/// β̂ᵢ ± z_{(1+level)/2} SEᵢ.
pub fn confidence_intervals(fit: &FitResult, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
    Ok(fit
        .beta_hat
        .iter()
        .zip(fit.std_errors.iter())
        .map(|(&b, &se)| Interval {
            lower: b - z * se,
            upper: b + z * se,
            degenerate: se == 0.0,
        })
        .collect())
}
