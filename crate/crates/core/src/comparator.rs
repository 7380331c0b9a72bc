//! The parametric alternative ∫ β̃(u) ψ(u) du built from linear quantile
//! regressions, and the closed-form limit that shows it is inconsistent
//! when conditional quantiles are nonlinear in X.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::exec::Exec;
use crate::linalg::cholesky_solve_in_place;
use crate::quadrature::gl16;
use crate::rng;
use crate::weighting::WeightingSpec;

/// Check loss Σ ρ_u(y − Xb).
pub fn check_loss(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, u: f64) -> f64 {
    let r = y - x * b;
    r.iter()
        .map(|&v| if v >= 0.0 { u * v } else { (u - 1.0) * v })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrOptions {
    /// Smoothing level at which the reweighting stops.
    pub tol: f64,
    /// Reweighting steps per smoothing level.
    pub max_inner: usize,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_inner: 30,
        }
    }
}

fn weighted_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    omega: &[f64],
    shift: f64,
) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    let mut a = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for t in 0..n {
        let w = omega[t];
        for i in 0..p {
            let xi = x[(t, i)];
            rhs[i] += xi * (w * y[t] + shift);
            for j in 0..=i {
                a[i * p + j] += w * xi * x[(t, j)];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[j * p + i] = a[i * p + j];
        }
    }
    cholesky_solve_in_place(&mut a, p, &mut rhs).then(|| DVector::from_vec(rhs))
}

/// Exact fit through the rows `idx`, if they are linearly independent.
fn interpolate(x: &DMatrix<f64>, y: &DVector<f64>, idx: &[usize]) -> Option<DVector<f64>> {
    let p = x.ncols();
    let xb = DMatrix::from_fn(p, p, |i, j| x[(idx[i], j)]);
    let yb = DVector::from_fn(p, |i, _| y[idx[i]]);
    let sol = xb.lu().solve(&yb)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// max_i [|Σ_t X_ti (u − 𝟙{r_t < 0})| − max_t|X_ti|·(#interpolated + 1)]⁺.
fn certificate_gap(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, u: f64) -> f64 {
    let r = y - x * b;
    let scale = y.amax().max(1.0);
    let interp = r.iter().filter(|v| v.abs() <= 1e-9 * scale).count() as f64;
    (0..x.ncols())
        .map(|i| {
            let g: f64 = (0..x.nrows())
                .map(|t| x[(t, i)] * (u - if r[t] < 0.0 { 1.0 } else { 0.0 }))
                .sum();
            let bound = x.column(i).amax() * (interp + 1.0);
            (g.abs() - bound).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Linear u-quantile regression by iteratively reweighted least squares on
/// a Huberised check loss whose smoothing κ halves from sd(Y)/10 down to
/// `opts.tol`, followed by a vertex polish. The result must pass the
/// subgradient optimality certificate.
pub fn quantile_regression(data: &Dataset, u: f64, opts: QrOptions) -> Result<DVector<f64>> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Parameter(format!(
            "quantile level must lie in (0, 1), got {u}"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Parameter(
            "smoothing tolerance must be positive".into(),
        ));
    }
    let (x, y) = (data.x(), data.y());
    let (n, p) = x.shape();
    let mut omega = vec![1.0; n];
    let shift = u - 0.5;
    let mut b = weighted_solve(x, y, &omega, 0.0).ok_or_else(|| Error::Singular {
        columns: crate::linalg::collinear_columns(x),
    })?;

    let mean = y.mean();
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut kappa = (sd / 10.0).max(opts.tol);
    loop {
        for _ in 0..opts.max_inner {
            let r = y - x * &b;
            for t in 0..n {
                omega[t] = 0.5 / r[t].abs().max(kappa);
            }
            let Some(next) = weighted_solve(x, y, &omega, shift) else {
                break;
            };
            let step = (&next - &b).amax();
            b = next;
            if step <= 1e-12 * (1.0 + b.amax()) {
                break;
            }
        }
        if kappa <= opts.tol {
            break;
        }
        kappa = (kappa / 2.0).max(opts.tol);
    }

    // The optimum is attained at a vertex interpolating p observations; try
    // the p closest to the smoothed solution.
    let r = y - x * &b;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs()));
    if let Some(v) = interpolate(x, y, &order[..p]) {
        if check_loss(x, y, &v, u) <= check_loss(x, y, &b, u) {
            b = v;
        }
    }

    let gap = certificate_gap(x, y, &b, u);
    if gap > 0.0 {
        return Err(Error::Convergence { gap });
    }
    Ok(b)
}

/// Quantile levels with product-integration trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Ψ̄ − ∫_{u₁}^{u_n} ψ: mass lost to truncating the extreme quantiles.
    truncation_mass: f64,
}

pub const DEFAULT_GRID_POINTS: usize = 99;
pub const DEFAULT_TRUNC_EPS: f64 = 0.01;
const JUMP_OFFSET: f64 = 1e-6;

impl QuantileGrid {
    /// `n_points` equally spaced levels on [ε, 1−ε] plus every jump of ψ and
    /// its ±10⁻⁶ neighbours.
    pub fn new(w: &WeightingSpec, n_points: usize, trunc_eps: f64) -> Result<Self> {
        if !(trunc_eps > 0.0 && trunc_eps < 0.5) {
            return Err(Error::Parameter(format!(
                "truncation must lie in (0, 1/2), got {trunc_eps}"
            )));
        }
        if n_points < 2 {
            return Err(Error::Parameter(
                "quantile grid needs at least 2 points".into(),
            ));
        }
        let (lo, hi) = (trunc_eps, 1.0 - trunc_eps);
        let mut nodes: Vec<f64> = (0..n_points)
            .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
            .collect();
        for j in w.jump_points() {
            nodes.extend(
                [j - JUMP_OFFSET, j, j + JUMP_OFFSET]
                    .into_iter()
                    .filter(|&v| v >= lo && v <= hi),
            );
        }
        Self::with_nodes(w, nodes)
    }

    /// Trapezoid weights ∫ ψ(u) hatᵢ(u) du for arbitrary nodes in (0, 1).
    pub fn with_nodes(w: &WeightingSpec, mut nodes: Vec<f64>) -> Result<Self> {
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        if nodes.len() < 2 || nodes[0] <= 0.0 || nodes[nodes.len() - 1] >= 1.0 {
            return Err(Error::Grid(
                "quantile nodes must be at least two levels inside (0, 1)".into(),
            ));
        }
        let jumps = w.jump_points();
        let mut weights = vec![0.0; nodes.len()];
        for i in 0..nodes.len() - 1 {
            let (a, b) = (nodes[i], nodes[i + 1]);
            let h = b - a;
            // Split at interior jumps so each GL panel sees a smooth ψ.
            let mut cuts = vec![a];
            cuts.extend(jumps.iter().copied().filter(|&j| j > a && j < b));
            cuts.push(b);
            for c in cuts.windows(2) {
                weights[i] += gl16(c[0], c[1], |v| w.psi(v) * (b - v) / h);
                weights[i + 1] += gl16(c[0], c[1], |v| w.psi(v) * (v - a) / h);
            }
        }
        let covered = w.Psi(nodes[nodes.len() - 1]) - w.Psi(nodes[0]);
        Ok(Self {
            truncation_mass: w.total() - covered,
            nodes,
            weights,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParametricFit {
    pub beta: Vec<f64>,
    pub truncation_mass: f64,
    /// Levels whose quantile regression failed and were dropped.
    pub failed_nodes: Vec<f64>,
    pub nodes: usize,
}

/// Σᵢ weightᵢ β̃(uᵢ). Failed nodes are dropped and the weights recomputed
/// on the surviving levels; more than 10% failures is an error.
pub fn parametric_waqr(
    data: &Dataset,
    w: &WeightingSpec,
    grid: &QuantileGrid,
    opts: QrOptions,
    exec: Exec,
) -> Result<ParametricFit> {
    let fits = exec.map(grid.nodes().len(), |i| {
        quantile_regression(data, grid.nodes()[i], opts)
    });
    let mut failed = Vec::new();
    let mut kept_nodes = Vec::new();
    let mut kept = Vec::new();
    for (u, f) in grid.nodes().iter().zip(fits) {
        match f {
            Ok(b) => {
                kept_nodes.push(*u);
                kept.push(b);
            }
            Err(e) if e.is_numeric() => failed.push(*u),
            Err(e) => return Err(e),
        }
    }
    let total = grid.nodes().len();
    if failed.len() * 10 > total {
        return Err(Error::TooManyFailures {
            failed: failed.len(),
            total,
        });
    }
    let grid = if failed.is_empty() {
        grid.clone()
    } else {
        QuantileGrid::with_nodes(w, kept_nodes)?
    };
    let p = data.ncols();
    let mut beta = vec![0.0; p];
    for (wt, b) in grid.weights().iter().zip(&kept) {
        for j in 0..p {
            beta[j] += wt * b[j];
        }
    }
    Ok(ParametricFit {
        beta,
        truncation_mass: grid.truncation_mass(),
        failed_nodes: failed,
        nodes: total,
    })
}

/// Limit β̄(u) of the no-intercept u-quantile regression slope under
/// Y = Xβ + X²(4U − 3), X ~ U[0, 2].
pub fn fan_slope(beta: f64, u: f64) -> f64 {
    if u < 0.75 {
        beta - 6.0 + 4.0 * (3.0 * u).sqrt()
    } else {
        beta + 2.0 - 4.0 * (1.0 - u).sqrt()
    }
}

/// 2∫_{1/2}^1 β̄(u) du − β = 10/3 − 4√6/3 ≈ 0.06735: the asymptotic bias of
/// the parametric estimator in the nonlinear design, with
/// ψ(u) = 2·𝟙{u ≥ 1/2}.
pub fn fan_integrated_bias() -> f64 {
    10.0 / 3.0 - 4.0 * 6f64.sqrt() / 3.0
}

/// `n` draws of Y = Xβ + X²(4U − 3), X ~ U[0, 2]; the design is X alone.
pub fn fan_sample(n: usize, beta: f64, seed: u64) -> Result<Dataset> {
    let mut r = rng::stream(seed, &[rng::purpose::DATA]);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xv: f64 = r.random_range(0.0..2.0);
        let uv: f64 = r.random();
        x.push(xv);
        y.push(xv * beta + xv * xv * (4.0 * uv - 3.0));
    }
    Dataset::new(DMatrix::from_vec(n, 1, x), DVector::from_vec(y))
}
