//! Conditional distribution functions F(s | x).
//!
//! [`ForestCdf`] splits the training range of Y into equal-width bins, grows
//! one regression forest per bin on the indicators 𝟙{Y_t ≤ c_b} at the bin
//! center, and reuses that forest's weights for every s in the bin. The
//! weights feed a local-linear fit of 𝟙{Y_t ≤ s} on the covariates, whose
//! value at the query point is clipped to [0, 1]. No monotone rearrangement
//! is applied across s.

mod forest;

use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::exec::Exec;
use crate::linalg::cholesky_solve_in_place;
use crate::rng::purpose;

use forest::Forest;
pub use forest::ForestParams;

/// A fitted estimator of s ↦ F(s | x).
pub trait ConditionalCdf: Sync {
    /// Width of the covariate vectors accepted by [`ConditionalCdf::evaluate`].
    fn dim(&self) -> usize;

    /// F(s | x) at every point of an ascending grid.
    fn evaluate(&self, x: &[f64], grid: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfConfig {
    pub n_trees: usize,
    /// Minimum leaf sizes to choose from by validation; a single entry skips
    /// the selection step.
    pub leaf_candidates: Vec<usize>,
    /// Features tried per split; `None` means ⌈p/3⌉.
    pub mtry: Option<usize>,
    /// Number of bins; `None` means max(4, ⌈ln T₁⌉).
    pub bins_override: Option<usize>,
    /// Share of the training rows used to grow candidate forests during leaf
    /// size selection; the rest validates. 3/4 of a 2T/3 split is T/2.
    pub selection_fraction: f64,
    /// Overrides the seed passed to the fit when set.
    pub seed: Option<u64>,
    pub exec: Exec,
}

impl Default for CdfConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            leaf_candidates: vec![5, 10, 25, 50, 100],
            mtry: None,
            bins_override: None,
            selection_fraction: 0.75,
            seed: None,
            exec: Exec::default(),
        }
    }
}

/// Number of bins used for `t1` training rows.
pub fn bin_count(t1: usize) -> usize {
    ((t1 as f64).ln().ceil() as usize).max(4)
}

/// Random-forest estimate of F(s | x) with local-linear adjustment.
#[derive(Debug, Clone)]
pub struct ForestCdf {
    dim: usize,
    /// Design columns that vary on the training rows; constant columns carry
    /// no information for the forest and would make the local fit singular.
    active: Vec<usize>,
    n: usize,
    /// Row-major training covariates restricted to `active`.
    xa: Vec<f64>,
    y: Vec<f64>,
    /// Training rows sorted by Y.
    order: Vec<u32>,
    y_min: f64,
    y_max: f64,
    centers: Vec<f64>,
    width: f64,
    forests: Vec<Forest>,
    leaf_size: usize,
}

/// Fits the conditional CDF, selecting the leaf size by validation when more
/// than one candidate is configured.
pub fn fit_conditional_cdf(train: &Dataset, cfg: &CdfConfig, seed: u64) -> Result<ForestCdf> {
    let seed = cfg.seed.unwrap_or(seed);
    let leaf = if cfg.leaf_candidates.len() > 1 {
        select_leaf_size(train, &cfg.leaf_candidates, cfg, seed)?
    } else {
        *cfg.leaf_candidates
            .first()
            .ok_or_else(|| Error::Parameter("no leaf size candidates".into()))?
    };
    ForestCdf::fit_with_leaf(train, cfg, leaf, seed, &[purpose::CDF_FINAL])
}

/// Chooses the minimum leaf size minimising the validation error of F̂ at the
/// bin centers, pooled over bins. The first `selection_fraction` of the rows
/// grow the forests, the remainder validates. Ties go to the larger leaf.
pub fn select_leaf_size(
    data: &Dataset,
    candidates: &[usize],
    cfg: &CdfConfig,
    seed: u64,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Parameter("no leaf size candidates".into()));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    if !(cfg.selection_fraction > 0.0 && cfg.selection_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "selection fraction must lie in (0, 1), got {}",
            cfg.selection_fraction
        )));
    }
    let n = data.nrows();
    let n_fit = ((n as f64) * cfg.selection_fraction).round() as usize;
    if n_fit < 2 || n - n_fit < 1 {
        return Err(Error::Size(format!(
            "{n} rows cannot be split for leaf selection"
        )));
    }
    let fit_part = data.slice(0, n_fit);
    let feasible: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&l| l >= 1 && n_fit >= 2 * l)
        .collect();
    if feasible.is_empty() {
        return Err(Error::Size(format!(
            "{n_fit} rows are fewer than twice every candidate leaf size {candidates:?}"
        )));
    }
    if feasible.len() == 1 {
        return Ok(feasible[0]);
    }

    let mut best: Option<(usize, f64)> = None;
    for (ci, &leaf) in feasible.iter().enumerate() {
        let model = ForestCdf::fit_with_leaf(
            &fit_part,
            cfg,
            leaf,
            seed,
            &[purpose::CDF_SELECT, ci as u64],
        )?;
        let centers = model.centers.clone();
        let mut sse = 0.0;
        for t in n_fit..n {
            let x = data.row(t);
            let yt = data.y()[t];
            let f = model.evaluate(&x, &centers)?;
            for (fb, &c) in f.iter().zip(&centers) {
                let target = if yt <= c { 1.0 } else { 0.0 };
                sse += (fb - target).powi(2);
            }
        }
        let mse = sse / ((n - n_fit) * centers.len()) as f64;
        match best {
            Some((bl, bm)) if mse > bm || (mse == bm && leaf < bl) => {}
            _ => best = Some((leaf, mse)),
        }
    }
    Ok(best.expect("at least two feasible candidates").0)
}

impl ForestCdf {
    /// Fits with a fixed minimum leaf size. `keys` namespace the tree streams.
    pub fn fit_with_leaf(
        train: &Dataset,
        cfg: &CdfConfig,
        leaf: usize,
        seed: u64,
        keys: &[u64],
    ) -> Result<Self> {
        let n = train.nrows();
        if leaf == 0 {
            return Err(Error::Parameter("leaf size must be positive".into()));
        }
        if n < 2 * leaf {
            return Err(Error::Size(format!(
                "{n} training rows for minimum leaf size {leaf}"
            )));
        }
        if cfg.n_trees == 0 {
            return Err(Error::Parameter("forest needs at least one tree".into()));
        }
        let y: Vec<f64> = train.y().iter().copied().collect();
        let (y_min, y_max) = y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !(y_min < y_max) {
            return Err(Error::Degenerate("training Y is constant".into()));
        }
        let x = train.x();
        let active: Vec<usize> = (0..x.ncols())
            .filter(|&j| {
                let c = x.column(j);
                c.max() > c.min()
            })
            .collect();
        let d = active.len();
        let mut xa = Vec::with_capacity(n * d);
        for t in 0..n {
            xa.extend(active.iter().map(|&j| x[(t, j)]));
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| y[a as usize].total_cmp(&y[b as usize]));

        let n_bins = cfg.bins_override.unwrap_or_else(|| bin_count(n));
        if n_bins == 0 {
            return Err(Error::Parameter("bin count must be positive".into()));
        }
        let width = (y_max - y_min) / n_bins as f64;
        let centers: Vec<f64> = (0..n_bins)
            .map(|b| y_min + (b as f64 + 0.5) * width)
            .collect();
        let targets: Vec<Vec<f64>> = centers
            .iter()
            .map(|&c| y.iter().map(|&v| if v <= c { 1.0 } else { 0.0 }).collect())
            .collect();
        let params = ForestParams {
            n_trees: cfg.n_trees,
            min_leaf: leaf,
            mtry: cfg.mtry.unwrap_or_else(|| d.div_ceil(3)).max(1),
        };

        // Trees of all bins form one flat work list; stream = (keys, bin, tree).
        let mut trees = cfg.exec.map(n_bins * params.n_trees, |k| {
            let (b, i) = (k / params.n_trees, k % params.n_trees);
            let mut path = keys.to_vec();
            path.extend([b as u64, i as u64]);
            Forest::grow_tree(&xa, d, &targets[b], params, seed, &path)
        });
        let mut forests = Vec::with_capacity(n_bins);
        for _ in 0..n_bins {
            let rest = trees.split_off(params.n_trees);
            forests.push(Forest::from_trees(std::mem::replace(&mut trees, rest)));
        }

        Ok(Self {
            dim: x.ncols(),
            active,
            n,
            xa,
            y,
            order,
            y_min,
            y_max,
            centers,
            width,
            forests,
            leaf_size: leaf,
        })
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn bin_centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn training_bounds(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    /// Bin whose center is nearest to `s`.
    pub fn bin_of(&self, s: f64) -> usize {
        let b = ((s - self.y_min) / self.width).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.centers.len() - 1)
        }
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.active.iter().map(|&j| x[j]).collect())
    }

    /// Forest weights over the training rows for bin `bin` at query `x`.
    pub fn weights(&self, bin: usize, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.project(x)?;
        let mut w = vec![0.0; self.n];
        self.forests[bin].add_weights(&q, &mut w);
        Ok(w)
    }

    /// Effective kernel κ_t with F̂(s | x) = Σ_{t: Y_t ≤ s} κ_t inside `bin`:
    /// the local-linear fit evaluated at `q`, written as a linear smoother.
    fn kernel(&self, bin: usize, q: &[f64], w: &mut [f64]) {
        w.iter_mut().for_each(|v| *v = 0.0);
        self.forests[bin].add_weights(q, w);
        let d = q.len();
        let k = d + 1;
        let mut a = vec![0.0; k * k];
        for t in 0..self.n {
            let wt = w[t];
            if wt == 0.0 {
                continue;
            }
            let z = &self.xa[t * d..(t + 1) * d];
            a[0] += wt;
            for i in 0..d {
                a[(i + 1) * k] += wt * z[i];
                for j in 0..=i {
                    a[(i + 1) * k + j + 1] += wt * z[i] * z[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                a[j * k + i] = a[i * k + j];
            }
        }
        let trace: f64 = (0..k).map(|i| a[i * k + i]).sum();
        for i in 0..k {
            let dii = a[i * k + i];
            a[i * k + i] += 1e-8 * if dii > 0.0 { dii } else { trace / k as f64 };
        }
        let mut g = Vec::with_capacity(k);
        g.push(1.0);
        g.extend_from_slice(q);
        if !cholesky_solve_in_place(&mut a, k, &mut g) {
            // Degenerate local design: fall back to the plain weighted average.
            return;
        }
        for t in 0..self.n {
            if w[t] != 0.0 {
                let z = &self.xa[t * d..(t + 1) * d];
                let lin = g[0] + z.iter().zip(&g[1..]).map(|(a, b)| a * b).sum::<f64>();
                w[t] *= lin;
            }
        }
    }
}

impl ConditionalCdf for ForestCdf {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        let q = self.project(x)?;
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Grid("evaluation grid must be ascending".into()));
        }
        let mut out = vec![0.0; grid.len()];
        let mut kappa = vec![0.0; self.n];
        let mut i = 0;
        while i < grid.len() {
            let s = grid[i];
            if s < self.y_min {
                out[i] = 0.0;
                i += 1;
                continue;
            }
            if s >= self.y_max {
                out[i] = 1.0;
                i += 1;
                continue;
            }
            // Contiguous run of grid points sharing a bin.
            let bin = self.bin_of(s);
            let mut j = i;
            while j < grid.len() && grid[j] < self.y_max && self.bin_of(grid[j]) == bin {
                j += 1;
            }
            self.kernel(bin, &q, &mut kappa);
            let mut acc = 0.0;
            let mut r = 0;
            for k in i..j {
                while r < self.n && self.y[self.order[r] as usize] <= grid[k] {
                    acc += kappa[self.order[r] as usize];
                    r += 1;
                }
                out[k] = acc.clamp(0.0, 1.0);
            }
            i = j;
        }
        Ok(out)
    }
}
