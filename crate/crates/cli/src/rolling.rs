//! Rolling-window estimation.

use waqr::estimator::{waqr_crossfit, waqr_fit, Dataset, FitConfig, FitResult};
use waqr::WeightingSpec;

use crate::{CliError, CliResult};

/// Row ranges `[start, end)` of each window position.
pub fn window_bounds(t: usize, window: usize, step: usize) -> Vec<(usize, usize)> {
    if window == 0 || step == 0 || window > t {
        return Vec::new();
    }
    (0..)
        .map(|k| k * step)
        .take_while(|&s| s + window <= t)
        .map(|s| (s, s + window))
        .collect()
}

#[derive(Debug, Clone)]
pub struct WindowFit {
    pub start: usize,
    pub end: usize,
    pub result: Result<FitResult, String>,
}

/// One fit per window; a failing window is recorded and the run continues.
/// Every window uses the same seed, so `window = T` reproduces a plain fit.
pub fn run_rolling(
    data: &Dataset,
    window: usize,
    step: usize,
    w: &WeightingSpec,
    cfg: &FitConfig,
    crossfit: bool,
    seed: u64,
) -> CliResult<Vec<WindowFit>> {
    let t = data.nrows();
    let p = data.ncols();
    if window > t {
        return Err(CliError::Config(format!(
            "rolling window {window} exceeds the {t} available rows"
        )));
    }
    if window <= p + 10 {
        return Err(CliError::Config(format!(
            "rolling window {window} must exceed p + 10 = {}",
            p + 10
        )));
    }
    if step == 0 {
        return Err(CliError::Config("rolling step must be positive".into()));
    }
    Ok(window_bounds(t, window, step)
        .into_iter()
        .map(|(start, end)| {
            let sub = slice_rows(data, start, end);
            let result = if crossfit {
                waqr_crossfit(&sub, w, cfg, seed)
            } else {
                waqr_fit(&sub, w, cfg, seed)
            };
            WindowFit {
                start,
                end,
                result: result.map_err(|e| e.to_string()),
            }
        })
        .collect())
}

fn slice_rows(data: &Dataset, start: usize, end: usize) -> Dataset {
    let x = data.x().rows(start, end - start).into_owned();
    let y = data.y().rows(start, end - start).into_owned();
    Dataset::new(x, y)
        .expect("a row range of a valid dataset is valid")
        .with_time_ordered(data.time_ordered())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_arithmetic() {
        assert_eq!(
            window_bounds(100, 50, 25),
            vec![(0, 50), (25, 75), (50, 100)]
        );
        assert_eq!(window_bounds(100, 100, 7), vec![(0, 100)]);
        assert_eq!(window_bounds(100, 30, 40), vec![(0, 30), (40, 70)]);
        assert!(window_bounds(10, 11, 1).is_empty());
    }
}
