//! Flat `key = value` configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are skipped.
//! Command-line flags are applied afterwards through the same [`RunConfig::set`]
//! path, so a flag always wins over the file.

use std::fs;
use std::path::{Path, PathBuf};

use waqr::comparator::{QrOptions, DEFAULT_GRID_POINTS, DEFAULT_TRUNC_EPS};
use waqr::estimator::{split_sizes, CrossfitCombine, FitConfig, NwDivisor};
use waqr::simulator::{Dgp, EstimatorChoice, Noise};
use waqr::WeightingSpec;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PsiOptions {
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub custom_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub grid_points: usize,
    pub trunc_eps: f64,
    pub qr: QrOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            trunc_eps: DEFAULT_TRUNC_EPS,
            qr: QrOptions::default(),
        }
    }
}

/// Simulation cells; every list key expands into a Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    pub dgp: Vec<Dgp>,
    pub noise: Vec<Noise>,
    pub p: Vec<usize>,
    pub beta1: Vec<f64>,
    pub t: Vec<usize>,
    pub psi_type: Vec<u8>,
    pub estimator: Vec<EstimatorChoice>,
    pub reps: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for SimGrid {
    fn default() -> Self {
        Self {
            dgp: vec![Dgp::Dgp1],
            noise: vec![Noise::Normal],
            p: vec![2],
            beta1: vec![0.0],
            t: vec![1000],
            psi_type: vec![1],
            estimator: vec![EstimatorChoice::SplitSample],
            reps: 500,
            seed: 0,
            level: 0.9,
        }
    }
}

/// Column roles for CSV input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Roles {
    pub y: Option<String>,
    pub x: Vec<String>,
    pub time: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub psi: PsiOptions,
    pub fit: FitConfig,
    pub add_intercept: bool,
    pub crossfit: bool,
    /// Divide the Newey-West cross-products by T₂ − T₁ instead of T₂.
    pub literal_divisor: bool,
    pub seed: u64,
    pub level: f64,
    pub cmp: CompareOptions,
    pub sim: SimGrid,
    pub data: Roles,
    pub rolling_window: Option<usize>,
    pub rolling_step: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            psi: PsiOptions::default(),
            fit: FitConfig::default(),
            add_intercept: true,
            crossfit: false,
            literal_divisor: false,
            seed: 0,
            level: 0.9,
            cmp: CompareOptions::default(),
            sim: SimGrid::default(),
            data: Roles::default(),
            rolling_window: None,
            rolling_step: None,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("{key} = {value:?}: expected {what}"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> CliResult<T> {
    value.trim().parse().map_err(|_| bad(key, value, what))
}

fn parse_list<T, F>(key: &str, value: &str, f: F) -> CliResult<Vec<T>>
where
    F: Fn(&str) -> CliResult<T>,
{
    let out = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<CliResult<Vec<_>>>()?;
    if out.is_empty() {
        return Err(bad(key, value, "a non-empty list"));
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn auto_or<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> CliResult<Option<T>> {
    if value.trim().eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, value, what).map(Some)
    }
}

fn parse_dgp(key: &str, s: &str) -> CliResult<Dgp> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "dgp1" => Ok(Dgp::Dgp1),
        "2" | "dgp2" => Ok(Dgp::Dgp2),
        _ => Err(bad(key, s, "1 or 2")),
    }
}

fn parse_noise(key: &str, s: &str) -> CliResult<Noise> {
    match s.to_ascii_lowercase().as_str() {
        "normal" | "n" => Ok(Noise::Normal),
        "t4" | "t" | "student_t4" => Ok(Noise::StudentT4),
        _ => Err(bad(key, s, "normal or t4")),
    }
}

fn parse_estimator(key: &str, s: &str) -> CliResult<EstimatorChoice> {
    match s.to_ascii_lowercase().as_str() {
        "split" | "split_sample" => Ok(EstimatorChoice::SplitSample),
        "crossfit" => Ok(EstimatorChoice::Crossfit),
        _ => Err(bad(key, s, "split or crossfit")),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    /// Applies a single assignment; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let int = "a non-negative integer";
        let real = "a number";
        match key {
            "psi.family" => self.psi.family = Some(value.to_ascii_lowercase()),
            "psi.alpha" => self.psi.alpha = Some(parse(key, value, real)?),
            "psi.a" => self.psi.a = Some(parse(key, value, real)?),
            "psi.custom_file" => self.psi.custom_file = Some(PathBuf::from(value)),

            "cdf.n_trees" => self.fit.cdf.n_trees = parse(key, value, int)?,
            "cdf.leaf_candidates" => {
                self.fit.cdf.leaf_candidates =
                    parse_list(key, value, |s| parse(key, s, "a list of integers"))?
            }
            "cdf.mtry" => self.fit.cdf.mtry = auto_or(key, value, "an integer or auto")?,
            "cdf.bins_override" => {
                self.fit.cdf.bins_override = auto_or(key, value, "an integer or auto")?
            }
            "cdf.seed" => self.fit.cdf.seed = auto_or(key, value, "an integer or auto")?,

            "transform.max_grid_points" => self.fit.max_grid_points = parse(key, value, int)?,

            "fit.split_ratio" => self.fit.split_ratio = parse(key, value, real)?,
            "fit.nw_lag" => self.fit.nw_lag = auto_or(key, value, "an integer or auto")?,
            "fit.nw_divisor" => {
                self.literal_divisor = match value.to_ascii_uppercase().replace(' ', "").as_str() {
                    "T2" => false,
                    "T2-T1" => true,
                    _ => return Err(bad(key, value, "T2 or T2-T1")),
                }
            }
            "fit.add_intercept" => self.add_intercept = parse_bool(key, value)?,
            "fit.crossfit" => self.crossfit = parse_bool(key, value)?,
            "fit.crossfit_combine" => {
                self.fit.crossfit_combine = match value.to_ascii_lowercase().as_str() {
                    "pooled" => CrossfitCombine::Pooled,
                    "average" => CrossfitCombine::Average,
                    _ => return Err(bad(key, value, "pooled or average")),
                }
            }
            "fit.seed" => self.seed = parse(key, value, int)?,
            "fit.level" => self.level = parse(key, value, real)?,

            "cmp.grid_points" => self.cmp.grid_points = parse(key, value, int)?,
            "cmp.trunc_eps" => self.cmp.trunc_eps = parse(key, value, real)?,
            "cmp.tol" => self.cmp.qr.tol = parse(key, value, real)?,

            "sim.dgp" => self.sim.dgp = parse_list(key, value, |s| parse_dgp(key, s))?,
            "sim.noise" => self.sim.noise = parse_list(key, value, |s| parse_noise(key, s))?,
            "sim.p" => self.sim.p = parse_list(key, value, |s| parse(key, s, "2 or 5"))?,
            "sim.beta1" => self.sim.beta1 = parse_list(key, value, |s| parse(key, s, real))?,
            "sim.t" => self.sim.t = parse_list(key, value, |s| parse(key, s, int))?,
            "sim.psi_type" => self.sim.psi_type = parse_list(key, value, |s| parse(key, s, "1-4"))?,
            "sim.estimator" => {
                self.sim.estimator = parse_list(key, value, |s| parse_estimator(key, s))?
            }
            "sim.reps" => self.sim.reps = parse(key, value, int)?,
            "sim.seed" => self.sim.seed = parse(key, value, int)?,
            "sim.level" => self.sim.level = parse(key, value, real)?,

            "data.y" => self.data.y = Some(value.to_string()),
            "data.x" => self.data.x = parse_list(key, value, |s| Ok(s.to_string()))?,
            "data.time" => self.data.time = Some(value.to_string()),

            "rolling.window" => self.rolling_window = Some(parse(key, value, int)?),
            "rolling.step" => self.rolling_step = Some(parse(key, value, int)?),

            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Builds the weighting function from `psi.*`.
    pub fn weighting(&self) -> CliResult<WeightingSpec> {
        let family = self.psi.family.as_deref().ok_or_else(|| {
            CliError::Config("no weighting family given (psi.family or --psi)".into())
        })?;
        let alpha = || {
            self.psi
                .alpha
                .ok_or_else(|| CliError::Config(format!("{family} requires psi.alpha")))
        };
        let a = || {
            self.psi
                .a
                .ok_or_else(|| CliError::Config(format!("{family} requires psi.a")))
        };
        let spec = match family {
            "upper" => WeightingSpec::upper(alpha()?)?,
            "lower" => WeightingSpec::lower(alpha()?)?,
            "middle" => WeightingSpec::middle(alpha()?)?,
            "inequality" => WeightingSpec::inequality(alpha()?)?,
            "exponential" => WeightingSpec::exponential(a()?)?,
            "polynomial" => WeightingSpec::polynomial(a()?)?,
            "welfare_exponential" => WeightingSpec::welfare_exponential(a()?)?,
            "constant" => WeightingSpec::constant(),
            "custom" => {
                let path =
                    self.psi.custom_file.as_deref().ok_or_else(|| {
                        CliError::Config("custom requires psi.custom_file".into())
                    })?;
                WeightingSpec::custom(&read_knots(path)?)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown weighting family `{other}`"
                )))
            }
        };
        Ok(spec)
    }

    /// The fit configuration for `t` rows, with the literal `T₂ − T₁`
    /// divisor resolved.
    pub fn fit_config(&self, t: usize) -> CliResult<FitConfig> {
        let mut fit = self.fit.clone();
        if self.literal_divisor {
            let (t1, t2) = split_sizes(t, fit.split_ratio)?;
            fit.nw_divisor = NwDivisor::Fixed(t2 as i64 - t1 as i64);
        }
        Ok(fit)
    }
}

fn strip_prefix(e: &CliError) -> String {
    match e {
        CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m.clone(),
    }
}

/// Reads (u, ψ(u)) knots; a non-numeric first row is taken as a header.
pub fn read_knots(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read knots {}: {e}", path.display())))?;
    let mut knots = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("knots {}: {e}", path.display())))?;
        if rec.len() != 2 {
            return Err(CliError::Config(format!(
                "knots line {}: expected two columns",
                i + 1
            )));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(u), Ok(v)) => knots.push((u, v)),
            _ if i == 0 => continue,
            _ => {
                return Err(CliError::Config(format!(
                    "knots line {}: non-numeric value",
                    i + 1
                )))
            }
        }
    }
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# header\npsi.family = upper\npsi.alpha = 0.1 # trailing\n\ncdf.leaf_candidates = 5, 10\nfit.nw_lag = auto\nsim.t = 500,1000\n",
        )
        .unwrap();
        assert_eq!(cfg.psi.family.as_deref(), Some("upper"));
        assert_eq!(cfg.fit.cdf.leaf_candidates, vec![5, 10]);
        assert_eq!(cfg.fit.nw_lag, None);
        assert_eq!(cfg.sim.t, vec![500, 1000]);
        assert_eq!(cfg.weighting().unwrap(), WeightingSpec::upper(0.1).unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("fit.bogus", "1"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            cfg.set("fit.crossfit", "maybe"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            cfg.apply_text("no equals sign"),
            Err(CliError::Config(_))
        ));
        let err = cfg.apply_text("\n\ncdf.n_trees = many").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn missing_family_parameters_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.weighting(), Err(CliError::Config(_))));
        cfg.set("psi.family", "middle").unwrap();
        assert!(matches!(cfg.weighting(), Err(CliError::Config(_))));
        cfg.set("psi.alpha", "0.7").unwrap();
        assert_eq!(cfg.weighting().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn divisor_keys() {
        let mut cfg = RunConfig::default();
        cfg.set("fit.nw_divisor", "T2-T1").unwrap();
        cfg.set("fit.split_ratio", "0.25").unwrap();
        assert_eq!(
            cfg.fit_config(100).unwrap().nw_divisor,
            NwDivisor::Fixed(50)
        );
        cfg.set("fit.nw_divisor", "t2").unwrap();
        assert_eq!(cfg.fit_config(100).unwrap().nw_divisor, NwDivisor::EvalSize);
    }
}
