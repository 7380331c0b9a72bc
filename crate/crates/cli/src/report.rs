//! Report emission. JSON floats use serde_json's shortest round-trip form and
//! CSV floats use `f64`'s `Display`, which is also round-trip exact.

use std::fs;
use std::path::Path;

use serde::Serialize;
use waqr::comparator::ParametricFit;
use waqr::estimator::{Diagnostics, FitKind, FitResult, Interval};
use waqr::simulator::McReport;
use waqr::WeightingSpec;

use crate::rolling::WindowFit;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport<'a> {
    pub kind: FitKind,
    pub coefficients: &'a [String],
    pub beta_hat: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci: Vec<Interval>,
    pub level: f64,
    pub nw_lag: usize,
    pub split: (usize, usize),
    pub n_obs: usize,
    pub psi: &'a WeightingSpec,
    pub seed: u64,
    pub condition_number: f64,
    pub diagnostics: &'a Diagnostics,
}

impl<'a> FitReport<'a> {
    pub fn new(
        fit: &'a FitResult,
        ci: Vec<Interval>,
        level: f64,
        names: &'a [String],
        psi: &'a WeightingSpec,
        seed: u64,
    ) -> Self {
        Self {
            kind: fit.kind,
            coefficients: names,
            beta_hat: fit.beta_hat.iter().copied().collect(),
            std_errors: fit.std_errors.iter().copied().collect(),
            ci,
            level,
            nw_lag: fit.nw_lag,
            split: fit.split,
            n_obs: fit.n_obs,
            psi,
            seed,
            condition_number: fit.diagnostics.condition_number,
            diagnostics: &fit.diagnostics,
        }
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn fit_csv(report: &FitReport) -> CliResult<String> {
    let rows = (0..report.beta_hat.len()).map(|j| {
        vec![
            report.coefficients[j].clone(),
            report.beta_hat[j].to_string(),
            report.std_errors[j].to_string(),
            report.ci[j].lower.to_string(),
            report.ci[j].upper.to_string(),
        ]
    });
    csv_string(
        &["coefficient", "estimate", "se", "ci_lower", "ci_upper"],
        rows,
    )
}

pub const ROLLING_HEADER: [&str; 7] = [
    "window_start",
    "window_end",
    "time_end",
    "coefficient",
    "estimate",
    "se",
    "error",
];

/// Long format, one row per window and coefficient; windows are 1-based
/// inclusive row numbers. A failed window keeps its rows with empty
/// estimates and the error message.
pub fn rolling_csv(
    windows: &[WindowFit],
    names: &[String],
    time: Option<&[String]>,
) -> CliResult<String> {
    let mut rows = Vec::new();
    for win in windows {
        let time_end = time.map_or(String::new(), |t| t[win.end - 1].clone());
        for (j, name) in names.iter().enumerate() {
            let (est, se, err) = match &win.result {
                Ok(fit) => (
                    fit.beta_hat[j].to_string(),
                    fit.std_errors[j].to_string(),
                    String::new(),
                ),
                Err(e) => (String::new(), String::new(), e.clone()),
            };
            rows.push(vec![
                (win.start + 1).to_string(),
                win.end.to_string(),
                time_end.clone(),
                name.clone(),
                est,
                se,
                err,
            ]);
        }
    }
    csv_string(&ROLLING_HEADER, rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct RollingEntry<'a> {
    pub window_start: usize,
    pub window_end: usize,
    pub time_end: Option<&'a str>,
    pub beta_hat: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub nw_lag: Option<usize>,
    pub error: Option<&'a str>,
}

pub fn rolling_entries<'a>(
    windows: &'a [WindowFit],
    time: Option<&'a [String]>,
) -> Vec<RollingEntry<'a>> {
    windows
        .iter()
        .map(|win| {
            let fit = win.result.as_ref().ok();
            RollingEntry {
                window_start: win.start + 1,
                window_end: win.end,
                time_end: time.map(|t| t[win.end - 1].as_str()),
                beta_hat: fit.map(|f| f.beta_hat.iter().copied().collect()),
                std_errors: fit.map(|f| f.std_errors.iter().copied().collect()),
                nw_lag: fit.map(|f| f.nw_lag),
                error: win.result.as_ref().err().map(String::as_str),
            }
        })
        .collect()
}

/// A simulation cell with its ψ-type label.
#[derive(Debug, Clone, Serialize)]
pub struct McRow {
    pub psi_type: u8,
    #[serde(flatten)]
    pub report: McReport,
}

pub const MC_HEADER: [&str; 17] = [
    "psi_type",
    "psi",
    "dgp",
    "noise",
    "p",
    "t",
    "beta1_bar",
    "estimator",
    "level",
    "reps",
    "failed",
    "true_beta1",
    "coverage",
    "coverage_se",
    "mae",
    "mae_se",
    "mean_beta1",
];

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn mc_csv(rows: &[McRow]) -> CliResult<String> {
    let body = rows.iter().map(|r| {
        let m = &r.report;
        vec![
            r.psi_type.to_string(),
            m.psi.clone(),
            label(&m.dgp),
            label(&m.noise),
            m.p.to_string(),
            m.t.to_string(),
            m.beta1_bar.to_string(),
            label(&m.estimator),
            m.level.to_string(),
            m.reps.to_string(),
            m.failed.to_string(),
            m.true_beta1.to_string(),
            m.coverage.to_string(),
            m.coverage_se.to_string(),
            m.mae.to_string(),
            m.mae_se.to_string(),
            m.mean_beta1.to_string(),
        ]
    });
    csv_string(&MC_HEADER, body)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport<'a> {
    pub waqr: FitReport<'a>,
    pub parametric: &'a ParametricFit,
}

pub fn compare_csv(report: &CompareReport) -> CliResult<String> {
    let w = &report.waqr;
    let rows = (0..w.beta_hat.len()).map(|j| {
        vec![
            w.coefficients[j].clone(),
            w.beta_hat[j].to_string(),
            w.std_errors[j].to_string(),
            report.parametric.beta[j].to_string(),
        ]
    });
    csv_string(&["coefficient", "waqr", "waqr_se", "parametric"], rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiRow {
    pub u: f64,
    pub psi: f64,
    #[serde(rename = "Psi")]
    pub cum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiTable<'a> {
    pub psi: &'a WeightingSpec,
    pub total: f64,
    pub rows: Vec<PsiRow>,
}

pub fn psi_table(w: &WeightingSpec, points: usize) -> PsiTable<'_> {
    let n = points.max(2);
    let rows = (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            PsiRow {
                u,
                psi: w.psi(u),
                cum: w.Psi(u),
            }
        })
        .collect();
    PsiTable {
        psi: w,
        total: w.total(),
        rows,
    }
}

pub fn psi_csv(table: &PsiTable) -> CliResult<String> {
    let rows = table
        .rows
        .iter()
        .map(|r| vec![r.u.to_string(), r.psi.to_string(), r.cum.to_string()]);
    csv_string(&["u", "psi", "Psi"], rows)
}

/// Writes to `path`, or standard output when none is given.
pub fn emit(path: Option<&Path>, content: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
