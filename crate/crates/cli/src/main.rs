use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use waqr::comparator::{parametric_waqr, QuantileGrid};
use waqr::estimator::{confidence_intervals, waqr_crossfit, waqr_fit};
use waqr::exec::init_thread_pool;
use waqr::simulator::{psi_type, run_mc, SimConfig};
use waqr::Exec;

use waqr_cli::config::RunConfig;
use waqr_cli::ingest::{ingest_csv, Table};
use waqr_cli::report::{self, CompareReport, FitReport, Format, McRow};
use waqr_cli::rolling::run_rolling;
use waqr_cli::{CliError, CliResult};

/// Weighted-average quantile regression.
#[derive(Parser, Debug)]
#[command(name = "waqr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split-sample WAQR fit of a CSV file (optionally over rolling windows).
    Fit(RunArgs),
    /// Cross-fitted WAQR fit of a CSV file.
    Crossfit(RunArgs),
    /// Monte Carlo coverage and MAE over the `sim.*` cells.
    Simulate(RunArgs),
    /// WAQR next to the quantile-regression comparator on the same data.
    Compare(RunArgs),
    /// Tabulate ψ and Ψ on an equally spaced grid of u.
    PsiTable {
        #[command(flatten)]
        run: RunArgs,
        /// Number of grid points on [0, 1].
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Weighting family (upper, lower, middle, inequality, exponential,
    /// polynomial, welfare_exponential, constant, custom).
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "a")]
    a: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[arg(long)]
    rolling_window: Option<usize>,
    #[arg(long)]
    rolling_step: Option<usize>,
    /// Use the cross-fitted estimator.
    #[arg(long)]
    crossfit: bool,
    /// Dependent column.
    #[arg(long)]
    y: Option<String>,
    /// Regressor columns, comma separated.
    #[arg(long)]
    x: Option<String>,
    /// Time label column, echoed in rolling output.
    #[arg(long)]
    time: Option<String>,
    /// Do not prepend an intercept column.
    #[arg(long)]
    no_intercept: bool,
    /// Extra `key=value` assignments, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn format(&self) -> Format {
        match self.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }

    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let mut flag = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
        flag("psi.family", self.psi.clone())?;
        flag("psi.alpha", self.alpha.map(|v| v.to_string()))?;
        flag("psi.a", self.a.map(|v| v.to_string()))?;
        flag("fit.seed", self.seed.map(|v| v.to_string()))?;
        flag("sim.seed", self.seed.map(|v| v.to_string()))?;
        flag("rolling.window", self.rolling_window.map(|v| v.to_string()))?;
        flag("rolling.step", self.rolling_step.map(|v| v.to_string()))?;
        flag("data.y", self.y.clone())?;
        flag("data.x", self.x.clone())?;
        flag("data.time", self.time.clone())?;
        if self.crossfit {
            cfg.crossfit = true;
        }
        if self.no_intercept {
            cfg.add_intercept = false;
        }
        Ok(cfg)
    }

    fn table(&self, cfg: &RunConfig) -> CliResult<Table> {
        let path = self
            .input
            .as_deref()
            .ok_or_else(|| CliError::Config("--input is required".into()))?;
        ingest_csv(path, &cfg.data)
    }
}

fn fit_command(args: &RunArgs, mut cfg: RunConfig, force_crossfit: bool) -> CliResult<String> {
    cfg.crossfit |= force_crossfit;
    let w = cfg.weighting()?;
    let table = args.table(&cfg)?;
    let (data, names) = table.design(cfg.add_intercept);
    let fit_cfg = cfg.fit_config(data.nrows())?;

    if cfg.rolling_window.is_some() || cfg.rolling_step.is_some() {
        let window = cfg
            .rolling_window
            .ok_or_else(|| CliError::Config("rolling needs a window length".into()))?;
        let step = cfg.rolling_step.unwrap_or(1);
        let window_cfg = cfg.fit_config(window)?;
        let windows = run_rolling(&data, window, step, &w, &window_cfg, cfg.crossfit, cfg.seed)?;
        let time = table.time.as_deref();
        return match args.format() {
            Format::Csv => report::rolling_csv(&windows, &names, time),
            Format::Json => report::to_json(&serde_json::json!({
                "coefficients": names,
                "psi": w,
                "window": window,
                "step": step,
                "seed": cfg.seed,
                "windows": report::rolling_entries(&windows, time),
            })),
        };
    }

    let fit = if cfg.crossfit {
        waqr_crossfit(&data, &w, &fit_cfg, cfg.seed)?
    } else {
        waqr_fit(&data, &w, &fit_cfg, cfg.seed)?
    };
    let ci = confidence_intervals(&fit, cfg.level)?;
    let rep = FitReport::new(&fit, ci, cfg.level, &names, &w, cfg.seed);
    match args.format() {
        Format::Json => report::to_json(&rep),
        Format::Csv => report::fit_csv(&rep),
    }
}

fn compare_command(args: &RunArgs, cfg: RunConfig) -> CliResult<String> {
    let w = cfg.weighting()?;
    let table = args.table(&cfg)?;
    let (data, names) = table.design(cfg.add_intercept);
    let fit_cfg = cfg.fit_config(data.nrows())?;
    let fit = if cfg.crossfit {
        waqr_crossfit(&data, &w, &fit_cfg, cfg.seed)?
    } else {
        waqr_fit(&data, &w, &fit_cfg, cfg.seed)?
    };
    let grid = QuantileGrid::new(&w, cfg.cmp.grid_points, cfg.cmp.trunc_eps)?;
    let param = parametric_waqr(&data, &w, &grid, cfg.cmp.qr, Exec::default())?;
    let ci = confidence_intervals(&fit, cfg.level)?;
    let rep = CompareReport {
        waqr: FitReport::new(&fit, ci, cfg.level, &names, &w, cfg.seed),
        parametric: &param,
    };
    match args.format() {
        Format::Json => report::to_json(&rep),
        Format::Csv => report::compare_csv(&rep),
    }
}

fn simulate_command(args: &RunArgs, cfg: RunConfig) -> CliResult<String> {
    let s = &cfg.sim;
    let mut rows = Vec::new();
    for &k in &s.psi_type {
        for &dgp in &s.dgp {
            for &noise in &s.noise {
                for &p in &s.p {
                    for &beta1 in &s.beta1 {
                        for &t in &s.t {
                            for &est in &s.estimator {
                                let mut sim =
                                    SimConfig::standard(dgp, noise, p, beta1, t, psi_type(k)?)?;
                                sim.reps = s.reps;
                                sim.seed = s.seed;
                                sim.level = s.level;
                                sim.fit = cfg.fit_config(t)?;
                                eprintln!("waqr: simulating ψ-type {k}, {dgp:?}, {noise:?}, p = {p}, β̄₁ = {beta1}, T = {t}");
                                rows.push(McRow {
                                    psi_type: k,
                                    report: run_mc(&sim, est)?,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    match args.format() {
        Format::Json => report::to_json(&rows),
        Format::Csv => report::mc_csv(&rows),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Ok(v) = std::env::var("WAQR_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!(
                "WAQR_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        init_thread_pool(n);
    }
    let (args, out) = match &cli.command {
        Command::Fit(a) => (a, fit_command(a, a.resolve()?, false)?),
        Command::Crossfit(a) => (a, fit_command(a, a.resolve()?, true)?),
        Command::Simulate(a) => (a, simulate_command(a, a.resolve()?)?),
        Command::Compare(a) => (a, compare_command(a, a.resolve()?)?),
        Command::PsiTable { run, points } => {
            let cfg = run.resolve()?;
            let w = cfg.weighting()?;
            let table = report::psi_table(&w, *points);
            let out = match run.format() {
                Format::Json => report::to_json(&table)?,
                Format::Csv => report::psi_csv(&table)?,
            };
            (run, out)
        }
    };
    report::emit(args.output.as_deref(), &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("waqr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
