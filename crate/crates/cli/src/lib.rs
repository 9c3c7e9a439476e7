//! Command-line front end: `fit`, `path`, `simulate` and `generate`.
//!
//! Exit codes: 0 success, 1 pipeline error (a JSON error object is printed
//! on stderr), 2 usage error.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;
use trajfuse::bspline::KnotRule;
use trajfuse::data::{load_csv, save_csv, CsvColumns, LongitudinalDataset};
use trajfuse::export::{
    write_fit_artifacts, write_iterations, write_path, write_trace, FitSummary,
};
use trajfuse::inference::SandwichMode;
use trajfuse::path::GridSpacing;
use trajfuse::pipeline::{fit, fit_path};
use trajfuse::simulate::{
    generate, replication_rng, run_replications, GroupAssignment, Separation,
};

pub use config::{CriterionKind, RunConfig};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "TRAJFUSE_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] trajfuse::Error),
    #[error("config file {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Pipeline(e) => e.kind(),
            CliError::ConfigFile { .. } | CliError::Config(_) => "config",
            CliError::Read { .. } | CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "trajfuse",
    version,
    about = "Subgroup identification for longitudinal trajectories"
)]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short = 'o', global = true, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Seed echoed into outputs and used by simulations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: physical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the full pipeline and write membership, curves, path and summary.
    Fit(FitArgs),
    /// Solve the lambda path only and write path.csv and trace.csv.
    Path(FitArgs),
    /// Run replicated simulations and write report.csv and aggregate.json.
    Simulate(SimArgs),
    /// Write one simulated dataset (and its true membership) as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Input CSV with id, time and value columns.
    #[arg(long, short = 'i')]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub id_column: Option<String>,
    #[arg(long)]
    pub time_column: Option<String>,
    #[arg(long)]
    pub value_column: Option<String>,
    /// Z-score responses before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Drop subjects with fewer visits.
    #[arg(long)]
    pub min_visits: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Spline, penalty, path, solver, selection and inference settings.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Spline order (degree + 1).
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub interior_knots: Option<usize>,
    /// equally-spaced or quantile.
    #[arg(long, value_parser = kebab::<KnotRule>)]
    pub knot_rule: Option<KnotRule>,
    /// Spline domain as `a,b`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub domain: Option<Vec<f64>>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// log or linear.
    #[arg(long, value_parser = kebab::<GridSpacing>)]
    pub spacing: Option<GridSpacing>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Stop ADMM on the primal residual alone.
    #[arg(long)]
    pub primal_only: bool,
    /// Write per-iteration ADMM residuals to iterations.csv.
    #[arg(long)]
    pub trace_iterations: bool,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionKind>,
    #[arg(long)]
    pub bic_c: Option<f64>,
    /// Group count for `--criterion known-k`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// robust or model-based.
    #[arg(long, value_parser = kebab::<SandwichMode>)]
    pub sandwich: Option<SandwichMode>,
    #[arg(long)]
    pub band_points: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub groups: Option<usize>,
    /// close, middle or far.
    #[arg(long = "sep", value_parser = kebab::<Separation>)]
    pub separation: Option<Separation>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Occasions per subject.
    #[arg(long = "t")]
    pub t_points: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Let half the subjects miss 30-50% of occasions.
    #[arg(long)]
    pub unbalanced: bool,
    /// round-robin or contiguous.
    #[arg(long, value_parser = kebab::<GroupAssignment>)]
    pub assignment: Option<GroupAssignment>,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Grid size for curve RMSE.
    #[arg(long)]
    pub rmse_points: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args, Default)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Replication index whose random stream is used.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.spline.order, self.order);
        set(&mut cfg.spline.interior_knots, self.interior_knots);
        set(&mut cfg.spline.knot_rule, self.knot_rule);
        if let Some(d) = &self.domain {
            cfg.spline.domain = Some([d[0], d[1]]);
        }
        set(&mut cfg.penalty.tau, self.tau);
        set(&mut cfg.penalty.theta, self.theta);
        set(&mut cfg.path.lambda_min, self.lambda_min);
        set(&mut cfg.path.lambda_max, self.lambda_max);
        set(&mut cfg.path.grid_size, self.grid_size);
        set(&mut cfg.path.spacing, self.spacing);
        if self.tolerance.is_some() {
            cfg.admm.tolerance = self.tolerance;
        }
        set(&mut cfg.admm.max_iterations, self.max_iterations);
        cfg.admm.primal_only |= self.primal_only;
        cfg.admm.record_trace |= self.trace_iterations;
        set(&mut cfg.selection.criterion, self.criterion);
        if self.bic_c.is_some() {
            cfg.selection.bic_c = self.bic_c;
        }
        if self.k.is_some() {
            cfg.selection.k = self.k;
        }
        set(&mut cfg.inference.level, self.level);
        set(&mut cfg.inference.sandwich, self.sandwich);
        set(&mut cfg.inference.band_points, self.band_points);
    }
}

impl FitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.input.is_some() {
            cfg.data.input = self.input.clone();
        }
        set(&mut cfg.data.id_column, self.id_column.clone());
        set(&mut cfg.data.time_column, self.time_column.clone());
        set(&mut cfg.data.value_column, self.value_column.clone());
        cfg.data.standardize |= self.standardize;
        set(&mut cfg.data.min_visits, self.min_visits);
        self.model.apply(cfg);
    }
}

impl ScenarioArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.simulate;
        set(&mut s.groups, self.groups);
        set(&mut s.separation, self.separation);
        set(&mut s.n, self.n);
        set(&mut s.t_points, self.t_points);
        set(&mut s.sigma, self.sigma);
        set(&mut s.rho, self.rho);
        if self.unbalanced {
            s.balanced = false;
        }
        set(&mut s.assignment, self.assignment);
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                    path: path.clone(),
                    source,
                })?;
                RunConfig::from_toml(&text).map_err(|source| CliError::ConfigFile {
                    path: path.clone(),
                    source,
                })?
            }
            None => RunConfig::default(),
        };
        set(&mut cfg.output.dir, self.out_dir.clone());
        set(&mut cfg.output.seed, self.seed);
        if self.threads.is_some() {
            cfg.output.threads = self.threads;
        }
        match &self.command {
            Command::Fit(a) | Command::Path(a) => a.apply(&mut cfg),
            Command::Simulate(a) => {
                a.scenario.apply(&mut cfg);
                a.model.apply(&mut cfg);
                set(&mut cfg.simulate.reps, a.reps);
                set(&mut cfg.simulate.rmse_points, a.rmse_points);
            }
            Command::Generate(a) => a.scenario.apply(&mut cfg),
        }
        Ok(cfg)
    }
}

fn load_input(cfg: &RunConfig) -> Result<LongitudinalDataset<f64>, CliError> {
    let path =
        cfg.data.input.as_ref().ok_or_else(|| {
            CliError::Config("no input CSV given (--input or [data] input)".into())
        })?;
    let columns = CsvColumns {
        id: cfg.data.id_column.clone(),
        time: cfg.data.time_column.clone(),
        value: cfg.data.value_column.clone(),
    };
    let mut ds = load_csv(path, &columns).map_err(|e| match e {
        trajfuse::Error::Io(source) => CliError::Read {
            path: path.clone(),
            source,
        },
        other => other.into(),
    })?;
    if cfg.data.min_visits > 0 {
        ds = ds.filter_min_visits(cfg.data.min_visits)?;
    }
    Ok(ds)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitSummary, CliError> {
    let raw = load_input(cfg)?;
    let (ds, standardization) = if cfg.data.standardize {
        let (z, rec) = raw.standardize()?;
        (z, Some(rec))
    } else {
        (raw, None)
    };
    let fit_cfg = cfg.data_fit_config();
    let out = fit(&ds, &fit_cfg)?;
    let echo = json!({
        "run": cfg,
        "standardization": standardization.map(|r| json!({ "mean": r.mean, "sd": r.sd })),
    });
    let summary = FitSummary::new(&out, &ds, Some(cfg.output.seed), echo)?;
    let dir = &cfg.output.dir;
    write_fit_artifacts(dir, &out, &ds, &summary)?;
    if cfg.admm.record_trace {
        write_iterations(&out.path.points, File::create(dir.join("iterations.csv"))?)?;
    }
    log::info!("K_hat = {} at lambda = {}", summary.k_hat, summary.lambda);
    Ok(summary)
}

pub fn cmd_path(cfg: &RunConfig) -> Result<usize, CliError> {
    let ds = load_input(cfg)?;
    let ds = if cfg.data.standardize {
        ds.standardize()?.0
    } else {
        ds
    };
    let out = fit_path(&ds, &cfg.data_fit_config())?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    write_path(
        &out.points,
        &out.scores,
        File::create(dir.join("path.csv"))?,
    )?;
    write_trace(&ds, &out.points, File::create(dir.join("trace.csv"))?)?;
    if cfg.admm.record_trace {
        write_iterations(&out.points, File::create(dir.join("iterations.csv"))?)?;
    }
    Ok(out.points.len())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<trajfuse::simulate::ReplicationReport, CliError> {
    let scenario = cfg.scenario();
    let report = run_replications(
        &scenario,
        cfg.simulate.reps,
        &cfg.simulation_fit_config(),
        cfg.simulate.rmse_points,
    )?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    report.save_csv(dir.join("report.csv"))?;
    let mut agg = report.aggregate_json();
    agg["config"] = serde_json::to_value(cfg)?;
    write_json(&dir.join("aggregate.json"), &agg)?;
    log::info!(
        "per = {} over {} replications",
        report.aggregate.per,
        report.aggregate.replications
    );
    Ok(report)
}

pub fn cmd_generate(cfg: &RunConfig, rep: usize) -> Result<(), CliError> {
    let scenario = cfg.scenario();
    let sim = generate(&scenario, &mut replication_rng(scenario.seed, rep))?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    save_csv(&sim.dataset, dir.join("data.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("truth.csv")).map_err(trajfuse::Error::from)?;
    w.write_record(["id", "group"])
        .map_err(trajfuse::Error::from)?;
    for (s, g) in sim.dataset.subjects().iter().zip(&sim.membership) {
        w.write_record([s.id.as_str(), &g.to_string()])
            .map_err(trajfuse::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn init_threads(requested: Option<usize>) {
    let n = requested.unwrap_or_else(num_cpus::get_physical).max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
    {
        log::debug!("thread pool already initialised: {e}");
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    init_threads(cfg.output.threads);
    match &cli.command {
        Command::Fit(_) => cmd_fit(&cfg).map(|_| ()),
        Command::Path(_) => cmd_path(&cfg).map(|_| ()),
        Command::Simulate(_) => cmd_simulate(&cfg).map(|_| ()),
        Command::Generate(a) => cmd_generate(&cfg, a.rep),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
