//! Command-line surface: `fit`, `path`, `simulate` and `bound`.
//!
//! Every report starts with a metadata record (tool version, generator,
//! seed and the fully resolved configuration) so that a run can be
//! reproduced from its output alone.

mod csv;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

pub use self::csv::{
    fmt_f64, load_csv_matrix, load_csv_vector, parse_csv_matrix, write_csv_matrix,
};
use crate::bounds::{bound_report, BoundInputs};
use crate::crossval::{budget_grid, cv_lasso, CvOptions, DEFAULT_DELTA, DEFAULT_RIDGE_SCALE};
use crate::error::Error;
use crate::matrix::l1_norm;
use crate::simlab::{Scenario, Simulation, SimulationReport, REPLICATE_GENERATOR};
use crate::solver::{fit_path, SolverConfig};

pub const TOOL: &str = "cvlasso";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "cvlasso",
    version,
    about = "Cross-validated l1-constrained least squares"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validated fit, coefficient estimate and error variance.
    Fit(FitArgs),
    /// Constrained fits along a budget grid.
    Path(PathArgs),
    /// Monte Carlo check of the risk bounds on a scenario file.
    Simulate(SimulateArgs),
    /// Evaluate the closed-form risk bounds.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    #[value(name = "jsonl", alias = "json-lines")]
    #[serde(rename = "jsonl")]
    JsonLines,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Design matrix CSV (n rows, p columns).
    #[arg(long)]
    pub design: PathBuf,
    /// Response CSV (n rows, one column).
    #[arg(long)]
    pub response: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    /// Abort with exit status 4 if any solve fails to converge.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::JsonLines)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Fixed N1 instead of the ridge rule.
    #[arg(long)]
    pub n1: Option<usize>,
    /// Fixed N2 instead of the ridge rule.
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Explicit comma-separated budgets, strictly increasing.
    #[arg(long, value_delimiter = ',', conflicts_with = "steps")]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Grid {0, delta, ..., steps * delta} when no explicit grid is given.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub strict: bool,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub sigma: f64,
    /// |beta*|_1
    #[arg(long)]
    pub l_star: f64,
    #[arg(long)]
    pub delta: f64,
    /// Design fourth-moment statistic M.
    #[arg(long)]
    pub m: f64,
    /// E log(N1 + 1)
    #[arg(long)]
    pub l1: f64,
    /// E log(N2 + 1)
    #[arg(long)]
    pub l2: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Fully resolved settings for one invocation, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub design: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub delta: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub seed: Option<u64>,
    pub solver: Option<SolverConfig>,
    pub strict: bool,
    pub out: Option<PathBuf>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_inputs: Option<BoundInputs>,
}

impl RunConfig {
    fn new(command: &str, output: &OutputArgs) -> Self {
        RunConfig {
            command: command.to_string(),
            design: None,
            response: None,
            scenario: None,
            delta: None,
            n1: None,
            n2: None,
            seed: None,
            solver: None,
            strict: false,
            out: output.out.clone(),
            format: output.format,
            grid: None,
            bound_inputs: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let data = self.design.is_some() || self.response.is_some();
        let scenario = self.scenario.is_some();
        let needs_input = self.command != "bound";
        if needs_input && data == scenario {
            return Err(CliError::usage(
                "exactly one of --design/--response or --scenario is required",
            ));
        }
        if data && (self.design.is_none() || self.response.is_none()) {
            return Err(CliError::usage(
                "--design and --response must be given together",
            ));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) || !d.is_finite() {
                return Err(CliError::usage(format!(
                    "--delta must be positive, got {d}"
                )));
            }
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| CliError::usage(e.to_string()))?;
        }
        Ok(())
    }
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Path(a) => cmd_path(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Bound(a) => cmd_bound(&a),
    }
}

fn solver_config(args: &SolverArgs) -> SolverConfig {
    SolverConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    }
}

fn load_data(data: &DataArgs) -> Result<(crate::DesignMatrix, Vec<f64>), CliError> {
    let x = load_csv_matrix(&data.design)?;
    let y = load_csv_vector(&data.response)?;
    if y.len() != x.nrows() {
        return Err(Error::invalid(format!(
            "design has {} rows but response has {} values",
            x.nrows(),
            y.len()
        ))
        .into());
    }
    Ok((x, y))
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let solver = solver_config(&args.solver);
    let config = RunConfig {
        design: Some(args.data.design.clone()),
        response: Some(args.data.response.clone()),
        delta: Some(args.delta),
        n1: args.n1,
        n2: args.n2,
        seed: Some(args.seed),
        solver: Some(solver),
        strict: args.solver.strict,
        ..RunConfig::new("fit", &args.output)
    };
    config.validate()?;
    let (x, y) = load_data(&args.data)?;

    let est = cv_lasso(
        &x,
        &y,
        &CvOptions {
            delta: args.delta,
            seed: args.seed,
            n1: args.n1,
            n2: args.n2,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            solver,
        },
    )?;
    if !est.diagnostics.all_converged() {
        let msg = format!(
            "{} solve(s) did not converge within {} iterations",
            est.diagnostics.nonconverged_fits, solver.max_iter
        );
        if config.strict {
            return Err(CliError::numerical(msg));
        }
        eprintln!("{TOOL}: warning: {msg}");
    }

    let meta = meta_record(&config, Some(&est.generator), Some(est.seed));
    let mut out = open_output(&config)?;
    match config.format {
        Format::JsonLines => {
            write_json_line(&mut out, &meta)?;
            let rec = json!({
                "record": "estimate",
                "k_hat": est.k_hat,
                "k_hat_1": est.k_hat_1,
                "k_hat_2": est.k_hat_2,
                "sigma2_hat": est.sigma2_hat,
                "n1": est.grid.n1,
                "n2": est.grid.n2,
                "delta": est.grid.delta,
                "seed": est.seed,
                "generator": est.generator,
                "beta_cv": est.beta_cv,
                "converged": est.diagnostics.all_converged(),
                "solver_iterations": est.diagnostics.solver_iterations,
            });
            write_json_line(&mut out, &rec)?;
        }
        Format::Csv => {
            write_csv_meta(&mut out, &meta)?;
            let mut header = vec![
                "k_hat",
                "k_hat_1",
                "k_hat_2",
                "sigma2_hat",
                "n1",
                "n2",
                "delta",
                "seed",
            ]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
            header.extend((1..=x.ncols()).map(|j| format!("beta_{j}")));
            let mut row = vec![
                fmt_f64(est.k_hat),
                fmt_f64(est.k_hat_1),
                fmt_f64(est.k_hat_2),
                est.sigma2_hat.map(fmt_f64).unwrap_or_default(),
                est.grid.n1.to_string(),
                est.grid.n2.to_string(),
                fmt_f64(est.grid.delta),
                est.seed.to_string(),
            ];
            row.extend(est.beta_cv.iter().copied().map(fmt_f64));
            write_csv_row(&mut out, &header)?;
            write_csv_row(&mut out, &row)?;
        }
    }
    finish(out)
}

pub fn cmd_path(args: &PathArgs) -> Result<(), CliError> {
    let solver = solver_config(&args.solver);
    let grid = match &args.grid {
        Some(g) => g.clone(),
        None => {
            if !(args.delta > 0.0) {
                return Err(CliError::usage("--delta must be positive"));
            }
            budget_grid(args.delta, args.steps)
        }
    };
    let config = RunConfig {
        design: Some(args.data.design.clone()),
        response: Some(args.data.response.clone()),
        delta: args.grid.is_none().then_some(args.delta),
        solver: Some(solver),
        strict: args.solver.strict,
        grid: Some(grid.clone()),
        ..RunConfig::new("path", &args.output)
    };
    config.validate()?;
    let (x, y) = load_data(&args.data)?;
    let path = fit_path(&x, &y, &grid, &solver).map_err(|e| match e {
        Error::InvalidArgument(m) if m.contains("grid") => CliError::usage(m),
        other => other.into(),
    })?;

    let bad = path.fits.iter().filter(|f| !f.converged).count();
    if bad > 0 {
        let msg = format!(
            "{bad} solve(s) did not converge within {} iterations",
            solver.max_iter
        );
        if config.strict {
            return Err(CliError::numerical(msg));
        }
        eprintln!("{TOOL}: warning: {msg}");
    }

    let meta = meta_record(&config, None, None);
    let mut out = open_output(&config)?;
    match config.format {
        Format::JsonLines => {
            write_json_line(&mut out, &meta)?;
            for f in &path.fits {
                let rec = json!({
                    "record": "fit",
                    "k": f.k,
                    "l1_norm": l1_norm(&f.beta),
                    "residual_ss": f.residual_ss,
                    "iterations": f.iterations,
                    "converged": f.converged,
                    "beta": f.beta,
                });
                write_json_line(&mut out, &rec)?;
            }
        }
        Format::Csv => {
            write_csv_meta(&mut out, &meta)?;
            let mut header: Vec<String> =
                ["k", "l1_norm", "residual_ss", "iterations", "converged"]
                    .into_iter()
                    .map(String::from)
                    .collect();
            header.extend((1..=x.ncols()).map(|j| format!("beta_{j}")));
            write_csv_row(&mut out, &header)?;
            for f in &path.fits {
                let mut row = vec![
                    fmt_f64(f.k),
                    fmt_f64(l1_norm(&f.beta)),
                    fmt_f64(f.residual_ss),
                    f.iterations.to_string(),
                    u8::from(f.converged).to_string(),
                ];
                row.extend(f.beta.iter().copied().map(fmt_f64));
                write_csv_row(&mut out, &row)?;
            }
        }
    }
    finish(out)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|source| Error::Io {
        path: args.scenario.clone(),
        source,
    })?;
    let mut scenario: Scenario = serde_json::from_str(&text).map_err(Error::from)?;
    if let Some(r) = args.reps {
        scenario.replications = r;
    }
    if let Some(s) = args.seed {
        scenario.master_seed = s;
    }
    if let Some(d) = args.delta {
        scenario.delta = d;
    }
    if args.n1.is_some() {
        scenario.n1 = args.n1;
    }
    if args.n2.is_some() {
        scenario.n2 = args.n2;
    }
    if let Some(t) = args.tol {
        scenario.solver.tol = t;
    }
    if let Some(m) = args.max_iter {
        scenario.solver.max_iter = m;
    }
    // relative design paths are taken relative to the scenario file
    if let (Some(p), Some(dir)) = (&scenario.design_path, args.scenario.parent()) {
        if p.is_relative() {
            scenario.design_path = Some(dir.join(p));
        }
    }

    let config = RunConfig {
        scenario: Some(args.scenario.clone()),
        delta: Some(scenario.delta),
        n1: scenario.n1,
        n2: scenario.n2,
        seed: Some(scenario.master_seed),
        solver: Some(scenario.solver),
        strict: args.strict,
        ..RunConfig::new("simulate", &args.output)
    };
    config.validate()?;

    let sim = Simulation::new(scenario)?;
    let report = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| CliError::usage(e.to_string()))?
            .install(|| sim.run())?,
        None => sim.run()?,
    };
    if report.aggregates.nonconverged_replicates > 0 && config.strict {
        return Err(CliError::numerical(format!(
            "{} replicate(s) contain non-converged solves",
            report.aggregates.nonconverged_replicates
        )));
    }
    for w in &report.warnings {
        eprintln!("{TOOL}: warning: {w}");
    }

    let meta = meta_record(
        &config,
        Some(REPLICATE_GENERATOR),
        Some(sim.scenario().master_seed),
    );
    let mut out = open_output(&config)?;
    write_simulation(&mut out, &meta, &report, config.format)?;
    finish(out)
}

fn write_simulation(
    out: &mut dyn Write,
    meta: &Value,
    report: &SimulationReport,
    format: Format,
) -> Result<(), CliError> {
    let summary = json!({
        "record": "summary",
        "scenario": report.scenario,
        "aggregates": report.aggregates,
        "bound_inputs": report.bound_inputs,
        "bound_report": report.bound_report,
        "domination": report.domination,
        "warnings": report.warnings,
    });
    match format {
        Format::JsonLines => {
            write_json_line(out, meta)?;
            for r in &report.records {
                let mut v = serde_json::to_value(r).map_err(Error::from)?;
                v.as_object_mut()
                    .expect("record serializes to an object")
                    .insert("record".into(), json!("replicate"));
                write_json_line(out, &v)?;
            }
            write_json_line(out, &summary)?;
        }
        Format::Csv => {
            write_csv_meta(out, meta)?;
            writeln!(out, "# summary={summary}").map_err(io_err)?;
            let header: Vec<String> = [
                "index",
                "event",
                "mspe",
                "sigma2_hat",
                "n1",
                "n2",
                "k_hat_1",
                "k_hat_2",
                "k_hat",
                "m_stat",
                "converged",
            ]
            .into_iter()
            .map(String::from)
            .collect();
            write_csv_row(out, &header)?;
            for r in &report.records {
                let row = vec![
                    r.index.to_string(),
                    u8::from(r.event).to_string(),
                    fmt_f64(r.mspe),
                    fmt_f64(r.sigma2_hat),
                    r.n1.to_string(),
                    r.n2.to_string(),
                    fmt_f64(r.k_hat_1),
                    fmt_f64(r.k_hat_2),
                    fmt_f64(r.k_hat),
                    fmt_f64(r.m_stat),
                    u8::from(r.converged).to_string(),
                ];
                write_csv_row(out, &row)?;
            }
        }
    }
    Ok(())
}

pub fn cmd_bound(args: &BoundArgs) -> Result<(), CliError> {
    let inputs = BoundInputs {
        n: args.n,
        p: args.p,
        sigma: args.sigma,
        l_star: args.l_star,
        delta: args.delta,
        m_stat: args.m,
        l1: args.l1,
        l2: args.l2,
    };
    let config = RunConfig {
        bound_inputs: Some(inputs),
        ..RunConfig::new("bound", &args.output)
    };
    config.validate()?;
    let rep = bound_report(&inputs).map_err(|e| CliError::usage(e.to_string()))?;

    let meta = meta_record(&config, None, None);
    let mut out = open_output(&config)?;
    match config.format {
        Format::JsonLines => {
            write_json_line(&mut out, &meta)?;
            let mut v = serde_json::to_value(rep).map_err(Error::from)?;
            v.as_object_mut()
                .expect("report serializes to an object")
                .insert("record".into(), json!("bound"));
            write_json_line(&mut out, &v)?;
        }
        Format::Csv => {
            write_csv_meta(&mut out, &meta)?;
            let header: Vec<String> = ["big_l", "c1", "c2", "e_n", "r", "sigma_bound"]
                .into_iter()
                .map(String::from)
                .collect();
            write_csv_row(&mut out, &header)?;
            let row = [rep.big_l, rep.c1, rep.c2, rep.e_n, rep.r, rep.sigma_bound]
                .into_iter()
                .map(fmt_f64)
                .collect::<Vec<_>>();
            write_csv_row(&mut out, &row)?;
        }
    }
    finish(out)
}

fn meta_record(config: &RunConfig, generator: Option<&str>, seed: Option<u64>) -> Value {
    json!({
        "record": "meta",
        "tool": TOOL,
        "version": VERSION,
        "generator": generator,
        "seed": seed,
        "config": config,
    })
}

fn io_err(e: io::Error) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: format!("write failed: {e}"),
    }
}

fn open_output(config: &RunConfig) -> Result<Box<dyn Write>, CliError> {
    Ok(match &config.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            CliError::from(Error::Io {
                path: p.clone(),
                source,
            })
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut out: Box<dyn Write>) -> Result<(), CliError> {
    out.flush().map_err(io_err)
}

fn write_json_line(out: &mut dyn Write, v: &Value) -> Result<(), CliError> {
    writeln!(out, "{v}").map_err(io_err)
}

fn write_csv_meta(out: &mut dyn Write, meta: &Value) -> Result<(), CliError> {
    let get = |k: &str| meta.get(k).cloned().unwrap_or(Value::Null);
    writeln!(out, "# tool={}", TOOL).map_err(io_err)?;
    writeln!(out, "# version={}", VERSION).map_err(io_err)?;
    writeln!(out, "# generator={}", get("generator")).map_err(io_err)?;
    writeln!(out, "# seed={}", get("seed")).map_err(io_err)?;
    writeln!(out, "# config={}", get("config")).map_err(io_err)
}

fn write_csv_row(out: &mut dyn Write, cells: &[String]) -> Result<(), CliError> {
    writeln!(out, "{}", cells.join(",")).map_err(io_err)
}
