//! Command-line front end: one subcommand per analysis, JSON config in,
//! CSV and JSON artifacts out.
//!
//! Exit codes: 0 success, 2 bad config or input, 3 solver failure,
//! 4 verification failure (a monitored bound violated beyond tolerance),
//! 1 I/O error. Failures print a one-line JSON record on stderr.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{self, Experiment, SweepRow};
use crate::model::{validate, Parameters, State};
use crate::nondim;
use crate::spectral::{self, PowerOptions, SpectralError};
use crate::steady;
use crate::timestep::{self, monitor_bounds};

pub use config::{parse_config, ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Integrate the system and write snapshots.
    Simulate,
    /// Clearance state and a multi-start Newton search.
    Steady,
    /// Principal eigenvalue of the linearization at the clearance state.
    Spectrum,
    /// Stability classification of the clearance state.
    Classify,
    /// Scaling constants and dimensionless groups.
    Nondim,
    /// Check a finished simulation directory against the convergence bounds.
    Verify,
    /// Repeat an experiment over values of one parameter.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Steady => "steady",
            Command::Spectrum => "spectrum",
            Command::Classify => "classify",
            Command::Nondim => "nondim",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "viral-rd",
    version,
    about = "Reaction-diffusion viral dynamics toolkit"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
    /// Seed for random initializations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub quiet: bool,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Input(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Verification(_) => "verification",
            CliError::Io(_) => "io",
        }
    }

    pub fn record(&self, command: Option<Command>) -> Value {
        json!({
            "error": self.kind(),
            "command": command.map(Command::name),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn solver<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Solver(e.to_string())
}

/// What a successful (or verification-failed) run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub command: Command,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Contents of `summary.json` minus the metadata block.
    pub result: Value,
}

struct Sink {
    dir: PathBuf,
    files: Vec<PathBuf>,
    csv: bool,
    json: bool,
}

impl Sink {
    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, body: impl FnOnce() -> String) -> Result<(), CliError> {
        if self.csv {
            self.write(name, &body())?;
        }
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        if self.json {
            self.write(name, &pretty(value))?;
        }
        Ok(())
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

/// Runs one subcommand and writes its artifacts. Verification failures
/// still write everything before returning the error.
pub fn run_subcommand(
    command: Command,
    config: &RunConfig,
    opts: &RunOptions,
) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    config.validate()?;
    let dir = opts
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut sink = Sink {
        dir: dir.clone(),
        files: Vec::new(),
        csv: config.output.csv(),
        json: config.output.json(),
    };
    let params = config.parameters()?;

    let outcome = match command {
        Command::Simulate => simulate(config, &params, &mut sink),
        Command::Steady => steady_search(config, &params, opts.seed, &mut sink),
        Command::Spectrum => spectrum(&params, &mut sink),
        Command::Classify => classify(&params).map(|r| (r, None)),
        Command::Nondim => nondim_groups(&params, &mut sink).map(|r| (r, None)),
        Command::Verify => verify(config, &params, &dir),
        Command::Sweep => sweep(config, &params, opts.seed, &mut sink).map(|r| (r, None)),
    };
    let (result, failure) = match outcome {
        Ok(pair) => pair,
        Err(Aborted {
            result: Some(result),
            error,
        }) => (result, Some(error)),
        Err(Aborted {
            result: None,
            error,
        }) => return Err(error),
    };

    let summary = json!({
        "command": command.name(),
        "grid": config.grid,
        "params": config.params,
        "result": result,
        "status": failure.as_ref().map_or("ok", CliError::kind),
        "metadata": {
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
            "seed": opts.seed,
        },
    });
    sink.write("summary.json", &pretty(&summary))?;
    if !opts.quiet {
        eprintln!(
            "{}: wrote {} files to {}",
            command.name(),
            sink.files.len(),
            dir.display()
        );
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(RunSummary {
            command,
            dir,
            files: sink.files,
            result,
        }),
    }
}

/// A failure that may still carry a partial result worth writing.
struct Aborted {
    result: Option<Value>,
    error: CliError,
}

impl<E: Into<CliError>> From<E> for Aborted {
    fn from(e: E) -> Self {
        Aborted {
            result: None,
            error: e.into(),
        }
    }
}

type Outcome = Result<(Value, Option<CliError>), Aborted>;

fn simulate(config: &RunConfig, params: &Parameters, sink: &mut Sink) -> Outcome {
    let init = config.initial(params)?;
    let report = validate(params, &init);
    if !report.is_admissible() && !report.only_initial_positivity() {
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(CliError::Input(msgs.join("; ")).into());
    }
    let stepper = config.stepper_config(params);
    let (traj, failure) = match timestep::simulate(&init, params, &stepper) {
        Ok(t) => (t, None),
        Err(e) => {
            let msg = e.to_string();
            (*e.partial, Some(CliError::Solver(msg)))
        }
    };
    if sink.csv {
        let files = output::write_trajectory(&sink.dir, &traj).map_err(io_err(&sink.dir))?;
        sink.files.extend(files);
    }
    let monitors = monitor_bounds(&traj, params, stepper.monitors, config.stepper.tol_band);
    let result = json!({
        "scheme": stepper.scheme,
        "dt": stepper.dt,
        "t_end": stepper.t_end,
        "steps": traj.monitor_log.len(),
        "snapshots": traj.snapshots.len(),
        "final_time": traj.last().time,
        "min_value": traj.min_value(),
        "monitors": {
            "passed": monitors.passed(),
            "report": monitors,
        },
    });
    let failure = failure.or_else(|| {
        (!monitors.passed()).then(|| {
            CliError::Verification(format!(
                "{} monitored bound violations",
                monitors.violations.len()
            ))
        })
    });
    Ok((result, failure))
}

fn steady_search(config: &RunConfig, params: &Parameters, seed: u64, sink: &mut Sink) -> Outcome {
    let grid = params.grid().clone();
    let clear = steady::clearance_state(params).map_err(solver)?;
    let ops = crate::model::Laplacians::new(&grid, params);
    let clearance_residual = steady::steady_residual(&clear, params, &ops).map_err(solver)?;
    let t_inf = &clear.target;
    let r0 = spectral::compute_r0_field(t_inf, params);
    sink.csv("steady.csv", || {
        output::node_table(&grid, &[("T_inf", t_inf.values()), ("R0", r0.values())])
    })?;

    let spec = config.steady.clone().unwrap_or_default();
    let (sc, _) = nondim::nondimensionalize(params).map_err(solver)?;
    let scales = [t_inf.sup_norm(), sc.i_cells, sc.v_cells];
    let report = steady::multi_start(params, scales, spec.starts, seed, spec.newton());
    let starts: Vec<Value> = report
        .outcomes
        .iter()
        .map(|o| match o {
            Ok(o) => json!({
                "iterations": o.iterations,
                "residual": o.residual,
                "nonnegative": o.nonnegative,
                "distance_to_clearance": o.state.sup_distance(&clear),
                "infected_sup": o.state.infected.sup_norm(),
            }),
            Err(e) => json!({ "error": e.to_string() }),
        })
        .collect();
    let result = json!({
        "t_inf_sup": t_inf.sup_norm(),
        "t_inf_min": t_inf.min(),
        "t_inf_upper_bound": params.lambda.sup_norm() / params.mu_t,
        "clearance_residual": clearance_residual,
        "R0_sup": r0.sup_norm(),
        "newton": {
            "starts": spec.starts,
            "converged": report.outcomes.iter().filter(|o| o.is_ok()).count(),
            "nonnegative_limits": report.nonnegative_limits().count(),
            "max_distance_to_clearance": report.max_distance_to(&clear),
            "runs": starts,
        },
    });
    sink.json("steady.json", &result)?;
    Ok((result, None))
}

fn spectrum(params: &Parameters, sink: &mut Sink) -> Outcome {
    let grid = params.grid().clone();
    let t_inf = steady::solve_t_infinity(params, &grid).map_err(solver)?;
    let op = spectral::assemble_linearized(params, &t_inf, &grid).map_err(solver)?;
    let (spec, failure) = match spectral::principal_eigenvalue(&op, PowerOptions::default()) {
        Ok(s) => (s, None),
        Err(SpectralError::NotConverged(best)) => {
            let msg = format!(
                "power iteration did not converge; residual {}",
                best.residual
            );
            (*best, Some(CliError::Solver(msg)))
        }
        Err(e) => return Err(solver(e).into()),
    };
    sink.csv("eigenvector.csv", || {
        output::node_table(
            &grid,
            &[
                ("phi_I", spec.infected_part()),
                ("phi_V", spec.virion_part()),
            ],
        )
    })?;
    let result = json!({
        "eta0": spec.eta0,
        "residual": spec.residual,
        "iterations": spec.iterations,
        "converged": spec.converged,
    });
    sink.json("spectrum.json", &result)?;
    match failure {
        Some(error) => Err(Aborted {
            result: Some(result),
            error,
        }),
        None => Ok((result, None)),
    }
}

fn classify(params: &Parameters) -> Result<Value, Aborted> {
    let grid = params.grid().clone();
    let report = spectral::classify_stability(params, &grid).map_err(solver)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn nondim_groups(params: &Parameters, sink: &mut Sink) -> Result<Value, Aborted> {
    let (sc, d) = nondim::nondimensionalize(params).map_err(solver)?;
    sink.csv("q.csv", || {
        output::node_table(d.grid(), &[("q", d.q.values())])
    })?;
    Ok(json!({
        "scaling": sc,
        "alpha1": d.alpha1,
        "alpha2": d.alpha2,
        "beta1": d.beta1,
        "beta2": d.beta2,
        "q_sup": d.q_sup(),
        "lengths": d.grid().lengths(),
    }))
}

fn verify(config: &RunConfig, params: &Parameters, dir: &Path) -> Outcome {
    let grid = params.grid().clone();
    let traj = output::read_trajectory(dir, grid.clone())
        .map_err(|e| CliError::Input(format!("cannot load simulation output: {e}")))?;
    if traj.snapshots.len() < 2 {
        return Err(CliError::Input("verification needs at least two snapshots".into()).into());
    }
    let t_inf = steady::solve_t_infinity(params, &grid).map_err(solver)?;
    let t_report = analysis::verify_t_convergence(&traj, &t_inf, params.mu_t);
    let iv = analysis::verify_iv_decay(&traj);
    let stability = spectral::classify_stability(params, &grid).map_err(solver)?;
    let monitors = monitor_bounds(
        &traj,
        params,
        config.stepper.monitors,
        config.stepper.tol_band,
    );

    let mut problems = Vec::new();
    if !t_report.passed() {
        problems.push(format!(
            "{} target-cell convergence violations",
            t_report.violations.len()
        ));
    }
    if !monitors.passed() {
        problems.push(format!(
            "{} monitored bound violations",
            monitors.violations.len()
        ));
    }
    if stability.classification.is_globally_stable() && !matches!(iv, Ok(d) if d.decayed) {
        problems.push(format!(
            "clearance is {} but I + V did not decay",
            stability.classification.as_str()
        ));
    }
    let result = json!({
        "t_convergence": {
            "passed": t_report.passed(),
            "upper_passed": t_report.upper_passed(),
            "report": t_report,
        },
        "iv_decay": match &iv {
            Ok(d) => serde_json::to_value(d).expect("decay serializes"),
            Err(e) => json!({ "error": e.to_string() }),
        },
        "stability": stability,
        "monitors": {
            "passed": monitors.passed(),
            "report": monitors,
        },
    });
    let report_path = dir.join("verify.json");
    fs::write(&report_path, pretty(&result)).map_err(io_err(&report_path))?;
    let failure = (!problems.is_empty()).then(|| CliError::Verification(problems.join("; ")));
    Ok((result, failure))
}

fn sweep(
    config: &RunConfig,
    params: &Parameters,
    seed: u64,
    sink: &mut Sink,
) -> Result<Value, Aborted> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Input("sweep needs a `sweep` block".into()))?;
    let experiment = match spec.experiment {
        config::ExperimentSpec::Classify => Experiment::Classify,
        config::ExperimentSpec::Decay => Experiment::Decay {
            initial: config.initial(params)?,
            stepper: config.stepper_config(params),
        },
        config::ExperimentSpec::Growth => {
            Experiment::Growth(config.growth.clone().unwrap_or_default().options(seed))
        }
    };
    let rows = analysis::sweep(params, spec.axis, &spec.values, &experiment);
    sink.csv("sweep.csv", || sweep_csv(&rows))?;
    let value = serde_json::to_value(&rows).expect("rows serialize");
    sink.json("sweep.json", &value)?;
    Ok(json!({ "axis": spec.axis, "experiment": spec.experiment, "rows": value }))
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    use analysis::Outcome as O;
    let mut out =
        String::from("value,status,eta0,R0_sup,corollary_bound,classification,rate,r_squared\n");
    for r in rows {
        let n = output::num;
        let line = match &r.outcome {
            Ok(O::Classify(s)) => format!(
                "{},ok,{},{},{},{},,",
                n(r.value),
                n(s.eta0),
                n(s.r0_sup),
                n(s.corollary_bound),
                s.classification.as_str()
            ),
            Ok(O::Decay(d)) => format!("{},ok,,,,,{},{}", n(r.value), n(d.rate), n(d.r_squared)),
            Ok(O::Growth(g)) => format!(
                "{},ok,{},,,,{},{}",
                n(r.value),
                n(g.eta0),
                n(g.rate),
                n(g.r_squared)
            ),
            Err(_) => format!("{},error,,,,,,", n(r.value)),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Entry point shared by the binary: parse flags, run, report.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let opts = RunOptions {
        output: cli.output.clone(),
        quiet: cli.quiet,
        seed: cli.seed,
    };
    let result = fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(ConfigError::Io(format!("{}: {e}", cli.config.display()))))
        .and_then(|doc| parse_config(&doc).map_err(CliError::from))
        .and_then(|config| run_subcommand(cli.command, &config, &opts));
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", e.record(Some(cli.command)));
            e.exit_code()
        }
    }
}

/// Convenience for examples and tests: initial state of a config.
pub fn initial_state(config: &RunConfig) -> Result<State, ConfigError> {
    config.initial(&config.parameters()?)
}
