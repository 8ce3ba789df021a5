//! Command-line driver: dataset generation, fitting, prediction and
//! simulation, Monte Carlo benchmarks and viability checks.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input or configuration,
//! 3 infeasible or unsupported target, 4 numerical failure, 5 divergence.

pub mod config;
pub mod io;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use narxstab::benchmarks::{
    benchmark_methods, generate_dataset, run_monte_carlo, MonteCarloConfig, MonteCarloResults, Quartiles,
    SyntheticSystemSpec,
};
use narxstab::kernels::KernelInstance;
use narxstab::predictor::{fit, validate, PredictorModel};
use narxstab::solver::build_regression_data;
use narxstab::viability::{numeric_falsifier, target_membership, StabilityTarget};
use serde::Serialize;
use thiserror::Error;

use config::{BenchmarkConfig, RunConfig};
use io::{read_series, read_toml, write_csv, write_csv_with_header, write_series, write_toml, OutputRow};

#[derive(Debug, Parser)]
#[command(
    name = "narxstab",
    version,
    about = "Stability-constrained kernel identification of NARX predictors"
)]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw training and validation datasets from a benchmark system.
    Generate,
    /// Select hyperparameters, solve for the coefficients, write the model.
    Fit,
    /// One-step prediction and free-run simulation of a model on a dataset.
    Predict,
    /// Free-run simulation; fails with exit code 5 on divergence.
    Simulate,
    /// Monte Carlo comparison of the benchmark methods.
    Benchmark {
        /// Number of Monte Carlo runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Full-scale study (501 runs, full optimizer budget, 5001-sample
        /// validation for H).
        #[arg(long)]
        full_scale: bool,
    },
    /// Closed-form viability verdicts, optionally with the falsifier.
    CheckViability {
        /// Run the sampling falsifier even if the configuration omits it.
        #[arg(long)]
        falsify: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] narxstab::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        if e.is_io_error() {
            Self::Io(format!("{}: {e}", path.display()))
        } else {
            Self::Input(format!("{}: {e}", path.display()))
        }
    }

    pub fn exit_code(&self) -> u8 {
        use narxstab::Error as E;
        match self {
            Self::Io(_) => 1,
            Self::Input(_) | Self::Core(E::Input(_)) => 2,
            Self::Core(E::Infeasible(_) | E::Unsupported(_)) => 3,
            Self::Core(E::Numeric(_)) => 4,
            Self::Core(E::Divergence { .. }) => 5,
        }
    }
}

struct Context {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(0);
        let out = cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| ".".into());
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(Self { config, seed, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref()
        .ok_or_else(|| CliError::Input(format!("the configuration has no [{name}] table")))
}

/// Runs one command, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Generate => cmd_generate(&ctx, stdout),
        Command::Fit => cmd_fit(&ctx, stdout),
        Command::Predict => cmd_predict(&ctx, stdout, false),
        Command::Simulate => cmd_predict(&ctx, stdout, true),
        Command::Benchmark { runs, full_scale } => cmd_benchmark(&ctx, stdout, *runs, *full_scale),
        Command::CheckViability { falsify } => cmd_check_viability(&ctx, stdout, *falsify),
    }
}

fn say(stdout: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(stdout, "{text}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn cmd_generate(ctx: &Context, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = section(&ctx.config.generate, "generate")?.resolve(ctx.seed);
    let data = generate_dataset(&spec)?;
    write_series(&ctx.path("train.csv"), &data.train)?;
    write_series(&ctx.path("valid.csv"), &data.valid)?;
    write_toml(&ctx.path("manifest.toml"), &spec)?;
    say(
        stdout,
        format!(
            "system {}: {} training and {} validation samples (seed {}) written to {}",
            spec.system.label(),
            data.train.len(),
            data.valid.len(),
            spec.seed,
            ctx.out.display()
        ),
    )
}

#[derive(Debug, Serialize)]
struct FitRecord<'a> {
    kernel: String,
    target: String,
    model_order: usize,
    chi: f64,
    beta: f64,
    eta: &'a [f64],
    alpha_bar: f64,
    effective_alpha: f64,
    constraint_active: bool,
    rkhs_norm_sq: f64,
    mu: f64,
    cost: f64,
    evaluations: usize,
    converged: bool,
    feasible: bool,
}

fn cmd_fit(ctx: &Context, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = section(&ctx.config.fit, "fit")?;
    let series = read_series(&cfg.data)?;
    let data = build_regression_data(&series.u, &series.y, cfg.model_order)?;
    let selection = narxstab::model_selection::SelectionConfig {
        method: cfg.selection.method,
        iota: cfg.selection.iota,
        target: cfg.target,
        optimizer: cfg.selection.optimizer.clone(),
        seed: ctx.seed,
    };
    let fitted = fit(&data, &cfg.kernel, &selection, cfg.chi)?;
    write_toml(&ctx.path(&cfg.model_file), &fitted.model)?;
    let record = FitRecord {
        kernel: cfg.kernel.name(),
        target: cfg.target.to_string(),
        model_order: cfg.model_order,
        chi: cfg.chi,
        beta: fitted.selection.beta,
        eta: fitted.selection.eta.as_slice(),
        alpha_bar: fitted.report.alpha_bar,
        effective_alpha: fitted.report.effective_alpha,
        constraint_active: fitted.report.constraint_active,
        rkhs_norm_sq: fitted.report.rkhs_norm_sq,
        mu: fitted.report.mu,
        cost: fitted.selection.cost,
        evaluations: fitted.selection.evaluations,
        converged: fitted.selection.converged,
        feasible: fitted.selection.feasible,
    };
    write_toml(&ctx.path("fit_report.toml"), &record)?;
    say(
        stdout,
        format!(
            "fitted {} with target {}: beta = {:e}, eta = {:?}, alpha_bar = {:e}, mu = {:.6}, cost = {:.6}",
            record.kernel, record.target, record.beta, record.eta, record.alpha_bar, record.mu, record.cost
        ),
    )?;
    if !fitted.selection.converged {
        say(
            stdout,
            "note: no optimizer restart converged within its budget; best point returned",
        )?;
    }
    Ok(())
}

fn cmd_predict(ctx: &Context, stdout: &mut dyn Write, strict: bool) -> Result<(), CliError> {
    let (name, cfg) = if strict {
        ("simulate", &ctx.config.simulate)
    } else {
        ("predict", &ctx.config.predict)
    };
    let cfg = section(cfg, name)?;
    let model: PredictorModel = read_toml(&cfg.model)?;
    model.validate()?;
    let series = read_series(&cfg.data)?;
    let result = validate(&model, &series.u, &series.y)?;
    let rows: Vec<OutputRow> = (0..series.len())
        .map(|i| OutputRow {
            t: i + 1,
            y: series.y[i],
            y_pred: result.predicted[i],
            y_sim: result.simulated.as_ref().map(|s| s[i]),
        })
        .collect();
    write_csv(&ctx.path(&format!("{name}.csv")), &rows)?;
    say(stdout, format!("q_pre = {}", result.q_pre))?;
    say(stdout, format!("q_sim = {}", result.q_sim))?;
    if let Some(index) = result.diverged_at {
        // rows count t from 1; the core reports 0-based sample indices
        say(stdout, format!("free-run simulation diverged at t = {}", index + 1))?;
        if strict {
            let m = model.model_order();
            if let Err(e) = narxstab::predictor::simulate(&model, &series.u, &series.y[..m]) {
                return Err(e.into());
            }
        }
    }
    Ok(())
}

fn monte_carlo_config(
    bench: &BenchmarkConfig,
    seed: u64,
    runs: Option<usize>,
    full: bool,
) -> Result<MonteCarloConfig, CliError> {
    let full = full || bench.full_scale;
    let mut mc = MonteCarloConfig::benchmark(full, seed);
    if let Some(r) = runs.or(bench.runs) {
        mc.runs = r;
    }
    if let Some(names) = &bench.methods {
        let known: Vec<String> = benchmark_methods().into_iter().map(|m| m.name).collect();
        if let Some(bad) = names.iter().find(|n| !known.contains(n)) {
            return Err(CliError::Input(format!(
                "unknown benchmark method {bad:?}; known: {}",
                known.join(", ")
            )));
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        mc.retain_methods(&refs);
    }
    mc.methods.extend(bench.custom_methods.iter().cloned());
    for g in &bench.systems {
        let spec = g.resolve(0);
        match mc.systems.iter_mut().find(|s| s.system == spec.system) {
            Some(s) => *s = SyntheticSystemSpec { seed: 0, ..spec },
            None => mc.systems.push(spec),
        }
    }
    let used: Vec<_> = mc.methods.iter().map(|m| m.system).collect();
    mc.systems.retain(|s| used.contains(&s.system));
    if let Some(sel) = &bench.selection {
        mc.selection = sel.method;
        mc.iota = sel.iota;
        mc.optimizer = sel.optimizer.clone();
    }
    if let Some(chi) = bench.chi {
        mc.chi = chi;
    }
    if let Some(m) = bench.model_order {
        mc.model_order = m;
    }
    mc.record_timing = bench.record_timing;
    Ok(mc)
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    system: String,
    method: String,
    completed: usize,
    failures: usize,
    diverged: usize,
    q_pre_min: Option<f64>,
    q_pre_q1: Option<f64>,
    q_pre_median: Option<f64>,
    q_pre_q3: Option<f64>,
    q_pre_max: Option<f64>,
    q_sim_min: Option<f64>,
    q_sim_q1: Option<f64>,
    q_sim_median: Option<f64>,
    q_sim_q3: Option<f64>,
    q_sim_max: Option<f64>,
}

const RESULTS_HEADER: [&str; 7] = ["run", "system", "method", "q_pre", "q_sim", "feasible", "fit_seconds"];
const FAILURES_HEADER: [&str; 4] = ["run", "system", "method", "error"];

fn write_benchmark(
    ctx: &Context,
    mc: &MonteCarloConfig,
    res: &MonteCarloResults,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    write_csv_with_header(&ctx.path("results.csv"), &RESULTS_HEADER, &res.rows)?;
    write_csv_with_header(&ctx.path("failures.csv"), &FAILURES_HEADER, &res.failures)?;
    let q = |x: Option<Quartiles>| {
        (
            x.map(|q| q.min),
            x.map(|q| q.q1),
            x.map(|q| q.median),
            x.map(|q| q.q3),
            x.map(|q| q.max),
        )
    };
    let summaries = res.summarize(&mc.methods);
    let rows: Vec<SummaryRow> = summaries
        .iter()
        .map(|s| {
            let (a0, a1, a2, a3, a4) = q(s.q_pre);
            let (b0, b1, b2, b3, b4) = q(s.q_sim);
            SummaryRow {
                system: s.system.clone(),
                method: s.method.clone(),
                completed: s.completed,
                failures: s.failures,
                diverged: s.diverged,
                q_pre_min: a0,
                q_pre_q1: a1,
                q_pre_median: a2,
                q_pre_q3: a3,
                q_pre_max: a4,
                q_sim_min: b0,
                q_sim_q1: b1,
                q_sim_median: b2,
                q_sim_q3: b3,
                q_sim_max: b4,
            }
        })
        .collect();
    write_csv(&ctx.path("summary.csv"), &rows)?;

    say(
        stdout,
        format!(
            "{:<8} {:>4} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12}",
            "method", "ok", "fail", "div", "q_pre q1", "q_pre med", "q_sim med", "q_sim q3"
        ),
    )?;
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
    for r in &rows {
        say(
            stdout,
            format!(
                "{:<8} {:>4} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12}",
                r.method,
                r.completed,
                r.failures,
                r.diverged,
                f(r.q_pre_q1),
                f(r.q_pre_median),
                f(r.q_sim_median),
                f(r.q_sim_q3)
            ),
        )?;
    }
    for fl in &res.failures {
        say(
            stdout,
            format!("run {} method {} failed: {}", fl.run, fl.method, fl.error),
        )?;
    }
    Ok(())
}

fn cmd_benchmark(ctx: &Context, stdout: &mut dyn Write, runs: Option<usize>, full: bool) -> Result<(), CliError> {
    let bench = ctx.config.benchmark.clone().unwrap_or_default();
    let mc = monte_carlo_config(&bench, ctx.seed, runs, full)?;
    let res = run_monte_carlo(&mc)?;
    write_benchmark(ctx, &mc, &res, stdout)
}

#[derive(Debug, Serialize)]
struct ViabilityRow {
    target: String,
    verdict: String,
    falsifier_samples: Option<usize>,
    witness_condition: Option<String>,
    witness_margin: Option<f64>,
    witness_points: Option<String>,
}

fn cmd_check_viability(ctx: &Context, stdout: &mut dyn Write, falsify: bool) -> Result<(), CliError> {
    let cfg = section(&ctx.config.check_viability, "check_viability")?;
    let kernel = KernelInstance::try_from(cfg.kernel.clone())?;
    let targets = cfg.targets.clone().unwrap_or_else(|| {
        vec![
            StabilityTarget::ISS,
            StabilityTarget::BIBS,
            StabilityTarget::DELTA_ISS,
            StabilityTarget::DELTA_BIBS,
        ]
    });
    let falsifier = match (&cfg.falsifier, falsify) {
        (Some(f), _) => Some(f.clone()),
        (None, true) => Some(config::FalsifierConfig::default()),
        (None, false) => None,
    };
    let mut rows = Vec::new();
    let mut unsupported = Vec::new();
    for target in targets {
        let verdict = match target_membership(kernel.structure(), kernel.eta().as_slice(), target) {
            Ok(true) => "member".to_string(),
            Ok(false) => "not member".to_string(),
            Err(narxstab::Error::Unsupported(msg)) => {
                unsupported.push(msg.clone());
                format!("unsupported: {msg}")
            }
            Err(e) => return Err(e.into()),
        };
        say(stdout, format!("{} {target}: {verdict}", kernel.structure().name()))?;
        let mut row = ViabilityRow {
            target: target.to_string(),
            verdict,
            falsifier_samples: None,
            witness_condition: None,
            witness_margin: None,
            witness_points: None,
        };
        if let (Some(f), true) = (&falsifier, target.is_constrained()) {
            row.falsifier_samples = Some(f.samples);
            match numeric_falsifier(&kernel, target, f.samples, f.radius, ctx.seed)? {
                Some(w) => {
                    let cond = format!("{:?}", w.violated_condition);
                    let points = w
                        .points
                        .iter()
                        .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                        .collect::<Vec<_>>()
                        .join(" | ");
                    say(stdout, format!("  witness ({cond}, margin {:e}): {points}", w.margin))?;
                    row.witness_condition = Some(cond);
                    row.witness_margin = Some(w.margin);
                    row.witness_points = Some(points);
                }
                None => say(stdout, format!("  no witness in {} samples", f.samples))?,
            }
        }
        rows.push(row);
    }
    write_csv(&ctx.path("viability.csv"), &rows)?;
    if !unsupported.is_empty() && unsupported.len() == rows.len() {
        return Err(narxstab::Error::Unsupported(unsupported.join("; ")).into());
    }
    Ok(())
}
