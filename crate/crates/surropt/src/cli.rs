//! Batch pipeline commands. Every command is driven by one TOML config
//! (see [`crate::config`]), writes its artifacts atomically under the output
//! directory, and is deterministic given the config's seeds.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 numeric
//! failure, 5 non-convergence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, PipelineConfig};
use crate::design_space::{DesignPoint, DesignSpace, DesignSpaceError};
use crate::evaluation::{error_report, learning_curve, learning_curve_to_csv, split, EvaluationError};
use crate::oracle::{dataset_to_csv, generate_dataset_with_stats, load_dataset, OracleError};
use crate::optimize::{multistart, OptimizeError, StiffnessObjective};
use crate::sensitivity::{rank_and_reduce, sensitivity_analysis, sweep_to_csv, SensitivityError};
use crate::surrogate::{fit_triple, RbfSurrogate, SurrogateError, SurrogateSet, Target};
use crate::write_atomic;

#[derive(Parser)]
#[command(
    name = "surropt",
    about = "Surrogate-based design optimization of out-of-plane stiffness for soft pneumatic bending actuators",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override every seed in the config (sampling, split, multistart)
    #[arg(long)]
    seed: Option<u64>,
    /// Verbose logging
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the design space and evaluate the oracle into a dataset CSV
    Sample(Common),
    /// Split a dataset, fit the three metamodels, and validate them
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (defaults to <out-dir>/dataset.csv)
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// One-at-a-time sweeps, sensitivity ranking, and model reduction
    Sensitivity(Common),
    /// Maximize the out-of-plane stiffness under the bending-angle equality
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Directory holding the fitted model files (defaults to out-dir)
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Export a two-parameter response-surface grid from fitted models
    Surface {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Learning-curve study over the configured dataset sizes
    Curve(Common),
    /// Full chain: sample, fit, optimize, and surface when configured
    Pipeline(Common),
}

/// Classified failure carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numeric(String),
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::NonConvergence(_) => 5,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numeric(m)
            | CliError::NonConvergence(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } | ConfigError::MissingFile(_) => CliError::Io(e.to_string()),
            ConfigError::Oracle(inner) => CliError::from(inner),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match &e {
            OracleError::Dataset(crate::oracle::DatasetError::Io { .. }) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<DesignSpaceError> for CliError {
    fn from(e: DesignSpaceError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match &e {
            SurrogateError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match &e {
            OptimizeError::NoStartConverged(_) => CliError::NonConvergence(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses the process arguments and runs the selected command, returning
/// the exit code.
type Action = Box<dyn FnOnce(&PipelineConfig) -> Result<(), CliError>>;

pub fn run() -> i32 {
    let cli = Cli::parse();
    let (common, action): (&Common, Action) =
        match &cli.command {
            Command::Sample(c) => (c, Box::new(|cfg| cmd_sample(cfg).map(|_| ()))),
            Command::Fit { common, dataset } => {
                let dataset = dataset.clone();
                (common, Box::new(move |cfg| cmd_fit(cfg, dataset.as_deref())))
            }
            Command::Sensitivity(c) => (c, Box::new(cmd_sensitivity)),
            Command::Optimize { common, models } => {
                let models = models.clone();
                (
                    common,
                    Box::new(move |cfg| cmd_optimize(cfg, models.as_deref())),
                )
            }
            Command::Surface { common, models } => {
                let models = models.clone();
                (
                    common,
                    Box::new(move |cfg| cmd_surface(cfg, models.as_deref())),
                )
            }
            Command::Curve(c) => (c, Box::new(cmd_curve)),
            Command::Pipeline(c) => (c, Box::new(cmd_pipeline)),
        };

    env_logger::Builder::new()
        .filter_level(if common.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .init();

    let config = match load_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    match action(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(dir) = &common.out_dir {
        let absolute = if dir.is_absolute() {
            dir.clone()
        } else {
            std::env::current_dir()
                .map_err(|e| CliError::Io(e.to_string()))?
                .join(dir)
        };
        config.output.dir = absolute;
    }
    if let Some(seed) = common.seed {
        config.override_seed(seed);
    }
    Ok(config)
}

/// Samples the space, evaluates the oracle, and writes dataset.csv.
pub fn cmd_sample(config: &PipelineConfig) -> Result<PathBuf, CliError> {
    let space = config.design_space()?;
    let (oracle, warnings) = config.oracle(&space)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let (records, stats) = generate_dataset_with_stats(
        &space,
        oracle.as_ref(),
        config.sample.count,
        &config.retry_policy(),
        config.sample.skip,
        config.sample.seed,
    )?;
    let path = config.out_dir().join("dataset.csv");
    write_atomic(&path, dataset_to_csv(&space, &records).as_bytes())
        .map_err(|e| io_error(&path, e))?;
    println!(
        "wrote {} samples to {} ({} Sobol points rejected, {} replaced after retries)",
        records.len(),
        path.display(),
        stats.sobol_rejected,
        stats.retried
    );
    Ok(path)
}

fn model_path(dir: &Path, target: Target) -> PathBuf {
    dir.join(format!("model_{}.txt", target.column_name()))
}

/// Splits the dataset, fits the triple, writes the three model files and the
/// validation report.
pub fn cmd_fit(config: &PipelineConfig, dataset: Option<&Path>) -> Result<(), CliError> {
    let space = config.design_space()?;
    let out_dir = config.out_dir();
    let dataset_path = dataset
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_dir.join("dataset.csv"));
    let load = load_dataset(&dataset_path, &space)?;
    for w in &load.warnings {
        log::warn!("{w}");
    }
    let (train, test) = split(&load.records, &config.split_spec())?;
    let models = fit_triple(&space, &train, config.kernel_spec())?;
    for target in Target::ALL {
        let path = model_path(&out_dir, target);
        models.get(target).save(&path)?;
    }
    let report = error_report(&models, &test, train.len())?;
    let report_path = out_dir.join("error_report.csv");
    write_atomic(&report_path, report.to_csv().as_bytes())
        .map_err(|e| io_error(&report_path, e))?;
    println!(
        "fitted {} training samples; test errors: U {:.4e}, F {:.4e}, theta {:.4e}",
        train.len(),
        report.displacement.cov_error,
        report.force.cov_error,
        report.theta.cov_error
    );
    Ok(())
}

/// Runs every parameter sweep, writes the per-parameter curves and the
/// ranking report, and prints the retained subset.
pub fn cmd_sensitivity(config: &PipelineConfig) -> Result<(), CliError> {
    let space = config.design_space()?;
    let (oracle, warnings) = config.oracle(&space)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let (sweeps, sensitivities) =
        sensitivity_analysis(&space, oracle.as_ref(), &config.sweep_settings())?;
    let out_dir = config.out_dir();
    for sweep in &sweeps {
        for w in &sweep.warnings {
            log::warn!("{w}");
        }
        let path = out_dir.join(format!("sweep_{}.csv", sweep.parameter));
        write_atomic(&path, sweep_to_csv(&space, sweep).as_bytes())
            .map_err(|e| io_error(&path, e))?;
    }
    let (reduced, report) = rank_and_reduce(&space, &sensitivities, config.sensitivity.keep)?;
    let path = out_dir.join("sensitivity.csv");
    write_atomic(&path, report.to_csv().as_bytes()).map_err(|e| io_error(&path, e))?;
    println!(
        "retained {} of {} parameters: {}",
        reduced.dimension(),
        space.dimension(),
        report.retained.join(", ")
    );
    Ok(())
}

fn load_models(space: &DesignSpace, dir: &Path) -> Result<SurrogateSet, CliError> {
    let mut loaded = Vec::with_capacity(3);
    for target in Target::ALL {
        let path = model_path(dir, target);
        let model = RbfSurrogate::load(&path)?;
        if model.target() != target {
            return Err(CliError::Usage(format!(
                "{} holds a model for {}, expected {}",
                path.display(),
                model.target().column_name(),
                target.column_name()
            )));
        }
        if model.space().parameters() != space.parameters() {
            return Err(CliError::Usage(format!(
                "{} was fitted on a different design space",
                path.display()
            )));
        }
        loaded.push(model);
    }
    let theta = loaded.pop().unwrap();
    let force = loaded.pop().unwrap();
    let displacement = loaded.pop().unwrap();
    Ok(SurrogateSet {
        displacement,
        force,
        theta,
    })
}

/// Loads the fitted models and maximizes the stiffness from the configured
/// multistart set; writes the result row, the readable report, and the
/// iteration trace.
pub fn cmd_optimize(config: &PipelineConfig, models: Option<&Path>) -> Result<(), CliError> {
    let space = config.design_space()?;
    let out_dir = config.out_dir();
    let models_dir = models.map(Path::to_path_buf).unwrap_or_else(|| out_dir.clone());
    let set = load_models(&space, &models_dir)?;
    let target = config.target_angle()?;
    let objective = StiffnessObjective::new(set, config.optimizer.epsilon, target)?;
    let result = multistart(
        &objective,
        &space,
        config.optimizer.starts,
        config.optimizer.seed,
        &config.optimizer_settings(),
    )?;
    let csv_path = out_dir.join("optimization.csv");
    write_atomic(&csv_path, result.to_csv(&space).as_bytes())
        .map_err(|e| io_error(&csv_path, e))?;
    let report_path = out_dir.join("optimization.txt");
    write_atomic(&report_path, result.to_report(&space, target).as_bytes())
        .map_err(|e| io_error(&report_path, e))?;
    if config.optimizer.write_trace {
        let trace_path = out_dir.join("trace.csv");
        write_atomic(&trace_path, result.trace_to_csv().as_bytes())
            .map_err(|e| io_error(&trace_path, e))?;
    }
    print!("{}", result.to_report(&space, target));
    Ok(())
}

/// Evaluates theta and k_o over a two-parameter grid with the remaining
/// parameters fixed, and writes the grid CSV.
pub fn cmd_surface(config: &PipelineConfig, models: Option<&Path>) -> Result<(), CliError> {
    let Some(surface) = &config.surface else {
        return Err(CliError::Usage(
            "surface command needs a [surface] config section".into(),
        ));
    };
    let space = config.design_space()?;
    let out_dir = config.out_dir();
    let models_dir = models.map(Path::to_path_buf).unwrap_or_else(|| out_dir.clone());
    let set = load_models(&space, &models_dir)?;

    let index_of = |name: &str| -> Result<usize, CliError> {
        space
            .parameter_index(name)
            .map_err(|_| CliError::Usage(format!("unknown parameter {name:?}")))
    };
    let i1 = index_of(&surface.parameters[0])?;
    let i2 = index_of(&surface.parameters[1])?;
    for name in surface.fixed.keys() {
        index_of(name)?;
    }
    let mut base = space.median_point().values().to_vec();
    for (i, p) in space.parameters().iter().enumerate() {
        if i == i1 || i == i2 {
            continue;
        }
        match surface.fixed.get(&p.name) {
            Some(&v) => base[i] = v,
            None => {
                return Err(CliError::Usage(format!(
                    "surface.fixed needs a value for parameter {}",
                    p.name
                )))
            }
        }
    }

    let p1 = &space.parameters()[i1];
    let p2 = &space.parameters()[i2];
    let res = surface.resolution;
    let mut out = format!("{},{},theta,k_o\n", p1.name, p2.name);
    for a in 0..res {
        let v1 = p1.lower + p1.range() * a as f64 / (res - 1) as f64;
        for b in 0..res {
            let v2 = p2.lower + p2.range() * b as f64 / (res - 1) as f64;
            let mut values = base.clone();
            values[i1] = v1;
            values[i2] = v2;
            let point = DesignPoint::new(values);
            let theta = set.theta.predict(&point);
            let ko = set.force.predict(&point)
                / (set.displacement.predict(&point) + config.optimizer.epsilon);
            out.push_str(&format!("{v1},{v2},{theta},{ko}\n"));
        }
    }
    let path = out_dir.join(format!("surface_{}_{}.csv", p1.name, p2.name));
    write_atomic(&path, out.as_bytes()).map_err(|e| io_error(&path, e))?;
    println!("wrote {} grid rows to {}", res * res, path.display());
    Ok(())
}

/// Learning-curve study over the configured sizes.
pub fn cmd_curve(config: &PipelineConfig) -> Result<(), CliError> {
    let space = config.design_space()?;
    let (oracle, warnings) = config.oracle(&space)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let rows = learning_curve(
        &space,
        oracle.as_ref(),
        &config.learning_curve.sizes,
        &config.split_spec(),
        config.kernel_spec(),
        &config.retry_policy(),
        config.sample.skip,
        config.sample.seed,
    )?;
    let csv = learning_curve_to_csv(&rows);
    let path = config.out_dir().join("learning_curve.csv");
    write_atomic(&path, csv.as_bytes()).map_err(|e| io_error(&path, e))?;
    print!("{csv}");
    Ok(())
}

/// The end-to-end chain, composed through the same files the individual
/// commands read and write.
pub fn cmd_pipeline(config: &PipelineConfig) -> Result<(), CliError> {
    cmd_sample(config)?;
    cmd_fit(config, None)?;
    cmd_optimize(config, None)?;
    if config.surface.is_some() {
        cmd_surface(config, None)?;
    }
    Ok(())
}
