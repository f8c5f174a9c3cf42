//! `gphodlr` — command-line front end for the hierarchical covariance
//! solver: benchmarks, scaling comparisons, regression experiments, and
//! one-off solves over CSV data.
//!
//! Exit codes: 0 on success, 1 for configuration errors (bad flags or
//! malformed input files), 2 for numerical failures during a computation.

use clap::{Args, Parser, Subcommand};
use gphodlr::{loglik_grid_scan, GpModel, KernelFamily, KernelSpec};
use gphodlr_cli::experiments::{
    self, Engine, HighdimConfig, RmseSweepConfig, RunConfig, ScalingConfig, SolveStats,
};
use gphodlr_cli::{io as data_io, reporting, CliError, CliResult};
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "gphodlr",
    version,
    about = "Fast direct solves, determinants, and regression for Gaussian-process covariance matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time and verify manufactured-solution solves at one or more sizes
    Bench(BenchCmd),
    /// Compare factor-time growth of the hierarchical and dense engines
    Scaling(ScalingCmd),
    /// Stress solves across spatial dimensions (unscaled or scaled box)
    Highdim(HighdimCmd),
    /// Sweep regression error against compression tolerance
    RmseSweep(RmseSweepCmd),
    /// Solve the covariance system for a right-hand side
    Solve(SolveCmd),
    /// Fit a Gaussian process and predict at query points
    Predict(PredictCmd),
    /// Scan the log marginal likelihood over one kernel parameter
    LoglikScan(LoglikScanCmd),
}

/// Kernel selection shared by data-facing subcommands.
#[derive(Args, Debug, Clone)]
struct KernelArgs {
    /// kernel family (gaussian, exponential, matern, multiquadric,
    /// inverse-multiquadric, biharmonic, rational-quadratic)
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    /// noise variance added to the diagonal
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    length_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Matérn smoothness (used by --kernel matern)
    #[arg(long, default_value_t = 1.5)]
    matern_nu: f64,
    /// rational-quadratic shape (used by --kernel rational-quadratic)
    #[arg(long, default_value_t = 1.0)]
    rq_alpha: f64,
}

impl KernelArgs {
    fn to_spec(&self) -> CliResult<KernelSpec> {
        let family: KernelFamily = self.kernel.parse()?;
        Ok(KernelSpec::new(family, self.noise)?
            .with_length_scale(self.length_scale)?
            .with_amplitude(self.amplitude)?
            .with_matern_nu(self.matern_nu)?
            .with_rq_alpha(self.rq_alpha)?)
    }
}

/// Solver tuning shared by all subcommands.
#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// off-diagonal compression tolerance
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    /// dense leaf block size
    #[arg(long, default_value_t = 20)]
    pmax: usize,
    /// base seed for synthetic data
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchCmd {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// problem sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// synthetic points are uniform in [-half-width, half-width]^dim
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    /// hodlr or dense
    #[arg(long, default_value = "hodlr")]
    engine: String,
    /// verify against exactly evaluated right-hand sides (O(n^2))
    #[arg(long)]
    exact: bool,
    /// timing repetitions per size (median reported)
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// write rows as CSV to this path
    #[arg(long)]
    out: Option<PathBuf>,
    /// print JSON to stdout instead of a table
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct ScalingCmd {
    #[command(flatten)]
    solver: SolverArgs,
    /// hierarchical-engine sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    hodlr_n: Option<Vec<usize>>,
    /// dense-engine sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    dense_n: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct HighdimCmd {
    #[command(flatten)]
    solver: SolverArgs,
    /// dimensions to sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// shrink the box to [-3/sqrt(d), 3/sqrt(d)]^d
    #[arg(long)]
    scaled: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RmseSweepCmd {
    #[command(flatten)]
    solver: SolverArgs,
    /// tolerances to sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    eps_values: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// observation-noise standard deviation of the synthetic model
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SolveCmd {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// CSV of point coordinates (all columns); synthetic points if omitted
    #[arg(long)]
    points_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    /// CSV with one right-hand-side column; a manufactured benchmark row is
    /// reported instead when omitted
    #[arg(long)]
    rhs_csv: Option<PathBuf>,
    #[arg(long, default_value = "hodlr")]
    engine: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PredictCmd {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// training CSV: coordinate columns followed by one target column
    #[arg(long)]
    train_csv: PathBuf,
    /// query CSV: coordinate columns only, same dimension as training
    #[arg(long)]
    query_csv: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LoglikScanCmd {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// training CSV (coordinates + target column); synthetic 1-D data if
    /// omitted
    #[arg(long)]
    train_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// kernel parameter to scan (length_scale, amplitude, noise, nu, alpha)
    #[arg(long)]
    param: String,
    /// grid of parameter values, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() {
    std::process::exit(run_cli());
}

fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Bench(cmd) => bench(cmd),
        Command::Scaling(cmd) => scaling(cmd),
        Command::Highdim(cmd) => highdim(cmd),
        Command::RmseSweep(cmd) => rmse_sweep(cmd),
        Command::Solve(cmd) => solve(cmd),
        Command::Predict(cmd) => predict(cmd),
        Command::LoglikScan(cmd) => loglik_scan(cmd),
    }
}

fn parse_engine(s: &str) -> CliResult<Engine> {
    s.parse().map_err(CliError::Config)
}

/// Emit rows: CSV to `out` when given, and either JSON or a text table to
/// stdout.
fn emit<T: Serialize>(
    rows: &[T],
    table: String,
    out: &Option<PathBuf>,
    json: bool,
) -> CliResult<()> {
    if let Some(path) = out {
        reporting::write_csv(File::create(path)?, rows)?;
    }
    if json {
        reporting::write_json(std::io::stdout().lock(), &rows)?;
    } else {
        print!("{table}");
    }
    Ok(())
}

fn bench(cmd: BenchCmd) -> CliResult<()> {
    let spec = cmd.kernel.to_spec()?;
    let engine = parse_engine(&cmd.engine)?;
    let mut rows = Vec::with_capacity(cmd.n.len());
    for &n in &cmd.n {
        let mut rc = RunConfig::new(spec.clone(), n);
        rc.engine = engine;
        rc.dim = cmd.dim;
        rc.half_width = cmd.half_width;
        rc.eps = cmd.solver.eps;
        rc.p_max = cmd.solver.pmax;
        rc.seed = cmd.solver.seed;
        rc.repeats = cmd.repeats;
        if cmd.exact {
            rc.exact_reference = true;
        }
        rows.push(experiments::manufactured_run(&rc)?);
    }
    emit(&rows, reporting::stats_table(&rows), &cmd.out, cmd.json)
}

fn scaling(cmd: ScalingCmd) -> CliResult<()> {
    let mut cfg = ScalingConfig::standard(cmd.solver.seed);
    cfg.eps = cmd.solver.eps;
    cfg.p_max = cmd.solver.pmax;
    cfg.repeats = cmd.repeats;
    if let Some(ns) = cmd.hodlr_n {
        cfg.hodlr_ns = ns;
    }
    if let Some(ns) = cmd.dense_n {
        cfg.dense_ns = ns;
    }
    let report = experiments::scaling_run(&cfg)?;
    if let Some(path) = &cmd.out {
        let mut rows: Vec<SolveStats> = report.hodlr.clone();
        rows.extend(report.dense.iter().cloned());
        reporting::write_csv(File::create(path)?, &rows)?;
    }
    if cmd.json {
        reporting::write_json(std::io::stdout().lock(), &report)?;
    } else {
        print!("{}", reporting::scaling_table(&report));
    }
    Ok(())
}

fn highdim(cmd: HighdimCmd) -> CliResult<()> {
    let mut cfg = HighdimConfig::standard(cmd.scaled, cmd.solver.seed);
    cfg.n = cmd.n;
    cfg.eps = cmd.solver.eps;
    cfg.p_max = cmd.solver.pmax;
    if let Some(dims) = cmd.dims {
        cfg.dims = dims;
    }
    let rows = experiments::highdim_run(&cfg)?;
    emit(&rows, reporting::stats_table(&rows), &cmd.out, cmd.json)
}

fn rmse_sweep(cmd: RmseSweepCmd) -> CliResult<()> {
    let mut cfg = RmseSweepConfig::standard(cmd.solver.seed);
    cfg.n = cmd.n;
    cfg.p_max = cmd.solver.pmax;
    cfg.sigma_eps = cmd.sigma;
    if let Some(eps) = cmd.eps_values {
        cfg.eps_values = eps;
    }
    let report = experiments::rmse_sweep(&cfg)?;
    if let Some(path) = &cmd.out {
        reporting::write_csv(File::create(path)?, &report.points)?;
    }
    if cmd.json {
        reporting::write_json(std::io::stdout().lock(), &report)?;
    } else {
        print!("{}", reporting::rmse_table(&report));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SolutionRow {
    index: usize,
    x: f64,
}

fn solve(cmd: SolveCmd) -> CliResult<()> {
    let spec = cmd.kernel.to_spec()?;
    let engine = parse_engine(&cmd.engine)?;
    let (coords, dim) = match &cmd.points_csv {
        Some(path) => data_io::read_points(path)?,
        None => (
            gphodlr::geometry::uniform_points(cmd.n, cmd.dim, cmd.half_width, cmd.solver.seed),
            cmd.dim,
        ),
    };
    let n = coords.len() / dim;

    let Some(rhs_path) = &cmd.rhs_csv else {
        // no right-hand side: report a manufactured benchmark row instead
        let mut rc = RunConfig::new(spec, n);
        rc.engine = engine;
        rc.dim = dim;
        rc.eps = cmd.solver.eps;
        rc.p_max = cmd.solver.pmax;
        rc.seed = cmd.solver.seed;
        let row = experiments::run_on_points(&rc, &coords)?;
        let rows = vec![row];
        return emit(&rows, reporting::stats_table(&rows), &cmd.out, cmd.json);
    };

    let b = data_io::read_vector(rhs_path)?;
    if b.len() != n {
        return Err(CliError::Config(format!(
            "right-hand side has {} entries for {n} points",
            b.len()
        )));
    }
    let b = nalgebra::DVector::from_column_slice(&b);
    let x = match engine {
        Engine::Hodlr => {
            let pts = gphodlr::kd_sort(&coords, dim, cmd.solver.pmax)?;
            let tree = gphodlr::assemble(&spec, &pts, cmd.solver.eps, cmd.solver.pmax)?;
            gphodlr::factorize(&tree)?.solve_vector(&b)?
        }
        Engine::Dense => {
            let pts = gphodlr::kd_sort(&coords, dim, cmd.solver.pmax)?;
            let dense = gphodlr::dense::dense_assemble(&spec, &pts)?;
            let x = gphodlr::dense::dense_solve(
                &dense,
                &nalgebra::DMatrix::from_column_slice(n, 1, b.as_slice()),
            )?;
            nalgebra::DVector::from_column_slice(x.as_slice())
        }
    };
    let rows: Vec<SolutionRow> = x
        .iter()
        .enumerate()
        .map(|(index, &x)| SolutionRow { index, x })
        .collect();
    match &cmd.out {
        Some(path) => reporting::write_csv(File::create(path)?, &rows)?,
        None => reporting::write_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictionRow {
    index: usize,
    mean: f64,
    variance: f64,
}

fn predict(cmd: PredictCmd) -> CliResult<()> {
    let spec = cmd.kernel.to_spec()?;
    let (coords, dim, y) = data_io::read_points_with_targets(&cmd.train_csv)?;
    let (queries, qdim) = data_io::read_points(&cmd.query_csv)?;
    if qdim != dim {
        return Err(CliError::Config(format!(
            "query dimension {qdim} does not match training dimension {dim}"
        )));
    }
    let model = GpModel::fit(&spec, &coords, dim, &y, cmd.solver.eps, cmd.solver.pmax)?;
    let (mean, var) = model.predict(&queries)?;
    let rows: Vec<PredictionRow> = (0..mean.len())
        .map(|index| PredictionRow {
            index,
            mean: mean[index],
            variance: var[index],
        })
        .collect();
    match &cmd.out {
        Some(path) => reporting::write_csv(File::create(path)?, &rows)?,
        None => reporting::write_csv(std::io::stdout().lock(), &rows)?,
    }
    // keep stdout clean for the CSV; the scalar goes to stderr
    let mut err = std::io::stderr().lock();
    writeln!(
        err,
        "log marginal likelihood: {:.10}",
        model.log_marginal_likelihood()
    )?;
    Ok(())
}

fn loglik_scan(cmd: LoglikScanCmd) -> CliResult<()> {
    let spec = cmd.kernel.to_spec()?;
    let (coords, dim, y) = match &cmd.train_csv {
        Some(path) => data_io::read_points_with_targets(path)?,
        None => {
            // synthetic 1-D regression data, same model as the tolerance sweep
            let coords =
                gphodlr::geometry::uniform_points(cmd.n, 1, 3.0, cmd.solver.seed);
            let y = coords
                .iter()
                .map(|&x| (2.0 * x).sin() + x.exp() / 8.0)
                .collect::<Vec<f64>>();
            (coords, 1, y)
        }
    };
    let rows = loglik_grid_scan(
        &spec,
        &coords,
        dim,
        &y,
        &cmd.param,
        &cmd.grid,
        cmd.solver.eps,
        cmd.solver.pmax,
    )?;
    emit(
        &rows,
        reporting::scan_table(&cmd.param, &rows),
        &cmd.out,
        cmd.json,
    )
}
