use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::json;

use qssvm01::baselines::{LsqConfig, Method};
use qssvm01::bench::{
    boundary_grid, grid_to_csv, load_csv, rows_to_csv, run_bench, write_csv, BBox, BenchProtocol, ClassPair,
    CsvOptions, Normalize, Normalizer,
};
use qssvm01::datagen::{generate, GenKind, GenSpec};
use qssvm01::model::{accuracy, build_design, total_loss};
use qssvm01::stationarity::{
    assumption_rank_check, index_sets, pstationary_check, second_order_check, second_order_sweep, MAX_SWEEP,
};
use qssvm01::{solve, Error, SolveStatus, SolverConfig, SurfaceParams, WarmStart};

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

/// Quadratic-surface classifier trained under the exact 0-1 loss.
#[derive(Parser)]
#[command(name = "qssvm01", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-dimensional dataset as CSV.
    Gen {
        /// linear, circular or convex2d.
        #[arg(long, default_value = "circular")]
        kind: GenKind,
        #[arg(long, default_value_t = 50)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a CSV file and emit the JSON solve report.
    Fit {
        data: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-certify a saved report against a dataset.
    Check {
        data: PathBuf,
        /// JSON report written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Certificate tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Also check every subset of the working set (at most 12 indices).
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated stratified train/test benchmark.
    Bench {
        data: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0.8)]
        train_rate: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Comma-separated subset of newton_l01, ls_qssvm.
        #[arg(long, value_delimiter = ',', default_value = "newton_l01,ls_qssvm")]
        methods: Vec<Method>,
        /// Full JSON result (statistics and per-trial predictions).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a fitted two-feature surface on a grid.
    Grid {
        #[arg(long)]
        model: PathBuf,
        /// xmin,xmax,ymin,ymax
        #[arg(long, default_value = "-3,3,-3,3", allow_hyphen_values = true)]
        bbox: BBox,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e5)]
    lambda: f64,
    /// Prox step.
    #[arg(long, default_value_t = 1e-4)]
    alpha: f64,
    /// Contraction factor of the perturbation, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma0: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// zeros, least_squares or squared_hinge.
    #[arg(long, default_value = "squared_hinge")]
    warm_start: WarmStart,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            alpha: self.alpha,
            tau: self.tau,
            rho: self.rho,
            gamma_init: self.gamma0,
            eps: self.eps,
            max_iter: self.max_iter,
            warm_start: self.warm_start,
            lsq: LsqConfig::default(),
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Two raw label values to keep, e.g. `1,2`.
    #[arg(long)]
    class_pair: Option<ClassPair>,
    /// none, zscore or minmax.
    #[arg(long, default_value = "none")]
    normalize: Normalize,
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(path: &Path, input: &InputArgs) -> Result<qssvm01::Dataset, Failure> {
    let data = load_csv(path, &CsvOptions { class_pair: input.class_pair.clone() })?;
    Ok(Normalizer::fit(input.normalize, &data).apply(&data)?)
}

fn read_model(path: &Path) -> Result<(SurfaceParams, Option<DVector<f64>>), Failure> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?).map_err(Error::from)?;
    let theta: SurfaceParams = serde_json::from_value(v["theta"].clone()).map_err(Error::from)?;
    let z = match v.get("z") {
        Some(z) => Some(DVector::from_vec(serde_json::from_value::<Vec<f64>>(z.clone()).map_err(Error::from)?)),
        None => None,
    };
    Ok((theta, z))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { kind, n_per_class, seed, noise, out } => {
            let data = generate(&GenSpec { kind, n_per_class, seed, noise })?;
            let mut buf = Vec::new();
            write_csv(&data, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Fit { data, solver, input, out } => {
            let data = load(&data, &input)?;
            let cfg = solver.config();
            let report = solve(&data, &cfg, None, None)?;
            let mut json = report.to_json()?;
            json["train_accuracy"] = json!(accuracy(&report.final_state.theta, &data)?);
            let cache = build_design(&data)?;
            json["loss"] = serde_json::to_value(total_loss(&report.final_state.theta, &cache, cfg.lambda)?)
                .map_err(Error::from)?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&json).map_err(Error::from)? + "\n"))?;
            eprintln!(
                "status={} iters={} residual={:.3e} train_accuracy={:.4}",
                report.status,
                report.iters(),
                report.final_state.residual.norm,
                json["train_accuracy"].as_f64().unwrap_or(f64::NAN)
            );
            match report.status {
                SolveStatus::Converged => Ok(()),
                s => Err(Failure::Solver(format!("solver stopped with status {s}"))),
            }
        }
        Command::Check { data, model, solver, input, tol, sweep, out } => {
            let data = load(&data, &input)?;
            let cfg = solver.config();
            let (theta, z) = read_model(&model)?;
            let cache = build_design(&data)?;
            let z = z.unwrap_or_else(|| DVector::zeros(data.n()));
            if z.len() != data.n() {
                return Err(Error::Dimension { expected: data.n(), got: z.len() }.into());
            }
            let cert = pstationary_check(&theta, &z, cfg.alpha, cfg.lambda, &cache, tol)?;
            let f = qssvm01::model::margins(&theta, &cache)?;
            let sets = index_sets(f.as_slice(), z.as_slice(), cfg.alpha, cfg.lambda)?;
            let rank = assumption_rank_check(&sets.working, &cache)?;
            let second = second_order_check(&sets.working, &cache, 0.0)?;
            let mut json = json!({
                "certificate": cert,
                "working": sets.working,
                "rank": rank,
                "second_order": second,
                "train_accuracy": accuracy(&theta, &data)?,
            });
            if sweep {
                json["second_order_sweep"] = if sets.working.len() <= MAX_SWEEP {
                    json!(second_order_sweep(&sets.working, &cache, 0.0)?)
                } else {
                    json!(null)
                };
            }
            emit(out.as_deref(), &(serde_json::to_string_pretty(&json).map_err(Error::from)? + "\n"))?;
            if cert.passed {
                Ok(())
            } else {
                Err(Failure::Solver("point is not P-stationary at the given tolerance".into()))
            }
        }
        Command::Bench { data, solver, input, train_rate, trials, methods, out } => {
            let data = load_csv(&data, &CsvOptions { class_pair: input.class_pair.clone() })?;
            let protocol =
                BenchProtocol { train_rate, trials, seed: solver.seed, normalize: input.normalize, methods };
            let result = run_bench(&data, &protocol, &solver.config())?;
            print!("{}", rows_to_csv(&result.rows));
            if let Some(p) = out {
                fs::write(p, serde_json::to_string_pretty(&result).map_err(Error::from)? + "\n")?;
            }
            Ok(())
        }
        Command::Grid { model, bbox, resolution, out } => {
            let (theta, _) = read_model(&model)?;
            let rows = boundary_grid(&theta, &bbox, resolution)?;
            emit(out.as_deref(), &grid_to_csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
