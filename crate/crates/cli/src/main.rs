//! `fam`: simulate, fit, cross-validate, evaluate and reproduce experiments.
//!
//! Reports go to stdout as `key=value` lines or CSV; diagnostics go to stderr.
//! Exit codes: 0 success, 1 runtime or convergence failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fam_core::experiment::{
    cross_validate_default, fit_method, lambda_max, run_reproduce, write_reproduce_outputs, ExperimentKind,
    FittedModel, Method, ReproduceConfig,
};
use fam_core::io::{
    read_model, read_observations, read_truth, write_gaussian_model, write_model, write_observations, write_truth,
    ObservationFormat, ReadOptions, StoredModel,
};
use fam_core::simulate::{make_ground_truth, make_sampling, sample_observations, SamplingKind};
use fam_core::{
    frobenius_error, hellinger_sq, kl_divergence, prediction_error, EvalReport, FamError, FitConfig, LabelEncoding,
    ObservationSet, ProbabilityField, StopReason,
};

#[derive(Parser)]
#[command(name = "fam", version, about = "Low-rank matrix completion over a finite alphabet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Uniform,
    Product,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Movielens,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Logit,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Kv,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Fig1,
    Table2,
    Table3,
}

#[derive(clap::Args)]
struct ObsArgs {
    /// Observation file
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Row count (default: largest row index + 1)
    #[arg(long)]
    rows: Option<usize>,
    /// Column count (default: largest column index + 1)
    #[arg(long)]
    cols: Option<usize>,
    /// Number of labels (default: largest label, or 5 for MovieLens)
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "logit")]
    link: LinkArg,
    /// Comma-separated real value of each label for the Gaussian link (default 1,2,..,p)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a low-rank truth and iid labelled observations
    Simulate {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma_scale: f64,
        #[arg(long)]
        n_obs: usize,
        #[arg(long, value_enum, default_value = "uniform")]
        sampling: Sampling,
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_obs: PathBuf,
        #[arg(long)]
        out_truth: PathBuf,
    },
    /// Fit one model at a given lambda
    Fit {
        #[command(flatten)]
        data: ObsArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Choose lambda by k-fold cross-validation on a geometric grid
    Cv {
        #[command(flatten)]
        data: ObsArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Write the per-lambda table here and print a key=value summary instead of the table
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a fitted model with a truth file and/or a test set
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        test_obs: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        test_format: Format,
        #[arg(long, value_enum, default_value = "kv")]
        out: OutFormat,
    },
    /// Run the simulation, cross-validation, fit and evaluation pipeline
    Reproduce {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long, default_value_t = 1.0 / 6.0)]
        scale: f64,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated training sizes (default: the experiment's sizes at this scale)
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1.0)]
        gamma_scale: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 20_000)]
        test_size: usize,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<FamError> for Failure {
    fn from(e: FamError) -> Self {
        match e {
            FamError::InvalidArgument(_) | FamError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_obs(args: &ObsArgs) -> Result<ObservationSet, Failure> {
    let format = match args.format {
        Format::Csv => ObservationFormat::Csv,
        Format::Movielens => ObservationFormat::MovieLens,
    };
    let opts = ReadOptions {
        rows: args.rows,
        cols: args.cols,
        classes: args.classes,
    };
    read_observations(&args.obs, format, opts).map_err(|e| Failure::Runtime(format!("{}: {e}", args.obs.display())))
}

fn method(solver: &SolverArgs, classes: usize) -> Result<Method<f64>, Failure> {
    match (solver.link, &solver.levels) {
        (LinkArg::Logit, None) => Ok(Method::Logit),
        (LinkArg::Logit, Some(_)) => Err(usage("--levels applies to the gaussian link only")),
        (LinkArg::Gaussian, None) => Ok(Method::Gaussian(LabelEncoding::identity(classes))),
        (LinkArg::Gaussian, Some(levels)) => {
            if levels.len() != classes {
                return Err(usage(format!("--levels has {} values for {classes} classes", levels.len())));
            }
            Ok(Method::Gaussian(LabelEncoding::new(levels.clone())?))
        }
    }
}

fn config(solver: &SolverArgs, lambda: f64) -> Result<FitConfig, Failure> {
    let cfg = FitConfig::new(lambda)
        .with_epsilon(solver.eps)
        .with_max_iters(solver.max_iters)
        .with_seed(solver.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate {
            rows,
            cols,
            classes,
            rank,
            gamma_scale,
            n_obs,
            sampling,
            skew,
            seed,
            out_obs,
            out_truth,
        } => {
            if rows == 0 || cols == 0 {
                return Err(usage("--rows and --cols must be positive"));
            }
            if rank > rows.min(cols) {
                return Err(usage(format!("--rank {rank} exceeds min(--rows, --cols) = {}", rows.min(cols))));
            }
            if classes < 2 {
                return Err(usage("--classes must be at least 2"));
            }
            if n_obs == 0 {
                return Err(usage("--n-obs must be positive"));
            }
            let kind = match sampling {
                Sampling::Uniform => SamplingKind::Uniform,
                Sampling::Product => SamplingKind::Product,
            };
            let truth = make_ground_truth(rows, cols, classes, rank, gamma_scale, seed)?;
            let dist = make_sampling(kind, rows, cols, skew, seed.wrapping_add(1))?;
            let obs = sample_observations(&truth, &dist, n_obs, seed.wrapping_add(2))?;
            write_observations(&out_obs, &obs)?;
            write_truth(&out_truth, &truth)?;
            println!("rows={rows}\ncols={cols}\nclasses={classes}\nn_obs={n_obs}");
            println!("mu={}\nl_c={}", dist.mu(), dist.l_c());
            Ok(())
        }
        Command::Fit {
            data,
            solver,
            lambda,
            out_model,
        } => {
            let obs = read_obs(&data)?;
            let method = method(&solver, obs.classes())?;
            let cfg = config(&solver, lambda)?;
            let (model, report) = fit_method(&obs, &method, &cfg)?;
            match &model {
                FittedModel::Logit(m) => write_model(&out_model, m, lambda)?,
                FittedModel::Gaussian(m) => write_gaussian_model(&out_model, m, lambda)?,
            }
            println!("objective={}", report.final_objective());
            println!("iterations={}", report.iterations);
            println!("atoms={}", model.atom_count());
            println!("stop_reason={}", report.stop_reason);
            if let FittedModel::Gaussian(m) = &model {
                println!("sigma_hat={}", m.sigma_hat());
            }
            match report.stop_reason {
                StopReason::DualityGapMet | StopReason::ObjectiveConverged => Ok(()),
                other => Err(Failure::Runtime(format!("solver stopped without meeting the gap tests ({other})"))),
            }
        }
        Command::Cv {
            data,
            solver,
            folds,
            out,
        } => {
            let obs = read_obs(&data)?;
            let method = method(&solver, obs.classes())?;
            let cfg = config(&solver, 1.0)?;
            if folds < 2 || folds > obs.len() {
                return Err(usage(format!("--folds must lie in 2..={}", obs.len())));
            }
            let lmax = lambda_max(&obs, &method, &cfg)?;
            eprintln!("fam: cross-validating {} lambdas over {folds} folds", fam_core::experiment::grid_size(obs.len()));
            let cv = cross_validate_default(&obs, &method, folds, &cfg)?;
            match out {
                Some(path) => {
                    fam_core::io::write_atomic(&path, &cv.to_csv())?;
                    println!("best_lambda={}\nlambda_max={lmax}\ngrid_size={}", cv.best_lambda, cv.rows.len());
                }
                None => {
                    println!("lambda,mean_val_loss,sd,selected");
                    for row in &cv.rows {
                        let chosen = u8::from(row.lambda == cv.best_lambda);
                        println!("{},{},{},{chosen}", row.lambda, row.mean_val_loss, row.sd);
                    }
                }
            }
            Ok(())
        }
        Command::Eval {
            model,
            classes,
            truth,
            test_obs,
            test_format,
            out,
        } => {
            if truth.is_none() && test_obs.is_none() {
                return Err(usage("eval needs --truth and/or --test-obs"));
            }
            let stored = read_model::<f64>(&model).map_err(|e| Failure::Runtime(format!("{}: {e}", model.display())))?;
            let (field, params, shape) = match &stored {
                StoredModel::Logit { model, .. } => (
                    model.probability_field(),
                    Some(model.densify()),
                    (model.rows(), model.cols(), model.classes()),
                ),
                StoredModel::Gaussian { model, .. } => {
                    (model.probability_field(), None, (model.rows(), model.cols(), model.classes()))
                }
            };
            if let Some(p) = classes {
                if p != shape.2 {
                    return Err(usage(format!("--classes {p} but the model has {} classes", shape.2)));
                }
            }
            let mut report = EvalReport::default();
            if let Some(path) = truth {
                let truth = read_truth::<f64>(&path)?;
                let truth_field = ProbabilityField::from_params(&truth)?;
                report.kl = Some(kl_divergence(&truth_field, &field)?);
                report.hellinger_sq = Some(hellinger_sq(&truth_field, &field)?);
                if let Some(est) = &params {
                    report.frobenius_sq_normalized = Some(frobenius_error(&truth, est)?);
                }
            }
            if let Some(path) = test_obs {
                let format = match test_format {
                    Format::Csv => ObservationFormat::Csv,
                    Format::Movielens => ObservationFormat::MovieLens,
                };
                let opts = ReadOptions {
                    rows: Some(shape.0),
                    cols: Some(shape.1),
                    classes: Some(shape.2),
                };
                let test = read_observations(&path, format, opts)?;
                report.prediction_error = Some(prediction_error(&field, &test)?);
            }
            match out {
                OutFormat::Kv => print!("{}", report.to_kv()),
                OutFormat::Csv => println!("{}\n{}", EvalReport::<f64>::csv_header(), report.to_csv_row()),
            }
            Ok(())
        }
        Command::Reproduce {
            experiment,
            scale,
            seeds,
            out,
            n,
            gamma_scale,
            folds,
            eps,
            max_iters,
            test_size,
        } => {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(usage("--scale must lie in (0, 1]"));
            }
            if seeds == 0 {
                return Err(usage("--seeds must be positive"));
            }
            let (kind, name) = match experiment {
                Experiment::Fig1 => (ExperimentKind::Fig1, "fig1"),
                Experiment::Table2 => (ExperimentKind::Table2, "table2"),
                Experiment::Table3 => (ExperimentKind::Table3, "table3"),
            };
            let mut cfg = ReproduceConfig::new(kind, scale);
            cfg.seeds = seeds;
            cfg.n_values = n;
            cfg.gamma_scale = gamma_scale;
            cfg.folds = folds;
            cfg.epsilon = eps;
            cfg.max_iters = max_iters;
            cfg.test_size = test_size;
            let (m1, m2) = cfg.dims();
            eprintln!("fam: {name} on {m1}x{m2}, n in {:?}, {seeds} seeds", cfg.n_list());
            let results = run_reproduce(&cfg)?;
            write_reproduce_outputs(&out, name, &results)?;
            println!("rows={m1}\ncols={m2}\ncells={}", results.len());
            println!("per_seed={}", out.join(format!("{name}_per_seed.csv")).display());
            println!("averaged={}", out.join(format!("{name}_averaged.csv")).display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("FAM_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("fam: could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("fam: FAM_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("fam: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("fam: {msg}");
            ExitCode::from(1)
        }
    }
}
