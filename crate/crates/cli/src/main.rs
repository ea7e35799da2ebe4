//! detgeom command-line interface.
//!
//! Subcommands: loss-eval, grad-check, sim, eval, involution-check, layout.
//! Exit codes: 0 success, 1 validation/parse failure, 2 runtime failure.

mod commands;
mod config;
mod emit;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: flags, config files, data files. Exit code 1.
    Usage(String),
    /// The run itself failed: IO, numerical aborts, failed checks. Exit 2.
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "detgeom",
    version,
    about = "Bounding-box loss geometry, regression simulation and detection evaluation"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (wins over the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one loss on a box pair and print the component breakdown.
    LossEval {
        /// Ground-truth box as `cx,cy,w,h`.
        #[arg(long)]
        gt: String,
        /// Predicted box as `cx,cy,w,h`.
        #[arg(long)]
        pred: String,
        /// Loss kind (iou|giou|diou|ciou|eiou|siou|inner_iou|sib_iou).
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Shape-cost exponent sign (corrected|as_printed).
        #[arg(long)]
        shape_sign: Option<String>,
    },
    /// Compare analytic gradients against central finite differences.
    GradCheck {
        /// Loss kind or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        /// Number of sampled box pairs per kind.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Relative tolerance (> 0).
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Run the loss-convergence comparison and write trace CSVs.
    Sim,
    /// Evaluate predictions against a label directory.
    Eval {
        /// Directory of per-image label files.
        #[arg(long)]
        gt_dir: PathBuf,
        /// Prediction file.
        #[arg(long)]
        pred: PathBuf,
        /// Optional class-name table, one name per line.
        #[arg(long)]
        class_names: Option<PathBuf>,
        /// IoU thresholds for the headline mAP, comma separated
        /// (default 0.50,0.55,...,0.95).
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Check the involution operator against the brute-force oracle.
    InvolutionCheck {
        /// Tensor fixture to load (TNS4 format).
        #[arg(long, conflicts_with = "random")]
        fixture: Option<PathBuf>,
        /// Use a seeded random tensor instead of a fixture.
        #[arg(long)]
        random: bool,
        /// Tensor dims as `n,c,h,w` (with --random).
        #[arg(long)]
        dims: Option<String>,
        /// Kernel size (odd).
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Kernel groups.
        #[arg(long, default_value_t = 1)]
        g: usize,
        /// Kernel choice (identity|random); defaults to identity for
        /// fixtures and random otherwise.
        #[arg(long)]
        kernel: Option<String>,
    },
    /// Print the detection-head grid layout.
    Layout,
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("DETGEOM_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.resolve_seed(cli.seed);
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.clone());
    }

    match cli.command {
        Command::LossEval {
            ref gt,
            ref pred,
            ref kind,
            ratio,
            theta,
            epsilon,
            ref shape_sign,
        } => commands::loss_eval::run(
            &config,
            cli.quiet,
            gt,
            pred,
            kind.as_deref(),
            ratio,
            theta,
            epsilon,
            shape_sign.as_deref(),
        ),
        Command::GradCheck { ref kind, n, tol, step } => {
            commands::grad_check::run(&config, cli.quiet, kind, n, tol, step, cli.seed)
        }
        Command::Sim => commands::sim::run(&config, cli.quiet),
        Command::Eval {
            ref gt_dir,
            ref pred,
            ref class_names,
            ref thresholds,
        } => {
            if let Some(thresholds) = thresholds {
                config.metrics.iou_thresholds = thresholds.clone();
                config.validate()?;
            }
            commands::eval::run(&config, cli.quiet, gt_dir, pred, class_names.as_deref())
        }
        Command::InvolutionCheck {
            ref fixture,
            random,
            ref dims,
            k,
            g,
            ref kernel,
        } => commands::involution_check::run(
            cli.quiet,
            fixture.as_deref(),
            random,
            dims.as_deref(),
            k,
            g,
            kernel.as_deref(),
            cli.seed.unwrap_or(42),
        ),
        Command::Layout => commands::layout::run(&config, cli.quiet),
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version are not failures; everything else is bad usage
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
