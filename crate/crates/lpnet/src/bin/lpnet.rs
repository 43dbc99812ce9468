//! Command-line front end: `train`, `eval`, `theorem1`, `inspect-archive`.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lpnet::archive::{inspect_archive, load_network};
use lpnet::config::ExperimentConfig;
use lpnet::experiment::{evaluate_network, load_data, run_experiment, run_theorem1};
use lpnet::model::Mode;
use lpnet::LpError;

#[derive(Parser)]
#[command(name = "lpnet", version, about = "Layered proximal network trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Syn,
    Asyn,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured update mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the per-class sample count.
    #[arg(long, value_name = "N")]
    subset: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Trains per the configuration and writes weights, metrics, summary.
    Train(RunArgs),
    /// Evaluates a stored weight archive with k-NN on the configured data.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Weight archive to evaluate; defaults to OUT/weights.lpnet.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Runs the single-goal forward-propagation experiment.
    Theorem1(RunArgs),
    /// Prints the contents summary of a weight archive.
    InspectArchive {
        /// Archive path.
        archive: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, LpError> {
    let mut cfg = ExperimentConfig::parse_file(&args.config).map_err(|e| match e {
        // An unreadable configuration file is a usage problem, not a
        // runtime failure.
        LpError::Io(io) => LpError::Config(format!("{}: {io}", args.config.display())),
        other => other,
    })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = match mode {
            ModeArg::Syn => Mode::Synchronous,
            ModeArg::Asyn => Mode::Asynchronous,
        };
    }
    if let Some(n) = args.subset {
        cfg.subset_per_class = Some(n);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), LpError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            let artifacts = run_experiment(&cfg, &args.out)?;
            println!("archive: {}", artifacts.archive.display());
            println!("metrics: {}", artifacts.metrics_csv.display());
            println!("summary: {}", artifacts.summary.display());
            match artifacts.accuracy {
                Some(acc) => println!("final_accuracy: {acc:.4}"),
                None => println!("final_accuracy: n/a (no test split configured)"),
            }
            Ok(())
        }
        Command::Eval { run: args, archive } => {
            let cfg = load_config(&args)?;
            let path = archive.unwrap_or_else(|| args.out.join("weights.lpnet"));
            let net = load_network(&path)?;
            let data = load_data(&cfg)?;
            match evaluate_network(&net, &data, cfg.knn_k)? {
                Some(acc) => println!("accuracy: {acc:.4}"),
                None => {
                    return Err(LpError::Config(
                        "eval requires a test split in the configuration".into(),
                    ))
                }
            }
            Ok(())
        }
        Command::Theorem1(args) => {
            let cfg = load_config(&args)?;
            let (path, values, first_below, violated) = run_theorem1(&cfg, &args.out)?;
            println!("goal_values: {}", path.display());
            if let Some(v) = values.last() {
                println!("final_goal_value: {v:.6e}");
            }
            match first_below {
                Some(i) => println!("first_below_epsilon: iteration {i}"),
                None => println!("first_below_epsilon: never"),
            }
            if violated {
                println!("note: lambda_b or lambda_f is zero at the goal level; no guarantee applies");
            }
            Ok(())
        }
        Command::InspectArchive { archive } => {
            let s = inspect_archive(&archive)?;
            println!("levels: {}", s.levels);
            println!(
                "dims: {}",
                s.dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            println!("tie_backward: {}", s.tie_backward);
            for (i, (tau, norm)) in s.thresholds.iter().zip(&s.forward_norms).enumerate() {
                println!("level {}: tau = {tau}, ||A||_F = {norm:.6}", i + 1);
            }
            println!("checksum: {:016x}", s.checksum);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits; bad usage is a
            // configuration error.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ LpError::Config(_)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
