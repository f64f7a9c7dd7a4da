use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netglm_cli::{cmd_bench, cmd_compare, cmd_fit, cmd_predict, cmd_simulate, CliError, CliResult, FitOptions, RunConfig};

#[derive(Parser)]
#[command(name = "netglm", version, about = "Bayesian network GLMs for multi-neuron spike trains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and its truth sidecar.
    Simulate,
    /// Fit a network model and store the chain.
    Fit {
        /// Continue the chain stored in this directory from its last checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Held-out predictive likelihood and recovery metrics for one chain.
    Predict,
    /// Rank several chains by held-out predictive likelihood.
    Compare,
    /// Per-phase sweep timings over a grid of sizes.
    Bench,
}

fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut log = |line: &str| eprintln!("{line}");
    match cli.command {
        Command::Simulate => {
            let r = cmd_simulate(&cfg, &cli.out)?;
            println!("wrote {} and {}", r.data_path.display(), r.truth_path.display());
        }
        Command::Fit { resume } => {
            let (out, opts) = match resume {
                Some(dir) => (dir, FitOptions { resume: true, ..Default::default() }),
                None => (cli.out.clone(), FitOptions::default()),
            };
            let chain = cmd_fit(&cfg, &out, opts, &mut log)?;
            println!("stored {} samples in {}", chain.len(), out.display());
        }
        Command::Predict => {
            let r = cmd_predict(&cfg, &cli.out)?;
            if let Some(c) = &r.comparison {
                print!("{}", c.table());
            }
            if let Some(rec) = r.recovery {
                let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
                println!("adjacency_auc {}", show(rec.auc));
                println!("distance_correlation {}", show(rec.distance.map(|d| d.correlation)));
                println!("type_coclustering {}", show(rec.types));
            }
        }
        Command::Compare => print!("{}", cmd_compare(&cfg, &cli.out)?.table()),
        Command::Bench => {
            cmd_bench(&cfg, &cli.out, &mut log)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netglm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
