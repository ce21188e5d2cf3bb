use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ammsb::config::{RunConfig, SynthConfig};
use ammsb::experiment::{evaluate_checkpoint, make_synthetic, run_experiment};
use ammsb::state::DEFAULT_DELTA;

/// Stochastic-gradient MCMC for assortative mixed-membership blockmodels.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sampler described by a config file.
    Run { config: PathBuf },
    /// Generate a synthetic graph and its ground truth.
    Synth { config: PathBuf },
    /// Held-out perplexity of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        /// Pair file with `a b y` lines, as written to `heldout.txt` by `run`.
        heldout: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            let summary = run_experiment(&cfg)?;
            match summary.perplexity {
                Some(p) => println!("perplexity {p:.6} (constant-rate baseline {:.6})", summary.baseline_perplexity),
                None => println!("no samples absorbed; raise max_iters or lower burn_in"),
            }
            if let Some(r) = summary.mem_ratio {
                println!("memory ratio {r:.4}");
            }
            if let Some(r) = summary.accept_rate {
                println!("acceptance rate {r:.4}");
            }
            println!("sampling time {:.3}s, outputs in {}", summary.sampling_seconds, summary.out_dir.display());
        }
        Command::Synth { config } => {
            let cfg = SynthConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            let report = make_synthetic(&cfg)?;
            println!(
                "{} nodes, {} links, density {:.4}; wrote {} and {}",
                report.nodes,
                report.links,
                report.density,
                report.edges_path.display(),
                report.truth_path.display()
            );
        }
        Command::Eval {
            checkpoint,
            heldout,
            delta,
        } => {
            let p = evaluate_checkpoint(&checkpoint, &heldout, delta)?;
            println!("perplexity {p:.6}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
