use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use mtl2rl_core::harness::{self, ExperimentConfig, Method, Summary};

/// Lifelong policy-gradient learning for a two-pair energy-harvesting
/// sensor network, compared against cold-start RL and a Lyapunov controller.
#[derive(Debug, Parser)]
#[command(name = "mtl2rl", version, about)]
struct Cli {
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to every available core.
    #[arg(long, global = true, env = "MTL2RL_THREADS")]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "MTL2RL_OUT_DIR", default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learns the knowledge base on fresh training tasks and saves it.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Runs every method on the test tasks against a saved knowledge base.
    Test {
        #[command(flatten)]
        config: ConfigArg,
        /// Snapshot written by `train`.
        #[arg(long)]
        kb: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Training followed by testing, all artifacts in one directory.
    RunAll {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Recomputes the summary and averaged curves of a finished test run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Prints the effective configuration as TOML.
    Config {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn load_config(arg: &ConfigArg, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match &arg.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &Summary) {
    println!(
        "{:>4}  {:>10}  {:>12}  {:>12}  {:>12}  {:>8}  {:>13}",
        "task", "method", "conv (mean)", "conv (std)", "final", "speedup", "faster than"
    );
    for t in &summary.tasks {
        for (m, s) in &t.methods {
            let (speedup, pct) = if *m == Method::MtL2rl {
                (format!("{:.2}x", t.speedup_vs_vanilla), format!("{:+.0}%", t.faster_pct_vs_vanilla))
            } else {
                (String::new(), String::new())
            };
            println!(
                "{:>4}  {:>10}  {:>12.1}  {:>12.1}  {:>12.4e}  {:>8}  {:>13}",
                t.task_id,
                m.tag(),
                s.mean_convergence_iteration,
                s.std_convergence_iteration,
                s.mean_final_return,
                speedup,
                pct
            );
        }
    }
    let [lo, hi] = summary.reference_faster_pct;
    println!(
        "mean speedup vs vanilla {:.3}; faster on {}/{} tasks; at least the controller on {}/{} (reference claim {lo:.0}-{hi:.0}% faster)",
        summary.mean_speedup_vs_vanilla,
        summary.tasks_faster_than_vanilla,
        summary.tasks.len(),
        summary.tasks_at_least_lyapunov,
        summary.tasks.len()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let t0 = Instant::now();
            let training = harness::run_training(&cfg)?;
            harness::write_training(&out.out, &cfg, &training)?;
            println!(
                "trained on {} tasks ({} skipped) in {:.1}s; snapshot {}",
                training.outcome.tasks.len(),
                training.outcome.skipped.len(),
                t0.elapsed().as_secs_f64(),
                out.out.join(harness::KB_FILE).display()
            );
        }
        Command::Test { config, kb, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let (kb, header) = harness::load_kb(&kb).with_context(|| format!("loading {}", kb.display()))?;
            info!("snapshot from master seed {} over {} tasks", header.master_seed, header.tasks_seen);
            let records = harness::run_testing(&cfg, &kb)?;
            print_summary(&harness::write_testing(&out.out, &cfg, &records)?);
        }
        Command::RunAll { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let t0 = Instant::now();
            let outcome = harness::run_experiment(&cfg, &out.out)?;
            print_summary(&outcome.summary);
            println!("finished in {:.1}s; artifacts in {}", t0.elapsed().as_secs_f64(), out.out.display());
        }
        Command::Report { input } => {
            if !input.join(harness::CURVES_FILE).exists() {
                bail!("{} has no {}", input.display(), harness::CURVES_FILE);
            }
            print_summary(&harness::report(&input)?);
        }
        Command::Config { config } => print!("{}", load_config(&config, cli.seed)?.to_toml_string()?),
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    init_threads(cli.threads)?;
    run(cli)
}
