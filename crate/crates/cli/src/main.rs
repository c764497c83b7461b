use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use powertrain_rpl::agent::AgentKind;
use powertrain_rpl::harness::output::{self, EvalSummary};
use powertrain_rpl::harness::{evaluate, load_cycle, train, AgentCheckpoint, RunConfig, TrainOptions};
use powertrain_rpl::plant::dataset::{save_powertrain, synthetic_powertrain};

#[derive(Parser)]
#[command(name = "rpl", about = "Truck powertrain simulator with residual and from-scratch MPO agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent on repeated noisy copies of a drive cycle
    Train {
        /// key = value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        agent: AgentKind,
        /// drive cycle CSV (time s, speed m/s)
        #[arg(long)]
        cycle: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// overrides training_cycles from the config
        #[arg(long)]
        cycles: Option<usize>,
        /// one learning-curve line per cycle on stderr
        #[arg(long)]
        verbose: bool,
    },
    /// Greedy evaluation of a checkpoint on noisy copies of each cycle
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        cycles: Vec<PathBuf>,
        #[arg(long, default_value_t = 25)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        /// noise seed; defaults to the training seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Plotting tables for a training run directory
    Plotdata {
        #[arg(long, num_args = 1.., required = true)]
        run: Vec<PathBuf>,
    },
    /// Write the bundled synthetic cycle, powertrain tables and default config
    ExportData {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_train(
    config: Option<&Path>,
    agent: AgentKind,
    cycle: &Path,
    seed: u64,
    out: &Path,
    cycles: Option<usize>,
    verbose: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    cfg.agent = agent;
    cfg.seed = seed;
    if let Some(n) = cycles {
        cfg.training_cycles = n;
    }
    cfg.validate()?;
    let cycle = load_cycle(cycle)?;
    let opts = TrainOptions {
        keep_train_logs: false,
        checkpoint_dir: Some(out.join("checkpoints")),
        verbose,
    };
    let outcome = train(&cfg, &cycle, &opts)?;
    let summary = output::write_train_run(out, &cfg, &outcome)?;
    println!(
        "{} seed {}: baseline {:.4} mpg, trained {}",
        cfg.agent,
        cfg.seed,
        summary.baseline.mpg,
        summary
            .trained
            .map(|m| format!("{:.4} mpg", m.mpg))
            .unwrap_or_else(|| summary.trained_status.as_str().into())
    );
    Ok(())
}

fn run_evaluate(checkpoint: &Path, cycles: &[PathBuf], reps: usize, out: &Path, seed: Option<u64>) -> Result<()> {
    if reps == 0 {
        bail!("--reps must be at least 1");
    }
    let ck = AgentCheckpoint::load(checkpoint)?;
    let (agent, cfg) = ck.restore()?;
    let cycles = cycles
        .iter()
        .map(|p| load_cycle(p).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let seed = seed.unwrap_or(cfg.seed);
    let summaries = evaluate(&agent, &cfg, &cycles, reps, seed)?;
    for s in &summaries {
        println!(
            "{}: mpg {:.4} ± {:.4}, accel rmse {:.4} ± {:.4}, shifts {:.1} ± {:.1}, travel time {:.1} ± {:.1} s, failures {}",
            s.cycle,
            s.mpg.mean,
            s.mpg.std,
            s.accel_rmse.mean,
            s.accel_rmse.std,
            s.shift_count.mean,
            s.shift_count.std,
            s.travel_time.mean,
            s.travel_time.std,
            s.failures
        );
    }
    output::write_eval_run(
        out,
        &EvalSummary {
            agent: agent.kind,
            checkpoint: checkpoint.display().to_string(),
            reps,
            seed,
            cycles: summaries,
        },
    )?;
    Ok(())
}

fn run_export(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let cycle = powertrain_rpl::harness::synthetic_urban_cycle();
    std::fs::write(out.join("synthetic_urban.csv"), cycle.to_csv())?;
    save_powertrain(&out.join("powertrain"), &synthetic_powertrain())?;
    std::fs::write(out.join("default.cfg"), RunConfig::default().to_text())?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            agent,
            cycle,
            seed,
            out,
            cycles,
            verbose,
        } => run_train(config.as_deref(), agent, &cycle, seed, &out, cycles, verbose),
        Command::Evaluate {
            checkpoint,
            cycles,
            reps,
            out,
            seed,
        } => run_evaluate(&checkpoint, &cycles, reps, &out, seed),
        Command::Plotdata { run } => {
            for dir in &run {
                let files = output::plotdata(dir)?;
                println!("{}", files.learning_curve.display());
                if let Some(p) = files.timeseries {
                    println!("{}", p.display());
                }
            }
            Ok(())
        }
        Command::ExportData { out } => run_export(&out),
    }
}
