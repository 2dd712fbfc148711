use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use thermosched_core::experiment::{report, run_experiment, sweep};
use thermosched_core::oracle::{oracle_check, TabularConfig, ToyParams};
use thermosched_core::sim::SimRng;
use thermosched_core::{ExperimentConfig, SchedulerKind};

#[derive(Parser)]
#[command(name = "thermosched", version, about = "Thermal-aware task scheduling experiments on NoC meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scheduler once per seed.
    Run(Common),
    /// Run the Cartesian grid of the `[sweep]` section and aggregate it.
    Sweep(Common),
    /// Compare the tabular learner with relative value iteration on the toy model.
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Learning updates.
        #[arg(long, default_value_t = 200_000)]
        updates: u64,
        /// Largest accepted relative gain error.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Print aggregate tables of a finished output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(k) = self.scheduler {
            cfg.scheduler = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let summaries = run_experiment(&cfg, args.workers)?;
            for s in &summaries {
                println!(
                    "{} {} lambda={} seed={}: avg peak {:.3} K, service {} s, energy {:.3} J, queue {:.3}",
                    s.scheduler,
                    s.mesh,
                    s.lambda,
                    s.seed,
                    s.avg_peak_k,
                    s.avg_service_s.map_or("-".to_string(), |v| format!("{v:.4}")),
                    s.total_dyn_energy_j,
                    s.mean_queue_len
                );
            }
            println!("artifacts written to {}", cfg.out_dir.display());
        }
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let outcome = sweep(&cfg, args.workers)?;
            print!("{}", outcome.tables);
            println!("{} runs; artifacts written to {}", outcome.runs, cfg.out_dir.display());
        }
        Command::OracleCheck { seed, updates, tolerance } => {
            let cfg = TabularConfig { updates, ..TabularConfig::default() };
            let rep = oracle_check(&ToyParams::default(), &cfg, &mut SimRng::seed_from_u64(seed))?;
            println!("rho* (value iteration)  {:.6}", rep.gain);
            println!("rho^ (tabular learner)  {:.6}", rep.gain_estimate);
            println!("relative error          {:.4}", rep.relative_error);
            println!(
                "policy agreement        {:.1}% ({}/{} decision states)",
                100.0 * rep.agreement(),
                rep.agreeing_states,
                rep.decision_states
            );
            println!("updates                 {}", rep.updates);
            if !rep.passed(tolerance) {
                println!("FAIL");
                return Ok(ExitCode::FAILURE);
            }
            println!("PASS");
        }
        Command::Report { out } => {
            let text = report(&out).with_context(|| format!("reading {}", out.display()))?;
            print!("{text}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
