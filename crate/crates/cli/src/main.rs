//! Command-line driver: train a controller, run episodes, sweep the
//! sensing/communication trade-off, or produce the per-mode distributions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use isac_twin::agent::{train, BeliefEnv, Controller, EnergyPumping, PolicyCheckpoint, TrainConfig};
use isac_twin::allocator::AllocationMode;
use isac_twin::sim::{self, io, run_experiment, tradeoff_sweep, Scenario, ScenarioConfig, SensingMode};

#[derive(Parser)]
#[command(name = "isac-twin", version, about = "ISAC digital-twin simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller and write `policy.json` and `curve.csv`.
    Train(TrainArgs),
    /// Run episodes under one allocator mode.
    Run(RunArgs),
    /// Write the certainty/rate trade-off for fixed distances.
    Sweep(CommonArgs),
    /// Run every allocator mode and write all distribution tables.
    Cdf(RunArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat TOML scenario; defaults apply to missing keys.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Allocator mode for `run` (ignored by `cdf`).
    #[arg(long)]
    mode: Option<AllocationMode>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Trained checkpoint; without it a scripted energy-pumping controller
    /// requesting `1 / xi^2` is used.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    sensing: Option<SensingMode>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Environment steps; defaults to the training configuration's budget.
    #[arg(long)]
    steps: Option<usize>,
    /// Train on exact observations with no accuracy cost.
    #[arg(long)]
    perfect: bool,
}

fn load_scenario(args: &CommonArgs) -> Result<Scenario> {
    let mut cfg = match &args.scenario {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading scenario {}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(Scenario::new(cfg)?)
}

fn controller(policy: Option<&Path>, scenario: &Scenario) -> Result<Box<dyn Controller>> {
    Ok(match policy {
        Some(p) => {
            let ckpt = PolicyCheckpoint::load(p).with_context(|| format!("loading policy {}", p.display()))?;
            Box::new(ckpt.into_policy()?) as Box<dyn Controller>
        }
        None => {
            let xi = scenario.config().xi;
            Box::new(EnergyPumping { eta: 1.0 / (xi * xi) })
        }
    })
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let scenario = load_scenario(&args.common)?;
    let cfg = scenario.config();
    let mut train_cfg = TrainConfig {
        kappa: cfg.kappa,
        eta_cost_sign: cfg.eta_cost_sign,
        ..TrainConfig::default()
    };
    if let Some(steps) = args.steps {
        train_cfg.total_steps = steps;
    }
    let mut env = if args.perfect {
        BeliefEnv::perfect()
    } else {
        sim::training_env(&scenario)?
    };
    env.episode_cap = cfg.episode_cap;
    let outcome = train(&mut env, &train_cfg, cfg.seed)?;
    fs::create_dir_all(&args.common.out)?;
    let path = args.common.out.join("policy.json");
    outcome.policy.to_checkpoint(&train_cfg).save(&path)?;

    io::write_curve_csv(&args.common.out.join("curve.csv"), &outcome.curve)?;
    println!(
        "trained {} steps: eval success {:.2}, mean eta {:.1}; policy written to {}",
        outcome.env_steps,
        outcome.best_eval.success_rate,
        outcome.best_eval.mean_eta,
        path.display()
    );
    Ok(())
}

fn run_modes(args: &RunArgs, modes: &[AllocationMode]) -> Result<()> {
    let scenario = load_scenario(&args.common)?;
    let cfg = scenario.config();
    let scenario = scenario.with_modes(cfg.allocator_mode, args.sensing.unwrap_or(cfg.sensing));
    let ctrl = controller(args.policy.as_deref(), &scenario)?;
    let report = run_experiment(&scenario, ctrl.as_ref(), args.episodes, modes)?;
    io::write_report(&args.common.out, &report)?;
    for s in &report.summaries {
        println!(
            "{:<5} success {:.3}  rate met {:.3}  median QIs {:>6.1}  mean rate {:.3e} bit/s",
            s.mode.to_string(),
            s.success_rate,
            s.rate_met_fraction,
            s.median_qis_to_goal,
            s.mean_rate
        );
    }
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let scenario = load_scenario(args)?;
    fs::create_dir_all(&args.out)?;
    let rows = tradeoff_sweep(&scenario, &sim::TRADEOFF_RANGES)?;
    let path = args.out.join("tradeoff.csv");
    io::write_tradeoff_csv(&path, &rows)?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Run(a) => {
            let mode = match a.mode {
                Some(m) => m,
                None => load_scenario(&a.common)?.config().allocator_mode,
            };
            run_modes(a, &[mode])
        }
        Command::Sweep(a) => cmd_sweep(a),
        Command::Cdf(a) => run_modes(a, &AllocationMode::ALL),
    }
}
