use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swarmsense::harness::{self, ExperimentConfig};
use swarmsense::par::Execution;
use swarmsense::plangen;
use swarmsense::rl::Checkpoint;
use swarmsense::scenario;
use swarmsense::sim::Method;
use swarmsense::Error;

#[derive(Parser)]
#[command(name = "swarmsense", version, about = "Drone-swarm spatio-temporal sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario utilities.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    /// Train (learning methods) and evaluate every configured method and seed.
    Run(ConfigArgs),
    /// Train learning methods and write their checkpoints.
    Train(ConfigArgs),
    /// Evaluate on the held-out periods, loading checkpoints for learning methods.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint to load (defaults to the run directory's checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Join completed runs into a mean ± std table.
    Compare {
        /// Run directories or metrics.csv files.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Allow runs from different configs.
        #[arg(long)]
        force: bool,
        /// Write here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Plan utilities.
    Plans {
        #[command(subcommand)]
        action: PlansCmd,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Write the required-value field as a traffic CSV.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PlansCmd {
    /// Generate every drone's plan set at its home station and write it as CSV.
    Export {
        #[command(flatten)]
        config: ConfigArgs,
        /// 1-based period.
        #[arg(long, default_value_t = 1)]
        period: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Built-in preset (basic or desk) used when no file is given.
    #[arg(long, default_value = "basic")]
    preset: String,
    /// Override `methods` with one method.
    #[arg(long)]
    method: Option<Method>,
    /// Override `seeds` (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Override `rl.episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Override `output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn load(&self) -> swarmsense::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(&self.preset)?,
        };
        if let Some(m) = self.method {
            cfg.methods = vec![m];
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(e) = self.episodes {
            cfg.rl.episodes = e;
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cmd: Command) -> swarmsense::Result<()> {
    match cmd {
        Command::Scenario {
            action: ScenarioCmd::Gen { config, out },
        } => {
            let cfg = config.load()?;
            let seed = cfg.seeds[0];
            let (_, _, field) = harness::build_scenario(&cfg, seed)?;
            scenario::export_traffic_csv(&out, &field)?;
            println!("{} scenario_hash={}", out.display(), harness::scenario_hash(&field));
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            for r in harness::run_experiment(&cfg)? {
                println!(
                    "{} seed={} overall={:.4} mean_energy={:.4} -> {}",
                    r.method,
                    r.seed,
                    r.overall(),
                    r.mean_energy(),
                    r.dir.display()
                );
            }
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            for point in cfg.expand()? {
                for &seed in &point.seeds {
                    let world = harness::build_world(&point, seed)?;
                    for &m in point.methods.iter().filter(|m| m.learns()) {
                        let dir = harness::run_dir(&point, seed, m);
                        let (_, log) = harness::train_method(&point, &world, m, &dir)?;
                        let last = log.last().map_or(f64::NAN, |l| l.mean_reward);
                        println!("{m} seed={seed} episodes={} last_reward={last:.4} -> {}", log.len(), dir.display());
                    }
                }
            }
        }
        Command::Eval { config, checkpoint } => {
            let cfg = config.load()?;
            for point in cfg.expand()? {
                for &seed in &point.seeds {
                    let world = harness::build_world(&point, seed)?;
                    for &m in &point.methods {
                        let dir = harness::run_dir(&point, seed, m);
                        let mut coord = if m.learns() {
                            let path = checkpoint.clone().unwrap_or_else(|| dir.join("checkpoint.json"));
                            let ckpt = Checkpoint::load(&path)?;
                            if ckpt.config_hash != point.hash() {
                                log::warn!("{} was trained under config {}", path.display(), ckpt.config_hash);
                            }
                            harness::restore(&world, m, point.rl.ppo, &ckpt)?
                        } else {
                            harness::coordinator(&world, m, point.rl.ppo)
                        };
                        let out = harness::evaluate_method(&point, &world, coord.as_mut(), &dir)?;
                        let overall: f64 = out.metrics.iter().map(|p| p.overall_sum()).sum();
                        println!("{m} seed={seed} overall={overall:.4} -> {}", dir.display());
                    }
                }
            }
        }
        Command::Compare { dirs, force, out } => {
            let table = harness::compare(&dirs, force)?;
            match out {
                Some(p) => std::fs::write(p, table)?,
                None => print!("{table}"),
            }
        }
        Command::Plans {
            action: PlansCmd::Export { config, period, out },
        } => {
            let cfg = config.load()?;
            let world = harness::build_world(&cfg, cfg.seeds[0])?;
            if period == 0 || period > world.time.periods {
                return Err(Error::Config(format!("period must be in 1..={}", world.time.periods)));
            }
            let homes: Vec<usize> = world.fleet.drones().iter().map(|d| d.home_station).collect();
            let groups = world.plan_groups(0, period, &homes)?;
            let rows: Vec<(usize, &[plangen::PlanGroup])> =
                groups.iter().enumerate().map(|(u, g)| (u, g.as_slice())).collect();
            plangen::export_plans_csv(&out, &rows)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}
