use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fpg_core::agents::{AllyKind, OpponentKind};
use fpg_core::config::ScenarioConfig;
use fpg_core::experiment::{self, PlannerFactory};
use fpg_core::planner::mock::{MockFixture, MockLlmServer};
use fpg_core::planner::PlannerMode;

#[derive(Parser, Debug)]
#[command(name = "fpg", version, about = "UAV frequency-point jamming game simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Play a scenario and write its log, metrics and manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Parameter checkpoint for agents of kind `maddpg`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the learned agents (the ally defaults to `maddpg`).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the ablation matrix and write a comparison table.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds per cell, starting at the scenario seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Recompute metric tables from a stored log.
    Replay {
        /// Log file written by `run` or `train`.
        log: PathBuf,
        /// Scenario used for the SNR threshold; defaults to the config.toml
        /// next to the log.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "replay")]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PlannerArg {
    Llm,
    Heuristic,
    Pattern,
}

impl From<PlannerArg> for PlannerMode {
    fn from(p: PlannerArg) -> Self {
        match p {
            PlannerArg::Llm => PlannerMode::Llm,
            PlannerArg::Heuristic => PlannerMode::Heuristic,
            PlannerArg::Pattern => PlannerMode::Pattern,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ticks to simulate (training steps for `train`).
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum)]
    planner: Option<PlannerArg>,
    /// Serve model replies from a local mock loaded from this JSON fixture.
    #[arg(long, value_name = "FIXTURE")]
    mock_llm: Option<PathBuf>,
    /// Root directory for timestamped output directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Dotted-path override, e.g. `--set radio.P_base=45`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut s = ScenarioConfig::load_with_overrides(self.config.as_deref(), &self.overrides)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(p) = self.planner {
            s.planner.mode = p.into();
        }
        s.validate()?;
        Ok(s)
    }

    /// The planner factory plus the mock server it points at, which must
    /// stay alive for the duration of the command.
    fn planners(&self) -> Result<(PlannerFactory, Option<MockLlmServer>)> {
        let factory = PlannerFactory::from_env();
        match &self.mock_llm {
            Some(path) => {
                let server = MockLlmServer::start(MockFixture::load(path)?)?;
                Ok((factory.with_mock(server.endpoint()), Some(server)))
            }
            None => Ok((factory, None)),
        }
    }
}

fn replay_threshold(log: &Path, config: Option<&Path>) -> Result<f64> {
    let sibling = log.parent().map(|d| d.join("config.toml")).filter(|p| p.exists());
    let scenario = match config.map(Path::to_path_buf).or(sibling) {
        Some(p) => ScenarioConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    Ok(scenario.costs.snr_threshold_db)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = execute(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, checkpoint } => {
            let scenario = common.scenario()?;
            let (factory, _mock) = common.planners()?;
            let report = experiment::run(&scenario, &factory, common.steps, checkpoint.as_deref(), &common.out)?;
            println!("{}", report.dir.display());
            println!(
                "steps {}  mean ally reward {:.3}  mean opponent reward {:.3}  overlap {:.2}%  success {:.2}%",
                report.steps,
                report.mean_r_ally(),
                report.mean_r_opponent(),
                report.tables.overlap_pct,
                report.tables.success_pct
            );
        }
        Command::Train { common } => {
            let mut scenario = common.scenario()?;
            if scenario.agents.ally != AllyKind::Maddpg && scenario.agents.opponent != OpponentKind::Maddpg {
                scenario.agents.ally = AllyKind::Maddpg;
            }
            let (factory, _mock) = common.planners()?;
            let report = experiment::train_cmd(&scenario, &factory, common.steps, &common.out)?;
            println!("{}", report.dir.display());
            println!("episodes {}  updates {}", report.curves.len(), report.updates);
            if let Some(last) = report.curves.last() {
                println!("last episode mean ally reward {:.3}", last.mean_r_ally);
            }
        }
        Command::Ablate { common, seeds } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let scenario = common.scenario()?;
            let (factory, _mock) = common.planners()?;
            let list: Vec<u64> = (0..seeds).map(|k| scenario.seed + k).collect();
            let (dir, rows) = experiment::ablate(&scenario, &factory, &list, common.steps, &common.out)?;
            println!("{}", dir.display());
            println!("{:<32} {:>12} {:>12} {:>9} {:>9}", "cell", "ally", "opponent", "overlap%", "success%");
            for r in &rows {
                match &r.error {
                    Some(e) => println!("{:<32} error: {e}", r.cell),
                    None => println!(
                        "{:<32} {:>12.3} {:>12.3} {:>9.2} {:>9.2}",
                        r.cell, r.mean_r_ally, r.mean_r_opponent, r.overlap_pct, r.success_pct
                    ),
                }
            }
        }
        Command::Replay { log, config, out } => {
            let m = replay_threshold(&log, config.as_deref())?;
            let tables = experiment::replay(&log, m, &out)?;
            println!("{}", out.display());
            println!("overlap {:.2}%  success {:.2}%", tables.overlap_pct, tables.success_pct);
        }
    }
    Ok(())
}
