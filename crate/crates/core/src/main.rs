//! Command-line front end: run scenarios and sweeps, render plots, validate
//! configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use uavcache::harness::config::{load_config, AgentKind, ScenarioConfig};
use uavcache::harness::plot::emit_plots;
use uavcache::harness::runner::run_experiment;
use uavcache::{Result, SimError};

/// Environment variable naming the output root directory.
const OUT_ENV: &str = "UAVCACHE_OUT";

#[derive(Parser)]
#[command(
    name = "uavcache",
    version,
    about = "Discrete-time simulator of a cache-enabling UAV NOMA cell"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-point scenario (rejects configs with a sweep section).
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every point of the sweep declared in the config.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render SVG plots from an experiment output directory.
    Plot { csv_dir: PathBuf, out_dir: PathBuf },
    /// Parse and validate a config, reporting the first problem found.
    Validate { config: PathBuf },
}

#[derive(clap::Args)]
struct Overrides {
    /// Replace the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of slots per run.
    #[arg(long)]
    slots: Option<u64>,
    /// Override the agent list (comma separated: ql,fa,greedy,fixed,random).
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Output directory (default: $UAVCACHE_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(slots) = self.slots {
            cfg.slots = slots;
        }
        if let Some(agents) = &self.agents {
            cfg.agents = agents
                .iter()
                .map(|a| AgentKind::from_str(a))
                .collect::<Result<Vec<_>>>()?;
        }
        cfg.validate()
    }

    fn out_root(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = load_config(&config)?;
            if cfg.sweep.is_some() {
                return Err(SimError::Validation(
                    "config declares a sweep; use the 'sweep' command".into(),
                ));
            }
            overrides.apply(&mut cfg)?;
            execute(&cfg, &overrides.out_root())
        }
        Command::Sweep { config, overrides } => {
            let mut cfg = load_config(&config)?;
            if cfg.sweep.is_none() {
                return Err(SimError::Validation(
                    "config declares no sweep; use the 'run' command".into(),
                ));
            }
            overrides.apply(&mut cfg)?;
            execute(&cfg, &overrides.out_root())
        }
        Command::Plot { csv_dir, out_dir } => {
            let files = emit_plots(&csv_dir, &out_dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!(
                "ok: scenario '{}' with {} users, {} contents, {} agent(s), {} seed(s)",
                cfg.scenario_id,
                cfg.env.num_users,
                cfg.env.num_contents,
                cfg.agents.len(),
                cfg.seeds.len()
            );
            Ok(())
        }
    }
}

fn execute(cfg: &ScenarioConfig, out_root: &Path) -> Result<()> {
    let out_dir = out_root.join(&cfg.scenario_id);
    let output = run_experiment(cfg, &out_dir)?;
    println!(
        "{} run(s) complete; summary at {}",
        output.summaries.len(),
        output.summary_file.display()
    );
    for row in &output.summaries {
        let point = if row.sweep_axis.is_empty() {
            String::new()
        } else {
            format!(" {}={}", row.sweep_axis, row.sweep_value)
        };
        println!(
            "  {}{} seed={}: final mean delay {:.4} s, hit ratio {:.3}",
            row.agent, point, row.seed, row.final_mean_cost_s, row.hit_ratio
        );
    }
    Ok(())
}
