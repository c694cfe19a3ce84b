//! Experiment execution: one environment per (sweep point, agent, seed),
//! per-run CSV streams and a summary table.
//!
//! All agents at the same (sweep point, seed) drive environments built from
//! the identical seed, so their request and mobility randomness is paired.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::baselines::{run_fixed, run_greedy, run_random};
use crate::agents::fa::{run_fa, FaHyper};
use crate::agents::qlearning::{run_qlearning, QlHyper, QTable};
use crate::env::{Env, EnvConfig};
use crate::error::{Result, SimError};
use crate::harness::config::{AgentKind, ScenarioConfig};
use crate::harness::metrics::{DelayTrace, RunSummary};
use crate::mix_seed;

/// Outcome of one (sweep point, agent, seed) run.
pub struct RunResult {
    pub trace: DelayTrace,
    pub request_hash: u64,
}

/// Runs a single agent on a fresh environment.
pub fn run_agent(
    env_cfg: &EnvConfig,
    agent: AgentKind,
    seed: u64,
    slots: u64,
    ql: &QlHyper,
    fa: &FaHyper,
) -> Result<RunResult> {
    let mut env = Env::new(env_cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, agent.seed_salt()));
    let trace = match agent {
        AgentKind::Ql => {
            let mut table = QTable::new(ql.clone())?;
            run_qlearning(&mut env, &mut table, slots, &mut rng)?
        }
        AgentKind::Fa => run_fa(&mut env, fa, slots, &mut rng)?.1,
        AgentKind::Greedy => run_greedy(&mut env, slots)?,
        AgentKind::Fixed => run_fixed(&mut env, slots)?,
        AgentKind::Random => run_random(&mut env, slots, &mut rng)?,
    };
    Ok(RunResult {
        trace,
        request_hash: env.request_stream_hash(),
    })
}

/// Everything `run_experiment` leaves on disk.
pub struct ExperimentOutput {
    pub summaries: Vec<RunSummary>,
    pub run_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

/// Number of trailing slots used for final-window statistics: the last
/// fifth of the run.
pub fn final_window(slots: u64) -> usize {
    ((slots / 5).max(1)) as usize
}

/// Deterministic per-run CSV file name.
pub fn run_file_name(
    scenario_id: &str,
    axis: Option<(&str, f64)>,
    agent: AgentKind,
    seed: u64,
) -> String {
    match axis {
        Some((name, value)) => format!("{scenario_id}__{name}-{value}__{agent}__s{seed}.csv"),
        None => format!("{scenario_id}__{agent}__s{seed}.csv"),
    }
}

/// Runs every (sweep value, agent, seed) combination, writing one CSV per
/// run plus `summary.csv`. Results of completed runs are flushed even if a
/// later run fails.
pub fn run_experiment(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;

    let points: Vec<Option<f64>> = match &cfg.sweep {
        Some(sweep) => sweep.values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let axis_name = cfg.sweep.as_ref().map(|s| s.axis.name());

    let mut summaries = Vec::new();
    let mut run_files = Vec::new();
    let mut failure: Option<SimError> = None;

    'outer: for &point in &points {
        let (env_cfg, ql) = cfg.at_point(point)?;
        for &agent in &cfg.agents {
            for &seed in &cfg.seeds {
                log::info!(
                    "run: scenario={} axis={:?} point={:?} agent={} seed={}",
                    cfg.scenario_id,
                    axis_name,
                    point,
                    agent,
                    seed
                );
                let result = match run_agent(&env_cfg, agent, seed, cfg.slots, &ql, &cfg.fa) {
                    Ok(r) => r,
                    Err(e) => {
                        failure = Some(e);
                        break 'outer;
                    }
                };
                let file = out_dir.join(run_file_name(
                    &cfg.scenario_id,
                    axis_name.and_then(|n| point.map(|v| (n, v))),
                    agent,
                    seed,
                ));
                write_run_csv(&file, cfg, agent, seed, &result.trace)?;
                run_files.push(file);

                let window = final_window(cfg.slots);
                summaries.push(RunSummary {
                    scenario_id: cfg.scenario_id.clone(),
                    sweep_axis: axis_name.unwrap_or("").to_string(),
                    sweep_value: point.unwrap_or(f64::NAN),
                    agent: agent.name().to_string(),
                    seed,
                    slots: cfg.slots,
                    final_window: window,
                    final_mean_cost_s: result.trace.final_window_mean(window),
                    hit_ratio: result.trace.hit_ratio(window),
                    explored_actions: result.trace.explored_actions,
                    request_hash: format!("{:016x}", result.request_hash),
                });
            }
        }
    }

    let summary_file = out_dir.join("summary.csv");
    write_summary_csv(&summary_file, &summaries)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ExperimentOutput {
        summaries,
        run_files,
        summary_file,
    })
}

/// Columns of the per-run CSV.
pub const RUN_CSV_HEADER: [&str; 11] = [
    "scenario_id",
    "agent",
    "seed",
    "slot",
    "cost_s",
    "cost_backhaul_s",
    "cost_access_s",
    "cost_sched_s",
    "ma_cost_s",
    "cache_hits",
    "cache_misses",
];

fn write_run_csv(
    path: &Path,
    cfg: &ScenarioConfig,
    agent: AgentKind,
    seed: u64,
    trace: &DelayTrace,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(RUN_CSV_HEADER)?;
    let ma = trace.moving_average(cfg.ma_window);
    for t in 0..trace.len() {
        writer.write_record(&[
            cfg.scenario_id.clone(),
            agent.name().to_string(),
            seed.to_string(),
            (t + 1).to_string(),
            trace.cost_s[t].to_string(),
            trace.backhaul_s[t].to_string(),
            trace.access_s[t].to_string(),
            trace.scheduling_s[t].to_string(),
            ma[t].to_string(),
            trace.cache_hits[t].to_string(),
            trace.cache_misses[t].to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_summary_csv(path: &Path, summaries: &[RunSummary]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in summaries {
        writer.serialize(row)?;
    }
    // Serde-driven writers only emit headers with at least one row; make the
    // empty summary explicit.
    if summaries.is_empty() {
        writer.write_record([
            "scenario_id",
            "sweep_axis",
            "sweep_value",
            "agent",
            "seed",
            "slots",
            "final_window",
            "final_mean_cost_s",
            "hit_ratio",
            "explored_actions",
            "request_hash",
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn fast_cfg(extra: &str) -> ScenarioConfig {
        parse_config(&format!(
            "users = 4\ncontents = 3\ncache_capacity = 1\nrequest_coeff = 2\nslots = 60\n\
             ma_window = 10\nepsilon = 20\nsgd_iters = 5\ntrain_iters = 5\nbatch_size = 4\n\
             reset_period = 25\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn paired_seeds_share_request_streams() {
        let cfg = fast_cfg("agents = ql, fixed, random, greedy, fa\nseeds = 3\n");
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        let hashes: Vec<&str> = out.summaries.iter().map(|s| s.request_hash.as_str()).collect();
        assert_eq!(hashes.len(), 5);
        assert!(hashes.windows(2).all(|w| w[0] == w[1]), "hashes {hashes:?}");
    }

    #[test]
    fn sweep_emits_expected_run_matrix() {
        let cfg = fast_cfg(
            "agents = random, fixed\nseeds = 1, 2\nsweep_axis = cache\nsweep_values = 1, 2, 3\n",
        );
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        // 3 sweep values x 2 agents x 2 seeds.
        assert_eq!(out.summaries.len(), 12);
        assert_eq!(out.run_files.len(), 12);
        for f in &out.run_files {
            assert!(f.exists());
        }
        assert!(out.summary_file.exists());
    }

    #[test]
    fn run_csv_has_documented_schema() {
        let cfg = fast_cfg("agents = random\nseeds = 1\n");
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        let mut reader = csv::Reader::from_path(&out.run_files[0]).unwrap();
        let headers: Vec<String> =
            reader.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(headers, RUN_CSV_HEADER.to_vec());
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 60);
        // Moving average column recomputes from the cost column.
        let costs: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
        let ma = crate::harness::metrics::moving_average(&costs, 10);
        for (row, expected) in rows.iter().zip(ma) {
            let got: f64 = row[8].parse().unwrap();
            assert!((got - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn final_window_is_a_fifth() {
        assert_eq!(final_window(100_000), 20_000);
        assert_eq!(final_window(3), 1);
    }
}
