//! Scenario configuration: a flat `key = value` text format with optional
//! section headers, parsed without external dependencies.
//!
//! Unknown keys and sections are rejected with their line number; omitted
//! keys fall back to the stock system parameters and the applied defaults
//! are echoed to the log.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::agents::fa::FaHyper;
use crate::agents::qlearning::QlHyper;
use crate::env::EnvConfig;
use crate::error::{Result, SimError};

/// The five policies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Ql,
    Fa,
    Greedy,
    Fixed,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Ql,
        AgentKind::Fa,
        AgentKind::Greedy,
        AgentKind::Fixed,
        AgentKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Ql => "ql",
            AgentKind::Fa => "fa",
            AgentKind::Greedy => "greedy",
            AgentKind::Fixed => "fixed",
            AgentKind::Random => "random",
        }
    }

    /// Salt mixed into the scenario seed to derive this agent's private RNG
    /// stream.
    pub fn seed_salt(&self) -> u64 {
        match self {
            AgentKind::Ql => 0x51,
            AgentKind::Fa => 0xFA,
            AgentKind::Greedy => 0x06,
            AgentKind::Fixed => 0xF1,
            AgentKind::Random => 0x4A,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ql" | "q-learning" | "qlearning" => Ok(AgentKind::Ql),
            "fa" | "function-approximation" => Ok(AgentKind::Fa),
            "greedy" => Ok(AgentKind::Greedy),
            "fixed" => Ok(AgentKind::Fixed),
            "random" => Ok(AgentKind::Random),
            other => Err(SimError::Validation(format!("unknown agent '{other}'"))),
        }
    }
}

/// Scenario dimension a sweep iterates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Users,
    Contents,
    Cache,
    Epsilon,
    Gamma,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Users => "users",
            SweepAxis::Contents => "contents",
            SweepAxis::Cache => "cache",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Gamma => "gamma",
        }
    }

    fn integral(&self) -> bool {
        matches!(self, SweepAxis::Users | SweepAxis::Contents | SweepAxis::Cache)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "users" | "n" => Ok(SweepAxis::Users),
            "contents" | "m" => Ok(SweepAxis::Contents),
            "cache" | "z" => Ok(SweepAxis::Cache),
            "epsilon" => Ok(SweepAxis::Epsilon),
            "gamma" => Ok(SweepAxis::Gamma),
            other => Err(SimError::Validation(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// A full experiment description: environment, agents, seeds, horizon,
/// hyperparameters and an optional sweep.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub env: EnvConfig,
    pub agents: Vec<AgentKind>,
    pub seeds: Vec<u64>,
    pub slots: u64,
    /// Moving-average window (slots) used in the per-run CSV.
    pub ma_window: usize,
    pub ql: QlHyper,
    pub fa: FaHyper,
    pub sweep: Option<Sweep>,
}

impl ScenarioConfig {
    /// A runnable default scenario (requires `users`/`contents` in files,
    /// but tests and callers may start from here).
    pub fn default_with(num_users: usize, num_contents: usize) -> Self {
        Self {
            scenario_id: "scenario".into(),
            env: EnvConfig {
                num_users,
                num_contents,
                ..EnvConfig::default()
            },
            agents: vec![AgentKind::Ql],
            seeds: vec![1],
            slots: 100_000,
            ma_window: 1000,
            ql: QlHyper::default(),
            fa: FaHyper::default(),
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(SimError::Validation("at least one seed is required".into()));
        }
        if self.agents.is_empty() {
            return Err(SimError::Validation("at least one agent is required".into()));
        }
        if self.ma_window == 0 {
            return Err(SimError::Validation("ma_window must be positive".into()));
        }
        self.env.validate()?;
        self.ql.validate()?;
        self.fa.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(SimError::Validation("sweep_values must not be empty".into()));
            }
            for &v in &sweep.values {
                if !(v > 0.0) && sweep.axis != SweepAxis::Gamma {
                    return Err(SimError::Validation(format!(
                        "sweep value {v} on axis {} must be positive",
                        sweep.axis
                    )));
                }
                if sweep.axis.integral() && v.fract() != 0.0 {
                    return Err(SimError::Validation(format!(
                        "sweep axis {} takes integral values, got {v}",
                        sweep.axis
                    )));
                }
                // Every sweep point must itself be a valid scenario.
                self.at_point(Some(v))?;
            }
        }
        Ok(())
    }

    /// Environment and Q-learning settings at one sweep point (`None` for
    /// the base scenario).
    pub fn at_point(&self, value: Option<f64>) -> Result<(EnvConfig, QlHyper)> {
        let mut env = self.env.clone();
        let mut ql = self.ql.clone();
        if let (Some(sweep), Some(v)) = (&self.sweep, value) {
            match sweep.axis {
                SweepAxis::Users => env.num_users = v as usize,
                SweepAxis::Contents => env.num_contents = v as usize,
                SweepAxis::Cache => env.cache_capacity = v as usize,
                SweepAxis::Epsilon => ql.epsilon = v,
                SweepAxis::Gamma => ql.gamma = v,
            }
        }
        env.validate()?;
        ql.validate()?;
        Ok((env, ql))
    }
}

/// Parses and validates a config file, echoing applied defaults to the log.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

const SECTIONS: [&str; 4] = ["scenario", "radio", "learning", "sweep"];

struct RawConfig {
    entries: HashMap<String, (usize, String)>,
    defaulted: Vec<(&'static str, String)>,
}

impl RawConfig {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some((line, raw)) => raw.trim().parse::<f64>().map_err(|_| SimError::Config {
                line,
                msg: format!("'{key}' expects a number, got '{raw}'"),
            }),
            None => {
                self.defaulted.push((key, format!("{default}")));
                Ok(default)
            }
        }
    }

    fn usize_or(&mut self, key: &'static str, default: usize) -> Result<usize> {
        match self.take(key) {
            Some((line, raw)) => raw.trim().parse::<usize>().map_err(|_| SimError::Config {
                line,
                msg: format!("'{key}' expects a non-negative integer, got '{raw}'"),
            }),
            None => {
                self.defaulted.push((key, format!("{default}")));
                Ok(default)
            }
        }
    }

    fn u64_or(&mut self, key: &'static str, default: u64) -> Result<u64> {
        match self.take(key) {
            Some((line, raw)) => raw.trim().parse::<u64>().map_err(|_| SimError::Config {
                line,
                msg: format!("'{key}' expects a non-negative integer, got '{raw}'"),
            }),
            None => {
                self.defaulted.push((key, format!("{default}")));
                Ok(default)
            }
        }
    }

    fn required_usize(&mut self, key: &'static str) -> Result<usize> {
        match self.take(key) {
            Some((line, raw)) => raw.trim().parse::<usize>().map_err(|_| SimError::Config {
                line,
                msg: format!("'{key}' expects a non-negative integer, got '{raw}'"),
            }),
            None => Err(SimError::Validation(format!("missing required key '{key}'"))),
        }
    }

    fn string_or(&mut self, key: &'static str, default: &str) -> String {
        match self.take(key) {
            Some((_, raw)) => raw.trim().to_string(),
            None => {
                self.defaulted.push((key, default.to_string()));
                default.to_string()
            }
        }
    }
}

fn parse_list<T, F>(line: usize, key: &str, raw: &str, parse: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    raw.split(',')
        .map(|item| {
            parse(item.trim()).map_err(|e| SimError::Config {
                line,
                msg: format!("'{key}' item '{}': {e}", item.trim()),
            })
        })
        .collect()
}

/// Parses config text; see the repository README for the key reference.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: HashMap<String, (usize, String)> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(section) = trimmed.strip_prefix('[') {
            let name = section.strip_suffix(']').ok_or(SimError::Config {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            if !SECTIONS.contains(&name.trim()) {
                return Err(SimError::Config {
                    line: line_no,
                    msg: format!("unknown section '[{}]'", name.trim()),
                });
            }
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(SimError::Config {
                line: line_no,
                msg: "expected 'key = value'".into(),
            });
        };
        let key = key.trim().to_ascii_lowercase();
        if entries.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
            return Err(SimError::Config {
                line: line_no,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }

    let mut raw = RawConfig {
        entries,
        defaulted: Vec::new(),
    };

    let scenario_id = raw.string_or("scenario_id", "scenario");
    let num_users = raw.required_usize("users")?;
    let num_contents = raw.required_usize("contents")?;

    let mut cfg = ScenarioConfig::default_with(num_users, num_contents);
    cfg.scenario_id = scenario_id;
    cfg.env.cache_capacity = raw.usize_or("cache_capacity", cfg.env.cache_capacity)?;
    cfg.env.zipf_exponent = raw.f64_or("zipf_exponent", cfg.env.zipf_exponent)?;
    cfg.env.request_gen_coeff = raw.f64_or("request_coeff", cfg.env.request_gen_coeff)?;
    cfg.env.beta = raw.u64_or("beta", cfg.env.beta as u64)? as u32;
    cfg.slots = raw.u64_or("slots", cfg.slots)?;
    cfg.ma_window = raw.usize_or("ma_window", cfg.ma_window)?;

    if let Some((line, raw_seeds)) = raw.take("seeds") {
        cfg.seeds = parse_list(line, "seeds", &raw_seeds, |s| {
            s.parse::<u64>().map_err(|_| SimError::Validation("expected an integer".into()))
        })?;
    } else {
        raw.defaulted.push(("seeds", "1".into()));
    }
    if let Some((line, raw_agents)) = raw.take("agents") {
        cfg.agents = parse_list(line, "agents", &raw_agents, AgentKind::from_str)?;
    } else {
        raw.defaulted.push(("agents", "ql".into()));
    }

    cfg.env.radio.mbs_power_dbm = raw.f64_or("mbs_power_dbm", cfg.env.radio.mbs_power_dbm)?;
    cfg.env.radio.uav_power_dbm = raw.f64_or("uav_power_dbm", cfg.env.radio.uav_power_dbm)?;
    let n_power = cfg.env.radio.mbs_power_dbm;
    cfg.env.radio.neighbor_power_dbm = vec![n_power; 6];
    cfg.env.radio.backhaul_bandwidth_hz =
        raw.f64_or("backhaul_bandwidth_hz", cfg.env.radio.backhaul_bandwidth_hz)?;
    cfg.env.radio.access_bandwidth_hz =
        raw.f64_or("access_bandwidth_hz", cfg.env.radio.access_bandwidth_hz)?;
    cfg.env.radio.noise_density_dbm_hz =
        raw.f64_or("noise_density_dbm_hz", cfg.env.radio.noise_density_dbm_hz)?;
    cfg.env.radio.carrier_ghz = raw.f64_or("carrier_ghz", cfg.env.radio.carrier_ghz)?;
    cfg.env.content_size_bits = raw.f64_or("content_size_bits", cfg.env.content_size_bits)?;
    cfg.env.slot_length_s = raw.f64_or("slot_length_s", cfg.env.slot_length_s)?;
    cfg.env.altitude_m = raw.f64_or("altitude_m", cfg.env.altitude_m)?;
    cfg.env.uav_speed_mps = raw.f64_or("uav_speed_mps", cfg.env.uav_speed_mps)?;
    cfg.env.trajectory_radius_m =
        raw.f64_or("trajectory_radius_m", cfg.env.trajectory_radius_m)?;
    cfg.env.cell_side_m = raw.f64_or("cell_side_m", cfg.env.cell_side_m)?;
    cfg.env.enumeration_guard =
        raw.u64_or("enumeration_guard", cfg.env.enumeration_guard as u64)? as u128;

    cfg.ql.epsilon = raw.f64_or("epsilon", cfg.ql.epsilon)?;
    cfg.ql.gamma = raw.f64_or("gamma", cfg.ql.gamma)?;
    cfg.ql.c_alpha = raw.f64_or("c_alpha", cfg.ql.c_alpha)?;
    cfg.ql.phi_alpha = raw.f64_or("phi_alpha", cfg.ql.phi_alpha)?;

    cfg.fa.sgd_iters = raw.usize_or("sgd_iters", cfg.fa.sgd_iters)?;
    cfg.fa.sgd_step = raw.f64_or("sgd_step", cfg.fa.sgd_step)?;
    cfg.fa.fd_epsilon = raw.f64_or("fd_epsilon", cfg.fa.fd_epsilon)?;
    cfg.fa.train_iters = raw.usize_or("train_iters", cfg.fa.train_iters)?;
    cfg.fa.batch_size = raw.usize_or("batch_size", cfg.fa.batch_size)?;
    cfg.fa.reset_period = raw.u64_or("reset_period", cfg.fa.reset_period)?;
    cfg.fa.memory_capacity = raw.usize_or("memory_capacity", cfg.fa.memory_capacity)?;
    cfg.fa.learning_rate = raw.f64_or("dnn_learning_rate", cfg.fa.learning_rate)?;
    cfg.fa.grad_clip = raw.f64_or("grad_clip", cfg.fa.grad_clip)?;

    let axis = raw.take("sweep_axis");
    let values = raw.take("sweep_values");
    cfg.sweep = match (axis, values) {
        (Some((line, axis)), Some((vline, values))) => {
            let axis = SweepAxis::from_str(&axis).map_err(|e| SimError::Config {
                line,
                msg: e.to_string(),
            })?;
            let values = parse_list(vline, "sweep_values", &values, |s| {
                s.parse::<f64>().map_err(|_| SimError::Validation("expected a number".into()))
            })?;
            Some(Sweep { axis, values })
        }
        (None, None) => None,
        (Some((line, _)), None) | (None, Some((line, _))) => {
            return Err(SimError::Config {
                line,
                msg: "sweep_axis and sweep_values must be given together".into(),
            });
        }
    };

    if let Some((key, (line, _))) = raw
        .entries
        .iter()
        .min_by_key(|(_, (line, _))| *line)
        .map(|(k, v)| (k.clone(), v.clone()))
    {
        return Err(SimError::Config {
            line,
            msg: format!("unknown key '{key}'"),
        });
    }

    for (key, value) in &raw.defaulted {
        log::info!("config: '{key}' not set, using default {value}");
    }

    cfg.validate()?;
    Ok(cfg)
}
