//! Tabular Q-learning over the cache/schedule/power action space.
//!
//! State and action lists start empty and grow as the agent encounters new
//! states and selects new actions. Action selection is soft epsilon-greedy:
//! always random for the first `epsilon` slots, random with probability
//! `epsilon / t` afterwards, otherwise the listed legal action with the
//! smallest Q-value. Unvisited pairs default to Q = 0, which — costs being
//! non-negative — makes exploitation sweep untried listed actions before
//! settling on learned ones.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::error::{Result, SimError};
use crate::harness::metrics::DelayTrace;
use crate::mdp::{is_legal, ActionKey, ActionVector, NetworkState, StateKey};

/// Q-learning hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QlHyper {
    /// Discount factor, in [0, 1).
    pub gamma: f64,
    /// Soft epsilon-greedy exploration scale (slots).
    pub epsilon: f64,
    /// Learning-rate offset, > 0.
    pub c_alpha: f64,
    /// Learning-rate exponent, in (1/2, 1].
    pub phi_alpha: f64,
}

impl Default for QlHyper {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon: 5000.0,
            c_alpha: 1.0,
            phi_alpha: 0.8,
        }
    }
}

impl QlHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SimError::Validation(format!(
                "discount factor must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(SimError::Validation("epsilon must be positive".into()));
        }
        if !(self.c_alpha > 0.0) {
            return Err(SimError::Validation("c_alpha must be positive".into()));
        }
        if !(self.phi_alpha > 0.5 && self.phi_alpha <= 1.0) {
            return Err(SimError::Validation(format!(
                "phi_alpha must lie in (1/2, 1], got {}",
                self.phi_alpha
            )));
        }
        Ok(())
    }
}

/// Dynamically grown state list, action list and state-action value table.
pub struct QTable {
    hyper: QlHyper,
    state_ids: HashMap<StateKey, u32>,
    state_keys: Vec<StateKey>,
    action_ids: HashMap<ActionKey, u32>,
    actions: Vec<ActionVector>,
    values: HashMap<(u32, u32), f64>,
    visits: HashMap<(u32, u32), u32>,
}

impl QTable {
    pub fn new(hyper: QlHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            hyper,
            state_ids: HashMap::new(),
            state_keys: Vec::new(),
            action_ids: HashMap::new(),
            actions: Vec::new(),
            values: HashMap::new(),
            visits: HashMap::new(),
        })
    }

    pub fn hyper(&self) -> &QlHyper {
        &self.hyper
    }

    pub fn num_states(&self) -> usize {
        self.state_keys.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[ActionVector] {
        &self.actions
    }

    /// Q-value of a (state, action) pair; unvisited pairs are 0.
    pub fn q(&self, state: u32, action: u32) -> f64 {
        self.values.get(&(state, action)).copied().unwrap_or(0.0)
    }

    pub fn visit_count(&self, state: u32, action: u32) -> u32 {
        self.visits.get(&(state, action)).copied().unwrap_or(0)
    }

    pub fn register_state(&mut self, key: StateKey) -> u32 {
        if let Some(&idx) = self.state_ids.get(&key) {
            return idx;
        }
        let idx = self.state_keys.len() as u32;
        self.state_keys.push(key.clone());
        self.state_ids.insert(key, idx);
        idx
    }

    pub fn register_action(&mut self, action: &ActionVector) -> u32 {
        let key = action.key();
        if let Some(&idx) = self.action_ids.get(&key) {
            return idx;
        }
        let idx = self.actions.len() as u32;
        self.actions.push(action.clone());
        self.action_ids.insert(key, idx);
        idx
    }

    /// Probability of taking a random action at slot `t`: 1 for `t <=
    /// epsilon`, `epsilon / t` afterwards.
    pub fn exploration_probability(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        if t <= self.hyper.epsilon {
            1.0
        } else {
            self.hyper.epsilon / t
        }
    }

    /// Learning rate `1 / (t + c_alpha)^phi_alpha`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        1.0 / (t as f64 + self.hyper.c_alpha).powf(self.hyper.phi_alpha)
    }

    /// The listed action legal in `state` with the smallest Q-value (ties:
    /// earliest listed). Because values are non-negative, the scan stops at
    /// the first legal action whose value is still zero.
    fn best_listed(&self, state: &NetworkState, beta: u32) -> Option<(u32, f64)> {
        let s_idx = self.state_ids.get(&state.key()).copied();
        let mut best: Option<(u32, f64)> = None;
        for (idx, action) in self.actions.iter().enumerate() {
            if !is_legal(state, action, beta) {
                continue;
            }
            let q = match s_idx {
                Some(s) => self.q(s, idx as u32),
                None => 0.0,
            };
            if q == 0.0 {
                return Some((idx as u32, 0.0));
            }
            if best.map_or(true, |(_, bq)| q < bq) {
                best = Some((idx as u32, q));
            }
        }
        best
    }

    /// Smallest Q-value among listed actions legal in `state`; 0 when none
    /// is listed (the bootstrap value of an unexplored state).
    pub fn min_legal_q(&self, state: &NetworkState, beta: u32) -> f64 {
        self.best_listed(state, beta).map_or(0.0, |(_, q)| q)
    }

    /// Soft epsilon-greedy selection: explore a uniformly random legal
    /// action, or exploit the best listed legal action, falling back to a
    /// random legal action when nothing listed is legal here.
    pub fn select_action_soft_eps<R: Rng>(
        &self,
        env: &Env,
        t: u64,
        rng: &mut R,
    ) -> ActionVector {
        let p = self.exploration_probability(t);
        let explore = p >= 1.0 || rng.gen::<f64>() < p;
        if explore {
            return env.sample_legal(rng);
        }
        match self.best_listed(env.state(), env.config().beta) {
            Some((idx, _)) => self.actions[idx as usize].clone(),
            None => env.sample_legal(rng),
        }
    }

    /// Value update after observing cost `cost` for (state, action) at slot
    /// `t`, landing in `next_state`.
    pub fn q_update(
        &mut self,
        state: u32,
        action: u32,
        cost: f64,
        next_state: &NetworkState,
        beta: u32,
        t: u64,
    ) {
        let alpha = self.learning_rate(t);
        let bootstrap = self.min_legal_q(next_state, beta);
        let old = self.q(state, action);
        let new = (1.0 - alpha) * old + alpha * (cost + self.hyper.gamma * bootstrap);
        debug_assert!(new >= 0.0 && new.is_finite());
        self.values.insert((state, action), new);
        *self.visits.entry((state, action)).or_insert(0) += 1;
    }

    pub fn to_json(&self) -> String {
        let entries = {
            let mut e: Vec<(u32, u32, f64, u32)> = self
                .values
                .iter()
                .map(|(&(s, a), &q)| (s, a, q, self.visit_count(s, a)))
                .collect();
            e.sort_unstable_by_key(|&(s, a, _, _)| (s, a));
            e
        };
        let file = QTableFile {
            format: QTABLE_FORMAT.to_string(),
            version: 1,
            hyper: self.hyper.clone(),
            states: self.state_keys.clone(),
            actions: self.actions.clone(),
            entries,
        };
        serde_json::to_string(&file).expect("Q-table serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: QTableFile = serde_json::from_str(text)
            .map_err(|e| SimError::Schema(format!("Q-table artifact: {e}")))?;
        if file.format != QTABLE_FORMAT || file.version != 1 {
            return Err(SimError::Schema(format!(
                "unsupported Q-table artifact {}/{}",
                file.format, file.version
            )));
        }
        let mut table = QTable::new(file.hyper)?;
        for key in file.states {
            table.register_state(key);
        }
        for action in &file.actions {
            table.register_action(action);
        }
        for (s, a, q, visits) in file.entries {
            if s as usize >= table.num_states() || a as usize >= table.num_actions() {
                return Err(SimError::Schema("entry references unknown state/action".into()));
            }
            table.values.insert((s, a), q);
            table.visits.insert((s, a), visits);
        }
        Ok(table)
    }
}

const QTABLE_FORMAT: &str = "uavcache-qtable";

#[derive(Serialize, Deserialize)]
struct QTableFile {
    format: String,
    version: u32,
    hyper: QlHyper,
    states: Vec<StateKey>,
    actions: Vec<ActionVector>,
    entries: Vec<(u32, u32, f64, u32)>,
}

/// Runs the Q-learning loop for `slots` slots, mutating `table` in place
/// (pass a fresh table or a resumed one) and returning the delay trace.
pub fn run_qlearning(
    env: &mut Env,
    table: &mut QTable,
    slots: u64,
    rng: &mut ChaCha8Rng,
) -> Result<DelayTrace> {
    let beta = env.config().beta;
    let mut trace = DelayTrace::new();
    for _ in 0..slots {
        let t = env.state().slot;
        let s_idx = table.register_state(env.state().key());
        let action = table.select_action_soft_eps(env, t, rng);
        let a_idx = table.register_action(&action);
        let outcome = env.step(&action)?;
        table.q_update(s_idx, a_idx, outcome.cost_s, &outcome.next_state, beta, t);
        trace.push(&outcome);
    }
    trace.explored_actions = table.num_actions();
    Ok(trace)
}
