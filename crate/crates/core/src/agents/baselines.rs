//! Benchmark policies: greedy exhaustive search, a fixed heuristic and a
//! uniform random policy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::Env;
use crate::error::{Result, SimError};
use crate::harness::metrics::DelayTrace;
use crate::mdp::{ActionVector, NetworkState};

/// The legal action with the smallest instantaneous cost, found by
/// exhaustive search. Ties resolve to the first action in enumeration order
/// (heavier caching first), so cost-neutral proactive fetches are kept.
pub fn greedy_action(env: &Env) -> Result<ActionVector> {
    let actions = env.enumerate_legal()?;
    let mut best: Option<(f64, ActionVector)> = None;
    for action in actions {
        let cost = env.evaluate(&action)?.total();
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, action));
        }
    }
    best.map(|(_, a)| a)
        .ok_or_else(|| SimError::Contract("no legal action exists".into()))
}

/// Round-robin scheduler with popularity-count caching and a fixed NOMA
/// power level.
///
/// Caches the `Z` most requested contents observed so far (ties toward the
/// lower index), serves up to one NOMA pair per slot starting from a
/// rotating pointer, always including users at the scheduling-delay limit,
/// and allocates level 0.3 to every group.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    request_counts: Vec<u64>,
    pointer: usize,
    level: u8,
    quota: usize,
}

impl FixedPolicy {
    pub fn new(num_contents: usize) -> Self {
        Self {
            request_counts: vec![0; num_contents],
            pointer: 0,
            level: 2,
            quota: 2,
        }
    }

    pub fn request_counts(&self) -> &[u64] {
        &self.request_counts
    }

    /// Folds this slot's new arrivals (wait age 0) into the popularity
    /// counts. Call once per slot before acting.
    pub fn observe(&mut self, state: &NetworkState) {
        for (pending, &age) in state.waiting.pending.iter().zip(&state.waiting.wait_age) {
            if let Some(content) = pending {
                if age == 0 {
                    self.request_counts[*content] += 1;
                }
            }
        }
    }

    pub fn act(&mut self, state: &NetworkState, beta: u32) -> ActionVector {
        let m = state.num_contents();
        let n = state.num_users();

        let mut ranked: Vec<usize> = (0..m).collect();
        ranked.sort_by(|&a, &b| {
            self.request_counts[b]
                .cmp(&self.request_counts[a])
                .then(a.cmp(&b))
        });
        let mut proactive = vec![false; m];
        for &content in ranked.iter().take(state.cache.capacity) {
            proactive[content] = true;
        }

        let mut schedule = vec![false; n];
        let mut taken = 0usize;
        let mut last_taken = None;
        for i in 0..n {
            if taken == self.quota {
                break;
            }
            let user = (self.pointer + i) % n;
            if state.waiting.pending[user].is_some() {
                schedule[user] = true;
                taken += 1;
                last_taken = Some(user);
            }
        }
        if let Some(user) = last_taken {
            self.pointer = (user + 1) % n;
        }
        for user in state.forced_users(beta) {
            if !schedule[user] {
                schedule[user] = true;
                taken += 1;
            }
        }

        let groups = crate::mdp::required_groups(taken);
        ActionVector {
            proactive,
            schedule,
            power_levels: vec![self.level; groups],
        }
    }
}

/// Uniform draw from the legal action set.
pub fn random_action<R: Rng>(env: &Env, rng: &mut R) -> ActionVector {
    env.sample_legal(rng)
}

/// Runs the greedy policy for `slots` slots.
pub fn run_greedy(env: &mut Env, slots: u64) -> Result<DelayTrace> {
    let mut trace = DelayTrace::new();
    for _ in 0..slots {
        let action = greedy_action(env)?;
        trace.push(&env.step(&action)?);
    }
    Ok(trace)
}

/// Runs the fixed policy for `slots` slots.
pub fn run_fixed(env: &mut Env, slots: u64) -> Result<DelayTrace> {
    let beta = env.config().beta;
    let mut policy = FixedPolicy::new(env.config().num_contents);
    let mut trace = DelayTrace::new();
    for _ in 0..slots {
        policy.observe(env.state());
        let action = policy.act(env.state(), beta);
        trace.push(&env.step(&action)?);
    }
    Ok(trace)
}

/// Runs the random policy for `slots` slots.
pub fn run_random(env: &mut Env, slots: u64, rng: &mut ChaCha8Rng) -> Result<DelayTrace> {
    let mut trace = DelayTrace::new();
    for _ in 0..slots {
        let action = random_action(env, rng);
        trace.push(&env.step(&action)?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{CacheState, RequestState};
    use crate::env::EnvConfig;
    use rand::SeedableRng;

    fn small_env() -> Env {
        Env::new(
            EnvConfig {
                num_users: 2,
                num_contents: 2,
                cache_capacity: 1,
                request_gen_coeff: 1.0,
                ..EnvConfig::default()
            },
            42,
        )
        .unwrap()
    }

    fn install_state(env: &mut Env, pending: &[(usize, usize, u32)], cached: &[usize]) {
        let m = env.config().num_contents;
        let n = env.config().num_users;
        let mut waiting = RequestState::idle(n, env.config().request_gen_coeff);
        for &(u, c, a) in pending {
            waiting.pending[u] = Some(c);
            waiting.wait_age[u] = a;
        }
        let mut cache = CacheState::empty(m, env.config().cache_capacity);
        for &c in cached {
            cache.cached[c] = true;
        }
        env.set_state(NetworkState {
            cache,
            waiting,
            slot: 1,
        })
        .unwrap();
    }

    #[test]
    fn greedy_matches_exhaustive_minimum() {
        let mut env = small_env();
        install_state(&mut env, &[(0, 0, 0), (1, 1, 1)], &[]);
        let best = greedy_action(&env).unwrap();
        let best_cost = env.evaluate(&best).unwrap().total();
        for action in env.enumerate_legal().unwrap() {
            assert!(env.evaluate(&action).unwrap().total() >= best_cost - 1e-15);
        }
    }

    #[test]
    fn greedy_keeps_the_fetched_content_cached() {
        // Content 0 is requested while uncached, so it crosses the backhaul
        // either way; among cost-ties, greedy prefers to cache it.
        let mut env = small_env();
        install_state(&mut env, &[(0, 0, 1)], &[]);
        let best = greedy_action(&env).unwrap();
        assert!(best.proactive[0]);
        assert!(!best.proactive[1]);
    }

    #[test]
    fn fixed_caches_by_observed_popularity() {
        let mut policy = FixedPolicy::new(3);
        policy.request_counts = vec![5, 3, 3];
        let mut waiting = RequestState::idle(2, 1.0);
        waiting.pending[0] = Some(0);
        let state = NetworkState {
            cache: CacheState::empty(3, 2),
            waiting,
            slot: 1,
        };
        let action = policy.act(&state, 2);
        // Tie between contents 1 and 2 resolves to the lower index.
        assert_eq!(action.proactive, vec![true, true, false]);
    }

    #[test]
    fn fixed_round_robin_rotates_and_forces() {
        let mut policy = FixedPolicy::new(2);
        let mut waiting = RequestState::idle(4, 2.0);
        for u in 0..4 {
            waiting.pending[u] = Some(0);
        }
        waiting.wait_age[3] = 1; // forced at beta = 2
        let state = NetworkState {
            cache: CacheState::empty(2, 1),
            waiting,
            slot: 1,
        };
        let action = policy.act(&state, 2);
        // Pointer starts at user 0: quota takes users 0 and 1, user 3 forced.
        assert_eq!(action.schedule, vec![true, true, false, true]);
        assert_eq!(action.power_levels.len(), 2);
        assert!(crate::mdp::is_legal(&state, &action, 2));
        // Next call starts after the last quota pick.
        let action2 = policy.act(&state, 2);
        assert!(action2.schedule[2]);
        assert!(action2.schedule[3]);
    }

    #[test]
    fn fixed_observe_counts_only_new_arrivals() {
        let mut policy = FixedPolicy::new(2);
        let mut waiting = RequestState::idle(2, 1.0);
        waiting.pending[0] = Some(1);
        waiting.wait_age[0] = 0;
        let state = NetworkState {
            cache: CacheState::empty(2, 1),
            waiting,
            slot: 1,
        };
        policy.observe(&state);
        assert_eq!(policy.request_counts(), &[0, 1]);
        // Same request aged by a slot is not recounted.
        let mut aged = state.clone();
        aged.waiting.wait_age[0] = 1;
        policy.observe(&aged);
        assert_eq!(policy.request_counts(), &[0, 1]);
    }

    #[test]
    fn baseline_runs_complete_and_stay_legal() {
        let cfg = EnvConfig {
            num_users: 4,
            num_contents: 3,
            cache_capacity: 1,
            request_gen_coeff: 2.0,
            ..EnvConfig::default()
        };
        let mut env = Env::new(cfg.clone(), 1).unwrap();
        run_greedy(&mut env, 200).unwrap();
        let mut env = Env::new(cfg.clone(), 1).unwrap();
        run_fixed(&mut env, 200).unwrap();
        let mut env = Env::new(cfg, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        run_random(&mut env, 200, &mut rng).unwrap();
    }
}
