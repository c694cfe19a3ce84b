//! MDP state and action types, action legality and NOMA group formation.
//!
//! An action is legal in a state when every scheduled user actually has a
//! pending request, every request about to hit the scheduling-delay limit is
//! scheduled, the proactive index fits the cache, and the power levels come
//! from the discrete level set and match the group count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{distance_3d, Position3D};
use crate::demand::{CacheState, RequestState};
use crate::error::{Result, SimError};

/// Discrete near-user power allocation coefficients.
pub const POWER_LEVELS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// The MDP state: cache occupancy plus the waiting users, at a slot index.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub cache: CacheState,
    pub waiting: RequestState,
    /// 1-based slot index.
    pub slot: u64,
}

/// Hashable identity of a state: cache bitmask plus per-user
/// (requested content + 1 or 0, wait age).
///
/// Wait ages are part of the key because action legality depends on them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateKey {
    cache_mask: u64,
    users: Vec<(u16, u8)>,
}

impl NetworkState {
    pub fn num_contents(&self) -> usize {
        self.cache.cached.len()
    }

    pub fn num_users(&self) -> usize {
        self.waiting.num_users()
    }

    pub fn key(&self) -> StateKey {
        let mut cache_mask = 0u64;
        for (m, &c) in self.cache.cached.iter().enumerate() {
            if c {
                cache_mask |= 1 << m;
            }
        }
        let users = self
            .waiting
            .pending
            .iter()
            .zip(&self.waiting.wait_age)
            .map(|(p, &age)| match p {
                Some(content) => ((content + 1) as u16, age as u8),
                None => (0, 0),
            })
            .collect();
        StateKey { cache_mask, users }
    }

    /// Users whose request would exceed the scheduling-delay limit `beta`
    /// if left unscheduled this slot.
    pub fn forced_users(&self, beta: u32) -> Vec<usize> {
        (0..self.num_users())
            .filter(|&n| {
                self.waiting.pending[n].is_some() && self.waiting.wait_age[n] + 1 >= beta
            })
            .collect()
    }
}

/// One slot's decision: proactive caching index, user schedule and per-group
/// power levels (`power_levels[g]` indexes [`POWER_LEVELS`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub proactive: Vec<bool>,
    pub schedule: Vec<bool>,
    pub power_levels: Vec<u8>,
}

/// Hashable identity of an action.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionKey {
    proactive_mask: u64,
    schedule_mask: u64,
    levels: Vec<u8>,
}

impl ActionVector {
    /// The do-nothing action: cache nothing, schedule nobody.
    pub fn empty(num_contents: usize, num_users: usize) -> Self {
        Self {
            proactive: vec![false; num_contents],
            schedule: vec![false; num_users],
            power_levels: Vec::new(),
        }
    }

    pub fn scheduled_count(&self) -> usize {
        self.schedule.iter().filter(|b| **b).count()
    }

    pub fn scheduled_users(&self) -> Vec<usize> {
        (0..self.schedule.len()).filter(|&n| self.schedule[n]).collect()
    }

    pub fn key(&self) -> ActionKey {
        let mut proactive_mask = 0u64;
        for (m, &i) in self.proactive.iter().enumerate() {
            if i {
                proactive_mask |= 1 << m;
            }
        }
        let mut schedule_mask = 0u64;
        for (n, &b) in self.schedule.iter().enumerate() {
            if b {
                schedule_mask |= 1 << n;
            }
        }
        ActionKey {
            proactive_mask,
            schedule_mask,
            levels: self.power_levels.clone(),
        }
    }
}

/// Number of NOMA groups needed to serve `scheduled` users (pairs plus a
/// possible solo group).
pub fn required_groups(scheduled: usize) -> usize {
    scheduled.div_ceil(2)
}

/// Checks constraints: binary entries by type, levels in the discrete set
/// and one per group, schedule only pending users, schedule every forced
/// user, proactive index within cache capacity.
pub fn is_legal(state: &NetworkState, action: &ActionVector, beta: u32) -> bool {
    if action.proactive.len() != state.num_contents()
        || action.schedule.len() != state.num_users()
    {
        return false;
    }
    let chosen = action.proactive.iter().filter(|i| **i).count();
    if chosen > state.cache.capacity {
        return false;
    }
    let mut scheduled = 0usize;
    for n in 0..state.num_users() {
        let pending = state.waiting.pending[n].is_some();
        if action.schedule[n] {
            if !pending {
                return false;
            }
            scheduled += 1;
        } else if pending && state.waiting.wait_age[n] + 1 >= beta {
            return false;
        }
    }
    if action.power_levels.len() != required_groups(scheduled) {
        return false;
    }
    action.power_levels.iter().all(|&l| (l as usize) < POWER_LEVELS.len())
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact size of the legal action set for `state`.
pub fn count_legal_actions(state: &NetworkState, beta: u32) -> u128 {
    let m = state.num_contents();
    let z = state.cache.capacity.min(m);
    let caching: u128 = (0..=z).map(|k| binomial(m, k)).sum();
    let forced = state.forced_users(beta).len();
    let optional = state.waiting.pending_count() - forced;
    let mut scheduling: u128 = 0;
    for extra in 0..=optional {
        let groups = required_groups(forced + extra);
        scheduling += binomial(optional, extra) * (POWER_LEVELS.len() as u128).pow(groups as u32);
    }
    caching * scheduling
}

/// Exhaustively lists every legal action in deterministic order:
/// lexicographic over the caching index (caching first), then the schedule
/// (scheduling first), then power levels (lowest level first).
pub fn enumerate_legal_actions(
    state: &NetworkState,
    beta: u32,
    guard: u128,
) -> Result<Vec<ActionVector>> {
    let total = count_legal_actions(state, beta);
    if total > guard {
        return Err(SimError::SizeGuard(format!(
            "legal action space has {total} actions, enumeration guard is {guard}"
        )));
    }
    let m = state.num_contents();
    let n = state.num_users();
    let z = state.cache.capacity;

    let mut caching_choices: Vec<Vec<bool>> = Vec::new();
    let mut proactive = vec![false; m];
    enumerate_bounded_masks(&mut proactive, 0, z, &mut caching_choices);

    let forced: Vec<bool> = (0..n)
        .map(|u| state.waiting.pending[u].is_some() && state.waiting.wait_age[u] + 1 >= beta)
        .collect();
    let pending: Vec<bool> = (0..n).map(|u| state.waiting.pending[u].is_some()).collect();
    let mut schedule_choices: Vec<Vec<bool>> = Vec::new();
    let mut schedule = forced.clone();
    enumerate_schedules(&mut schedule, 0, &pending, &forced, &mut schedule_choices);

    let mut actions = Vec::with_capacity(total as usize);
    for caching in &caching_choices {
        for schedule in &schedule_choices {
            let groups = required_groups(schedule.iter().filter(|b| **b).count());
            let mut levels = vec![0u8; groups];
            loop {
                actions.push(ActionVector {
                    proactive: caching.clone(),
                    schedule: schedule.clone(),
                    power_levels: levels.clone(),
                });
                if !next_level_combo(&mut levels) {
                    break;
                }
            }
        }
    }
    Ok(actions)
}

/// DFS over caching masks with at most `budget` ones, visiting `1` before
/// `0` at each position (so heavier caching enumerates first).
fn enumerate_bounded_masks(
    current: &mut Vec<bool>,
    pos: usize,
    budget: usize,
    out: &mut Vec<Vec<bool>>,
) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    if budget > 0 {
        current[pos] = true;
        enumerate_bounded_masks(current, pos + 1, budget - 1, out);
    }
    current[pos] = false;
    enumerate_bounded_masks(current, pos + 1, budget, out);
}

/// DFS over schedules: forced users stay scheduled, idle users stay
/// unscheduled, optional pending users branch `1` before `0`.
fn enumerate_schedules(
    current: &mut Vec<bool>,
    pos: usize,
    pending: &[bool],
    forced: &[bool],
    out: &mut Vec<Vec<bool>>,
) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    if forced[pos] || !pending[pos] {
        current[pos] = forced[pos];
        enumerate_schedules(current, pos + 1, pending, forced, out);
        return;
    }
    current[pos] = true;
    enumerate_schedules(current, pos + 1, pending, forced, out);
    current[pos] = false;
    enumerate_schedules(current, pos + 1, pending, forced, out);
}

/// Advances a level combination in odometer order (last group fastest);
/// returns false after the last combination.
fn next_level_combo(levels: &mut [u8]) -> bool {
    for slot in levels.iter_mut().rev() {
        if (*slot as usize) < POWER_LEVELS.len() - 1 {
            *slot += 1;
            return true;
        }
        *slot = 0;
    }
    false
}

/// Draws one action uniformly from the legal action set without
/// enumerating it.
///
/// The schedule block is weighted by the number of level combinations it
/// admits so that the draw is uniform over complete (caching, schedule,
/// levels) triples.
pub fn sample_legal_action<R: Rng>(
    state: &NetworkState,
    beta: u32,
    rng: &mut R,
) -> ActionVector {
    let m = state.num_contents();
    let n = state.num_users();
    let z = state.cache.capacity.min(m);

    // Caching block: pick the occupancy k with weight C(M, k), then a
    // uniform k-subset.
    let cache_weights: Vec<f64> = (0..=z).map(|k| binomial(m, k) as f64).collect();
    let k = weighted_index(&cache_weights, rng);
    let mut proactive = vec![false; m];
    for idx in sample_subset(m, k, rng) {
        proactive[idx] = true;
    }

    let forced: Vec<usize> = state.forced_users(beta);
    let optional: Vec<usize> = (0..n)
        .filter(|&u| {
            state.waiting.pending[u].is_some() && state.waiting.wait_age[u] + 1 < beta
        })
        .collect();
    let q = optional.len();
    let f = forced.len();
    let extra_weights: Vec<f64> = (0..=q)
        .map(|j| {
            binomial(q, j) as f64
                * (POWER_LEVELS.len() as f64).powi(required_groups(f + j) as i32)
        })
        .collect();
    let extra = weighted_index(&extra_weights, rng);
    let mut schedule = vec![false; n];
    for &u in &forced {
        schedule[u] = true;
    }
    for idx in sample_subset(q, extra, rng) {
        schedule[optional[idx]] = true;
    }

    let groups = required_groups(f + extra);
    let power_levels = (0..groups)
        .map(|_| rng.gen_range(0..POWER_LEVELS.len()) as u8)
        .collect();

    ActionVector {
        proactive,
        schedule,
        power_levels,
    }
}

fn weighted_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Uniform k-subset of 0..n by partial Fisher-Yates.
fn sample_subset<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// A NOMA group: a near user and, unless the group is a solo, a far user.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub near: usize,
    pub far: Option<usize>,
}

/// Nearest-near-user / nearest-far-user pairing.
///
/// Scheduled users are sorted by distance to the UAV (ties by user id); the
/// nearer half pairs with the farther half in order, and with an odd count
/// the median user forms a solo group appended last.
pub fn form_groups(
    scheduled: &[usize],
    user_positions: &[Position3D],
    uav: Position3D,
) -> Vec<Group> {
    let distances: Vec<f64> = user_positions
        .iter()
        .map(|p| distance_3d(*p, uav))
        .collect();
    group_by_distance(scheduled, &distances)
}

/// [`form_groups`] over precomputed per-user distances.
pub fn group_by_distance(scheduled: &[usize], distances: &[f64]) -> Vec<Group> {
    let mut order: Vec<usize> = scheduled.to_vec();
    order.sort_by(|&a, &b| {
        distances[a]
            .partial_cmp(&distances[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let k = order.len();
    let pairs = k / 2;
    let mut groups: Vec<Group> = (0..pairs)
        .map(|i| Group {
            near: order[i],
            far: Some(order[k - pairs + i]),
        })
        .collect();
    if k % 2 == 1 {
        groups.push(Group {
            near: order[pairs],
            far: None,
        });
    }
    groups
}
