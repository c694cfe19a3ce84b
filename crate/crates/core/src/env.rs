//! The simulation environment: scenario geometry, per-slot channel state,
//! instantaneous cost evaluation and the MDP transition.
//!
//! One `Env` owns its RNG and is single-threaded; independent instances can
//! run concurrently. All request randomness is drawn from the environment's
//! own stream in a fixed per-slot pattern, so two environments built with
//! the same seed see identical request draws no matter which policy drives
//! them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    avg_path_loss, backhaul_sinr, db_to_linear, dbm_to_watts, distance_3d, Position3D,
    RadioParams, Trajectory,
};
use crate::demand::{
    sample_requests, update_cache, update_virtual_queues, CacheState, RequestState,
    ZipfPopularity,
};
use crate::error::{Result, SimError};
use crate::mdp::{
    count_legal_actions, enumerate_legal_actions, group_by_distance, is_legal, required_groups,
    sample_legal_action, ActionVector, Group, NetworkState, POWER_LEVELS,
};

/// Scenario constants: library, users, cache, demand, radio and geometry.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub num_users: usize,
    pub num_contents: usize,
    pub cache_capacity: usize,
    pub zipf_exponent: f64,
    /// Request generating coefficient `R_g`.
    pub request_gen_coeff: f64,
    /// Scheduling delay limit in slots.
    pub beta: u32,
    /// Slot length, seconds.
    pub slot_length_s: f64,
    /// Content size, bits.
    pub content_size_bits: f64,
    pub radio: RadioParams,
    pub altitude_m: f64,
    pub uav_speed_mps: f64,
    pub trajectory_radius_m: f64,
    /// Hexagonal cell side length, metres.
    pub cell_side_m: f64,
    /// Maximum legal-action-space size for exhaustive enumeration.
    pub enumeration_guard: u128,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_users: 8,
            num_contents: 4,
            cache_capacity: 2,
            zipf_exponent: 0.8,
            request_gen_coeff: 2.0,
            beta: 2,
            slot_length_s: 0.05,
            content_size_bits: 16e6, // 2 MB, decimal megabytes
            radio: RadioParams {
                mbs_power_dbm: 46.0,
                uav_power_dbm: 30.0,
                neighbor_power_dbm: vec![46.0; 6],
                backhaul_bandwidth_hz: 20e6,
                access_bandwidth_hz: 20e6,
                noise_density_dbm_hz: -174.0,
                carrier_ghz: 2.0,
            },
            altitude_m: 100.0,
            uav_speed_mps: 20.0,
            trajectory_radius_m: 100.0,
            cell_side_m: 100.0,
            enumeration_guard: 1_000_000,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_users > 64 {
            return Err(SimError::Validation(format!(
                "user count must be in 1..=64, got {}",
                self.num_users
            )));
        }
        if self.num_contents == 0 || self.num_contents > 64 {
            return Err(SimError::Validation(format!(
                "content count must be in 1..=64, got {}",
                self.num_contents
            )));
        }
        if self.cache_capacity > self.num_contents {
            return Err(SimError::Validation(format!(
                "cache capacity {} exceeds content count {}",
                self.cache_capacity, self.num_contents
            )));
        }
        if self.beta == 0 {
            return Err(SimError::Validation("beta must be at least 1".into()));
        }
        let max_coeff = self.num_users as f64 / self.beta as f64;
        if !(self.request_gen_coeff >= 0.0 && self.request_gen_coeff <= max_coeff) {
            return Err(SimError::Validation(format!(
                "request coefficient must satisfy 0 <= R_g <= N/beta = {max_coeff}, got {}",
                self.request_gen_coeff
            )));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(SimError::Validation(
                "Zipf exponent must be non-negative".into(),
            ));
        }
        if self.slot_length_s <= 0.0 || self.content_size_bits <= 0.0 {
            return Err(SimError::Validation(
                "slot length and content size must be positive".into(),
            ));
        }
        if self.altitude_m <= 0.0 || self.trajectory_radius_m <= 0.0 || self.cell_side_m <= 0.0 {
            return Err(SimError::Validation(
                "altitude, trajectory radius and cell side must be positive".into(),
            ));
        }
        if self.uav_speed_mps < 0.0 {
            return Err(SimError::Validation("UAV speed must be non-negative".into()));
        }
        self.radio.validate().map_err(|e| SimError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn uav_power_w(&self) -> f64 {
        dbm_to_watts(self.radio.uav_power_dbm)
    }
}

/// Channel quantities that are fixed within one slot.
#[derive(Debug, Clone)]
pub struct SlotChannel {
    pub slot: u64,
    pub uav: Position3D,
    /// Backhaul SINR, linear.
    pub backhaul_sinr: f64,
    /// Backhaul rate `B_B * log2(1 + SINR)`, bit/s.
    pub backhaul_rate: f64,
    /// Average path loss UAV -> user, dB, indexed by user.
    pub user_loss_db: Vec<f64>,
    /// Linear channel gain `10^(-loss/10)` per user.
    pub user_gain_lin: Vec<f64>,
    /// 3D distance UAV -> user, metres.
    pub user_dist: Vec<f64>,
}

/// Instantaneous cost of one action in the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub backhaul_s: f64,
    pub access_s: f64,
    pub scheduling_s: f64,
    pub cache_hits: u32,
    pub cache_misses: u32,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.backhaul_s + self.access_s + self.scheduling_s
    }
}

/// Result of advancing the environment by one slot.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: NetworkState,
    pub cost_s: f64,
    pub backhaul_s: f64,
    pub access_s: f64,
    pub scheduling_s: f64,
    pub cache_hits: u32,
    pub cache_misses: u32,
}

/// Per-content backhaul transmission delays for one slot.
///
/// The backhaul bandwidth is split evenly across the queued contents, so
/// each queued content sees rate `R_B / sum(mu)`.
pub fn backhaul_delay(
    mu: &[bool],
    gamma_b: f64,
    content_size_bits: f64,
    bandwidth_hz: f64,
) -> Result<Vec<f64>> {
    if gamma_b < 0.0 {
        return Err(SimError::Domain(format!(
            "backhaul SINR must be non-negative, got {gamma_b}"
        )));
    }
    let queued = mu.iter().filter(|m| **m).count();
    if queued == 0 {
        return Ok(vec![0.0; mu.len()]);
    }
    let rate = bandwidth_hz * (1.0 + gamma_b).log2();
    if !(rate > 0.0) {
        return Err(SimError::Domain(
            "backhaul rate collapsed to zero; delay would be infinite".into(),
        ));
    }
    let per_queue = rate / queued as f64;
    Ok(mu
        .iter()
        .map(|&m| if m { content_size_bits / per_queue } else { 0.0 })
        .collect())
}

/// Per-user radio access delays for the scheduled users.
///
/// Group `g` gets an even share `p_uav / G` of the UAV power and every
/// served user gets a `2 B_A / sum(b)` bandwidth share. A paired near user
/// decodes after SIC; the far user sees the near user's superposed signal as
/// interference; a solo user gets the whole group power (coefficient 1).
#[allow(clippy::too_many_arguments)]
pub fn access_delay(
    groups: &[Group],
    power_levels: &[u8],
    scheduled_count: usize,
    access_bandwidth_hz: f64,
    content_size_bits: f64,
    user_loss_db: &[f64],
    noise_w: f64,
    uav_power_w: f64,
) -> Result<Vec<(usize, f64)>> {
    if scheduled_count == 0 || groups.is_empty() {
        return Ok(Vec::new());
    }
    if power_levels.len() != groups.len() {
        return Err(SimError::Contract(format!(
            "need one power level per group: {} levels for {} groups",
            power_levels.len(),
            groups.len()
        )));
    }
    let share = 2.0 * access_bandwidth_hz / scheduled_count as f64;
    let p_g = uav_power_w / groups.len() as f64;
    let mut delays = Vec::with_capacity(scheduled_count);
    for (group, &level) in groups.iter().zip(power_levels) {
        match group.far {
            Some(far) => {
                let h_g = POWER_LEVELS[level as usize];
                let gain_nu = db_to_linear(-user_loss_db[group.near]);
                let gain_fu = db_to_linear(-user_loss_db[far]);
                let gamma_nu = p_g * h_g * gain_nu / noise_w;
                let gamma_fu =
                    p_g * (1.0 - h_g) * gain_fu / (p_g * h_g * gain_fu + noise_w);
                let rate_nu = share * (1.0 + gamma_nu).log2();
                let rate_fu = share * (1.0 + gamma_fu).log2();
                if !(rate_nu > 0.0) || !(rate_fu > 0.0) {
                    return Err(SimError::Domain(
                        "access rate collapsed to zero; delay would be infinite".into(),
                    ));
                }
                delays.push((group.near, content_size_bits / rate_nu));
                delays.push((far, content_size_bits / rate_fu));
            }
            None => {
                let gamma = p_g * db_to_linear(-user_loss_db[group.near]) / noise_w;
                let rate = share * (1.0 + gamma).log2();
                if !(rate > 0.0) {
                    return Err(SimError::Domain(
                        "access rate collapsed to zero; delay would be infinite".into(),
                    ));
                }
                delays.push((group.near, content_size_bits / rate));
            }
        }
    }
    Ok(delays)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(FNV_PRIME);
    }
}

/// The cache-enabling UAV NOMA cell.
pub struct Env {
    cfg: EnvConfig,
    trajectory: Trajectory,
    mbs: Position3D,
    neighbors: Vec<Position3D>,
    user_positions: Vec<Position3D>,
    zipf: ZipfPopularity,
    state: NetworkState,
    rng: ChaCha8Rng,
    channel: SlotChannel,
    request_hash: u64,
}

impl Env {
    /// Builds the scenario for one episode.
    ///
    /// Draw order from the seed: trajectory centre, then user positions,
    /// then the slot-1 requests. Identical seeds therefore give identical
    /// geometry and request streams regardless of the acting policy.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = sample_in_hexagon(cfg.cell_side_m, &mut rng);
        let trajectory = Trajectory {
            center,
            radius: cfg.trajectory_radius_m,
            speed: cfg.uav_speed_mps,
            altitude: cfg.altitude_m,
            slot_length: cfg.slot_length_s,
        };
        trajectory.validate()?;
        let user_positions: Vec<Position3D> = (0..cfg.num_users)
            .map(|_| sample_in_hexagon(cfg.cell_side_m, &mut rng))
            .collect();
        let mbs = Position3D::ground(0.0, 0.0);
        let spacing = 3f64.sqrt() * cfg.cell_side_m;
        let neighbors: Vec<Position3D> = (0..cfg.radio.neighbor_power_dbm.len())
            .map(|k| {
                let angle = k as f64 * std::f64::consts::FRAC_PI_3;
                Position3D::ground(spacing * angle.cos(), spacing * angle.sin())
            })
            .collect();
        let zipf = ZipfPopularity::new(cfg.num_contents, cfg.zipf_exponent)?;

        let mut waiting = RequestState::idle(cfg.num_users, cfg.request_gen_coeff);
        let mut request_hash = FNV_OFFSET;
        let draws = sample_requests(&mut waiting, &zipf, &mut rng);
        hash_draws(&mut request_hash, &draws.draws);

        let state = NetworkState {
            cache: CacheState::empty(cfg.num_contents, cfg.cache_capacity),
            waiting,
            slot: 1,
        };
        let channel = compute_slot_channel(&cfg, &trajectory, &mbs, &neighbors, &user_positions, 1)?;
        Ok(Self {
            cfg,
            trajectory,
            mbs,
            neighbors,
            user_positions,
            zipf,
            state,
            rng,
            channel,
            request_hash,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn slot_channel(&self) -> &SlotChannel {
        &self.channel
    }

    pub fn user_positions(&self) -> &[Position3D] {
        &self.user_positions
    }

    /// FNV-1a digest of every request draw made so far; identical across
    /// policies running the same seed.
    pub fn request_stream_hash(&self) -> u64 {
        self.request_hash
    }

    /// Replaces the current state (e.g. to evaluate a hand-built scenario).
    /// The per-slot channel is refreshed for the new slot index.
    pub fn set_state(&mut self, state: NetworkState) -> Result<()> {
        if state.num_contents() != self.cfg.num_contents
            || state.num_users() != self.cfg.num_users
        {
            return Err(SimError::Contract(
                "state dimensions do not match the environment".into(),
            ));
        }
        self.channel = compute_slot_channel(
            &self.cfg,
            &self.trajectory,
            &self.mbs,
            &self.neighbors,
            &self.user_positions,
            state.slot,
        )?;
        self.state = state;
        Ok(())
    }

    pub fn is_legal(&self, action: &ActionVector) -> bool {
        is_legal(&self.state, action, self.cfg.beta)
    }

    pub fn count_legal(&self) -> u128 {
        count_legal_actions(&self.state, self.cfg.beta)
    }

    pub fn enumerate_legal(&self) -> Result<Vec<ActionVector>> {
        enumerate_legal_actions(&self.state, self.cfg.beta, self.cfg.enumeration_guard)
    }

    pub fn sample_legal<R: Rng>(&self, rng: &mut R) -> ActionVector {
        sample_legal_action(&self.state, self.cfg.beta, rng)
    }

    /// Instantaneous cost of a legal action in the current state. Pure: the
    /// environment is not advanced and no randomness is consumed.
    pub fn evaluate(&self, action: &ActionVector) -> Result<CostBreakdown> {
        if !self.is_legal(action) {
            return Err(SimError::Contract(
                "attempted to evaluate an illegal action".into(),
            ));
        }
        let counts = self.state.waiting.request_counts(self.cfg.num_contents);
        let mu = update_virtual_queues(&self.state.cache, &counts, &action.proactive);
        let backhaul = backhaul_delay(
            &mu,
            self.channel.backhaul_sinr,
            self.cfg.content_size_bits,
            self.cfg.radio.backhaul_bandwidth_hz,
        )?
        .iter()
        .sum::<f64>();

        let scheduled = action.scheduled_users();
        let mut access = 0.0;
        let mut hits = 0u32;
        let mut misses = 0u32;
        if !scheduled.is_empty() {
            let groups = group_by_distance(&scheduled, &self.channel.user_dist);
            let delays = access_delay(
                &groups,
                &action.power_levels,
                scheduled.len(),
                self.cfg.radio.access_bandwidth_hz,
                self.cfg.content_size_bits,
                &self.channel.user_loss_db,
                self.cfg.radio.access_noise_w(),
                self.cfg.uav_power_w(),
            )?;
            access = delays.iter().map(|(_, d)| d).sum();
            for &user in &scheduled {
                let content = self.state.waiting.pending[user]
                    .expect("legality guarantees scheduled users are pending");
                if self.state.cache.cached[content] {
                    hits += 1;
                } else {
                    misses += 1;
                }
            }
        }

        let pending = self.state.waiting.pending_count();
        let scheduling = (pending - scheduled.len()) as f64 * self.cfg.slot_length_s;
        Ok(CostBreakdown {
            backhaul_s: backhaul,
            access_s: access,
            scheduling_s: scheduling,
            cache_hits: hits,
            cache_misses: misses,
        })
    }

    /// Advances one slot: evaluates the action's cost, applies the cache and
    /// schedule transition, ages unserved requests and draws new ones.
    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        let bd = self.evaluate(action)?;

        for n in 0..self.cfg.num_users {
            if action.schedule[n] {
                self.state.waiting.pending[n] = None;
                self.state.waiting.wait_age[n] = 0;
            } else if self.state.waiting.pending[n].is_some() {
                self.state.waiting.wait_age[n] += 1;
                if self.state.waiting.wait_age[n] >= self.cfg.beta {
                    return Err(SimError::Contract(format!(
                        "user {n} reached wait age {} with beta {}",
                        self.state.waiting.wait_age[n], self.cfg.beta
                    )));
                }
            }
        }
        self.state.cache = update_cache(&self.state.cache, &action.proactive)?;
        let draws = sample_requests(&mut self.state.waiting, &self.zipf, &mut self.rng);
        hash_draws(&mut self.request_hash, &draws.draws);
        self.state.slot += 1;
        self.channel = compute_slot_channel(
            &self.cfg,
            &self.trajectory,
            &self.mbs,
            &self.neighbors,
            &self.user_positions,
            self.state.slot,
        )?;

        Ok(StepOutcome {
            next_state: self.state.clone(),
            cost_s: bd.total(),
            backhaul_s: bd.backhaul_s,
            access_s: bd.access_s,
            scheduling_s: bd.scheduling_s,
            cache_hits: bd.cache_hits,
            cache_misses: bd.cache_misses,
        })
    }

    /// Length of the relaxed decision vector `[caching | schedule | powers]`.
    pub fn relaxed_dim(&self) -> usize {
        self.cfg.num_contents + self.cfg.num_users + self.cfg.num_users.div_ceil(2)
    }

    /// Box constraints of relaxed coordinate `i`.
    pub fn relaxed_bounds(&self, i: usize) -> (f64, f64) {
        if i < self.cfg.num_contents + self.cfg.num_users {
            (0.0, 1.0)
        } else {
            (POWER_LEVELS[0], POWER_LEVELS[POWER_LEVELS.len() - 1])
        }
    }

    /// Coordinates of the relaxed vector that can influence the relaxed cost
    /// in the current state (all caching entries, pending users' schedule
    /// entries, and the power slots of their groups).
    pub fn relaxed_active_coords(&self) -> Vec<usize> {
        let m = self.cfg.num_contents;
        let n = self.cfg.num_users;
        let mut coords: Vec<usize> = (0..m).collect();
        let mut pending = 0usize;
        for u in 0..n {
            if self.state.waiting.pending[u].is_some() {
                coords.push(m + u);
                pending += 1;
            }
        }
        for g in 0..required_groups(pending) {
            coords.push(m + n + g);
        }
        coords
    }

    /// Slot-invariant quantities of the relaxed cost, precomputed so the SGD
    /// search can evaluate thousands of candidate vectors without
    /// reallocating.
    pub fn relaxed_context(&self) -> RelaxedContext {
        let m = self.cfg.num_contents;
        let counts = self.state.waiting.request_counts(m);
        let fetchable: Vec<(usize, bool)> = (0..m)
            .filter(|&c| !self.state.cache.cached[c])
            .map(|c| (c, counts[c] > 0))
            .collect();
        let pending: Vec<usize> = (0..self.cfg.num_users)
            .filter(|&u| self.state.waiting.pending[u].is_some())
            .collect();
        let groups = group_by_distance(&pending, &self.channel.user_dist);
        let p_g = if groups.is_empty() {
            0.0
        } else {
            self.cfg.uav_power_w() / groups.len() as f64
        };
        RelaxedContext {
            fetchable,
            pending,
            groups,
            p_g,
            noise_w: self.cfg.radio.access_noise_w(),
            backhaul_rate: self.channel.backhaul_rate,
        }
    }

    /// Continuous relaxation of the instantaneous cost.
    ///
    /// Caching entries relax to [0, 1] inside the virtual-queue clamp;
    /// schedule entries enter the bandwidth share and the scheduling term
    /// linearly; power slots relax to [0.1, 0.5]. Groups are formed over all
    /// pending users so the pairing stays fixed while the vector moves.
    pub fn relaxed_cost(&self, x: &[f64]) -> f64 {
        self.relaxed_cost_with(&self.relaxed_context(), x)
    }

    /// [`Env::relaxed_cost`] against a precomputed [`RelaxedContext`].
    pub fn relaxed_cost_with(&self, ctx: &RelaxedContext, x: &[f64]) -> f64 {
        let m = self.cfg.num_contents;
        let n = self.cfg.num_users;
        debug_assert_eq!(x.len(), self.relaxed_dim());

        let mut mu_sum = 0.0;
        for &(content, requested) in &ctx.fetchable {
            let rho = if requested { 1.0 } else { 0.0 };
            mu_sum += (rho + x[content].clamp(0.0, 1.0)).min(1.0);
        }
        let backhaul = self.cfg.content_size_bits * mu_sum * mu_sum / ctx.backhaul_rate;

        let mut scheduling = 0.0;
        let mut sb = 0.0;
        for &u in &ctx.pending {
            let b = x[m + u].clamp(0.0, 1.0);
            sb += b;
            scheduling += (1.0 - b) * self.cfg.slot_length_s;
        }

        let mut access = 0.0;
        if sb > 1e-12 {
            let share = 2.0 * self.cfg.radio.access_bandwidth_hz / sb;
            for (gi, group) in ctx.groups.iter().enumerate() {
                let h_g = x[m + n + gi].clamp(POWER_LEVELS[0], *POWER_LEVELS.last().unwrap());
                match group.far {
                    Some(far) => {
                        let b_near = x[m + group.near].clamp(0.0, 1.0);
                        if b_near > 0.0 {
                            let gamma = ctx.p_g * h_g * self.channel.user_gain_lin[group.near]
                                / ctx.noise_w;
                            access += b_near * self.cfg.content_size_bits
                                / (share * (1.0 + gamma).log2());
                        }
                        let b_far = x[m + far].clamp(0.0, 1.0);
                        if b_far > 0.0 {
                            let gain = self.channel.user_gain_lin[far];
                            let gamma = ctx.p_g * (1.0 - h_g) * gain
                                / (ctx.p_g * h_g * gain + ctx.noise_w);
                            access += b_far * self.cfg.content_size_bits
                                / (share * (1.0 + gamma).log2());
                        }
                    }
                    None => {
                        let b = x[m + group.near].clamp(0.0, 1.0);
                        if b > 0.0 {
                            let gamma = ctx.p_g * self.channel.user_gain_lin[group.near]
                                / ctx.noise_w;
                            access += b * self.cfg.content_size_bits
                                / (share * (1.0 + gamma).log2());
                        }
                    }
                }
            }
        }
        backhaul + access + scheduling
    }
}

/// Precomputed per-slot inputs of the relaxed cost (see
/// [`Env::relaxed_context`]).
#[derive(Debug, Clone)]
pub struct RelaxedContext {
    /// Uncached contents and whether each is requested this slot.
    fetchable: Vec<(usize, bool)>,
    /// Users with an outstanding request.
    pending: Vec<usize>,
    /// NOMA pairing over all pending users.
    groups: Vec<Group>,
    /// Per-group power if every pending group were served.
    p_g: f64,
    noise_w: f64,
    backhaul_rate: f64,
}

fn hash_draws(hash: &mut u64, draws: &[(bool, usize)]) {
    for (coin, content) in draws {
        fnv1a(hash, &[*coin as u8]);
        fnv1a(hash, &(*content as u32).to_le_bytes());
    }
}

fn compute_slot_channel(
    cfg: &EnvConfig,
    trajectory: &Trajectory,
    mbs: &Position3D,
    neighbors: &[Position3D],
    users: &[Position3D],
    slot: u64,
) -> Result<SlotChannel> {
    let uav = trajectory.position_at(slot);
    let f = cfg.radio.carrier_ghz;
    let h = cfg.altitude_m;
    let serving_loss = avg_path_loss(distance_3d(*mbs, uav), h, f)?;
    let neighbor_losses: Vec<f64> = neighbors
        .iter()
        .map(|p| avg_path_loss(distance_3d(*p, uav), h, f))
        .collect::<Result<_>>()?;
    let gamma_b = backhaul_sinr(serving_loss, &neighbor_losses, &cfg.radio)?;
    let rate_b = cfg.radio.backhaul_bandwidth_hz * (1.0 + gamma_b).log2();
    let mut user_loss_db = Vec::with_capacity(users.len());
    let mut user_gain_lin = Vec::with_capacity(users.len());
    let mut user_dist = Vec::with_capacity(users.len());
    for p in users {
        let d = distance_3d(*p, uav);
        let loss = avg_path_loss(d, h, f)?;
        user_loss_db.push(loss);
        user_gain_lin.push(db_to_linear(-loss));
        user_dist.push(d);
    }
    Ok(SlotChannel {
        slot,
        uav,
        backhaul_sinr: gamma_b,
        backhaul_rate: rate_b,
        user_loss_db,
        user_gain_lin,
        user_dist,
    })
}

/// Uniform point in a regular hexagon (vertex up) with circumradius `side`,
/// centred at the origin, by rejection from the bounding box.
fn sample_in_hexagon<R: Rng>(side: f64, rng: &mut R) -> Position3D {
    let half_width = 3f64.sqrt() * side / 2.0;
    loop {
        let x = rng.gen_range(-half_width..half_width);
        let y = rng.gen_range(-side..side);
        if y.abs() <= side - x.abs() / 3f64.sqrt() {
            return Position3D::ground(x, y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::noise_power_w;

    fn small_cfg() -> EnvConfig {
        EnvConfig {
            num_users: 2,
            num_contents: 2,
            cache_capacity: 1,
            request_gen_coeff: 1.0,
            ..EnvConfig::default()
        }
    }

    fn pending_state(env: &Env, pending: &[(usize, usize, u32)]) -> NetworkState {
        let mut state = env.state().clone();
        for p in state.waiting.pending.iter_mut() {
            *p = None;
        }
        for a in state.waiting.wait_age.iter_mut() {
            *a = 0;
        }
        for &(user, content, age) in pending {
            state.waiting.pending[user] = Some(content);
            state.waiting.wait_age[user] = age;
        }
        state
    }

    #[test]
    fn backhaul_delay_worked_examples() {
        // R_B = 100 Mbit/s via gamma = 31 over 20 MHz.
        let gamma = 31.0;
        let one = backhaul_delay(&[true, false], gamma, 16e6, 20e6).unwrap();
        assert!((one[0] - 0.16).abs() < 1e-12);
        assert_eq!(one[1], 0.0);
        let two = backhaul_delay(&[true, true], gamma, 16e6, 20e6).unwrap();
        assert!((two[0] - 0.32).abs() < 1e-12);
        assert!((two[1] - 0.32).abs() < 1e-12);
        // No queued contents: all zeros.
        let none = backhaul_delay(&[false, false], gamma, 16e6, 20e6).unwrap();
        assert_eq!(none, vec![0.0, 0.0]);
    }

    #[test]
    fn backhaul_delay_rejects_negative_sinr() {
        assert!(backhaul_delay(&[true], -1.0, 16e6, 20e6).is_err());
    }

    #[test]
    fn access_delay_worked_example() {
        // One pair, share = 2*20e6/2 = 20 MHz, gamma_NU = 15 -> 80 Mbit/s.
        let groups = vec![Group { near: 0, far: Some(1) }];
        // direct gain so that p_g * h * gain / noise = 15 with p_g = 2, h = 0.5
        let noise = 1.0;
        let loss_nu = -10.0 * 15f64.log10(); // gain 15
        let loss_fu = 60.0;
        let delays = access_delay(
            &groups,
            &[4], // level 0.5
            2,
            20e6,
            16e6,
            &[loss_nu, loss_fu],
            noise,
            2.0,
        )
        .unwrap();
        let near = delays.iter().find(|(u, _)| *u == 0).unwrap().1;
        assert!((near - 0.2).abs() < 1e-12, "got {near}");
    }

    #[test]
    fn access_delay_scales_with_scheduled_count() {
        let groups = vec![Group { near: 0, far: Some(1) }];
        let losses = [80.0, 90.0];
        let noise = noise_power_w(-174.0, 20e6);
        let d2 = access_delay(&groups, &[2], 2, 20e6, 16e6, &losses, noise, 1.0).unwrap();
        let d4 = access_delay(&groups, &[2], 4, 20e6, 16e6, &losses, noise, 1.0).unwrap();
        for ((_, a), (_, b)) in d2.iter().zip(&d4) {
            assert!((b / a - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn access_delay_solo_uses_full_coefficient() {
        let groups = vec![Group { near: 0, far: None }];
        let losses = [80.0];
        let noise = noise_power_w(-174.0, 20e6);
        let delays = access_delay(&groups, &[0], 1, 20e6, 16e6, &losses, noise, 1.0).unwrap();
        let share = 2.0 * 20e6 / 1.0;
        let gamma = 1.0 * db_to_linear(-80.0) / noise;
        let expected = 16e6 / (share * (1.0 + gamma).log2());
        assert!((delays[0].1 - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_action_with_no_pending_costs_nothing() {
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[]);
        env.set_state(state).unwrap();
        let bd = env.evaluate(&ActionVector::empty(2, 2)).unwrap();
        assert_eq!(bd.total(), 0.0);
    }

    #[test]
    fn step_cost_composes_the_three_terms() {
        // Both users pend uncached content 0, both scheduled, I = {0}.
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[(0, 0, 0), (1, 0, 0)]);
        env.set_state(state).unwrap();
        let action = ActionVector {
            proactive: vec![true, false],
            schedule: vec![true, true],
            power_levels: vec![2],
        };
        let bd = env.evaluate(&action).unwrap();

        // Independent composition from the channel snapshot.
        let ch = env.slot_channel().clone();
        let d_b = 16e6 / ch.backhaul_rate; // one queued content
        let groups = group_by_distance(&[0, 1], &ch.user_dist);
        let noise = env.config().radio.access_noise_w();
        let d_a: f64 = access_delay(
            &groups,
            &[2],
            2,
            20e6,
            16e6,
            &ch.user_loss_db,
            noise,
            env.config().uav_power_w(),
        )
        .unwrap()
        .iter()
        .map(|(_, d)| d)
        .sum();
        assert!((bd.backhaul_s - d_b).abs() < 1e-12);
        assert!((bd.access_s - d_a).abs() < 1e-12);
        assert_eq!(bd.scheduling_s, 0.0);
        assert!((bd.total() - (d_b + d_a)).abs() < 1e-12);
        // Both users requested an uncached content.
        assert_eq!(bd.cache_hits, 0);
        assert_eq!(bd.cache_misses, 2);
    }

    #[test]
    fn scheduling_term_counts_postponed_users() {
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[(0, 0, 0), (1, 1, 0)]);
        env.set_state(state).unwrap();
        let bd = env.evaluate(&ActionVector::empty(2, 2)).unwrap();
        assert!((bd.scheduling_s - 2.0 * 0.05).abs() < 1e-12);
        assert_eq!(bd.access_s, 0.0);
        // Backhaul still fetches the two requested uncached contents.
        assert!(bd.backhaul_s > 0.0);
    }

    #[test]
    fn step_rejects_illegal_action() {
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[(0, 0, 1)]);
        env.set_state(state).unwrap();
        let err = env.step(&ActionVector::empty(2, 2));
        assert!(err.is_err());
    }

    #[test]
    fn step_applies_cache_and_ages() {
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[(0, 0, 0), (1, 1, 0)]);
        env.set_state(state).unwrap();
        let action = ActionVector {
            proactive: vec![false, true],
            schedule: vec![true, false],
            power_levels: vec![1],
        };
        let outcome = env.step(&action).unwrap();
        let next = &outcome.next_state;
        assert_eq!(next.cache.cached, vec![false, true]);
        // User 0 served; user 1 aged by one (unless it was re-drawn, which
        // persistence forbids).
        assert_eq!(next.waiting.pending[1], Some(1));
        assert_eq!(next.waiting.wait_age[1], 1);
        assert_eq!(next.slot, 2);
    }

    #[test]
    fn determinism_same_seed_same_trace() {
        let cfg = EnvConfig::default();
        let mut a = Env::new(cfg.clone(), 7).unwrap();
        let mut b = Env::new(cfg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let action = a.sample_legal(&mut rng);
            let oa = a.step(&action).unwrap();
            let ob = b.step(&action).unwrap();
            assert_eq!(oa.cost_s, ob.cost_s);
            assert_eq!(oa.next_state, ob.next_state);
        }
        assert_eq!(a.request_stream_hash(), b.request_stream_hash());
    }

    #[test]
    fn request_stream_identical_across_policies() {
        // Different action sequences, same seed: identical draw streams.
        let cfg = EnvConfig::default();
        let mut a = Env::new(cfg.clone(), 9).unwrap();
        let mut b = Env::new(cfg, 9).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(100);
        let mut rng_b = ChaCha8Rng::seed_from_u64(200);
        for _ in 0..200 {
            let act_a = a.sample_legal(&mut rng_a);
            let act_b = b.sample_legal(&mut rng_b);
            a.step(&act_a).unwrap();
            b.step(&act_b).unwrap();
        }
        assert_eq!(a.request_stream_hash(), b.request_stream_hash());
    }

    #[test]
    fn breakdown_sums_to_cost_along_random_runs() {
        let mut env = Env::new(EnvConfig::default(), 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let action = env.sample_legal(&mut rng);
            let o = env.step(&action).unwrap();
            assert!(o.cost_s >= 0.0);
            assert!(
                (o.cost_s - (o.backhaul_s + o.access_s + o.scheduling_s)).abs() < 1e-12
            );
        }
    }

    #[test]
    fn wait_age_never_reaches_beta_under_legal_play() {
        let mut env = Env::new(EnvConfig::default(), 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let action = env.sample_legal(&mut rng);
            env.step(&action).unwrap();
            let beta = env.config().beta;
            for (&p, &age) in env
                .state()
                .waiting
                .pending
                .iter()
                .zip(&env.state().waiting.wait_age)
            {
                if p.is_some() {
                    assert!(age < beta);
                }
            }
        }
    }

    #[test]
    fn hexagon_sampling_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let side = 100.0;
        for _ in 0..10_000 {
            let p = sample_in_hexagon(side, &mut rng);
            assert!(p.y.abs() <= side - p.x.abs() / 3f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn relaxed_cost_matches_discrete_on_binary_points() {
        // A binary relaxed vector with all pending users scheduled must agree
        // with the exact evaluator (same grouping and power split).
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[(0, 0, 0), (1, 1, 0)]);
        env.set_state(state).unwrap();
        let action = ActionVector {
            proactive: vec![true, false],
            schedule: vec![true, true],
            power_levels: vec![2],
        };
        let exact = env.evaluate(&action).unwrap().total();
        let mut x = vec![0.0; env.relaxed_dim()];
        x[0] = 1.0; // cache content 0
        x[2] = 1.0; // schedule user 0
        x[3] = 1.0; // schedule user 1
        x[4] = POWER_LEVELS[2];
        let relaxed = env.relaxed_cost(&x);
        assert!((relaxed - exact).abs() < 1e-9, "{relaxed} vs {exact}");
    }

    #[test]
    fn relaxed_cost_zero_vector_is_pure_postponement() {
        let mut env = Env::new(small_cfg(), 42).unwrap();
        let state = pending_state(&env, &[(0, 0, 0), (1, 1, 0)]);
        env.set_state(state).unwrap();
        let mut x = vec![0.0; env.relaxed_dim()];
        x[4] = 0.3;
        let c = env.relaxed_cost(&x);
        let bd = env.evaluate(&ActionVector::empty(2, 2)).unwrap();
        assert!((c - bd.total()).abs() < 1e-9);
    }
}
