//! Discrete-time simulator of a cache-enabling UAV NOMA cell.
//!
//! A rotary-wing UAV base station with a small content cache serves ground
//! users over NOMA downlinks while fetching uncached contents from a macro
//! base station over a wireless backhaul. Each slot the UAV picks a caching
//! placement, a user schedule and per-group NOMA power levels; the per-slot
//! cost is the sum of backhaul, radio-access and scheduling delays.
//!
//! The crate is organised as:
//!
//! - [`channel`]: geometry, air-to-ground path loss and SINR formulas.
//! - [`demand`]: Zipf popularity, request persistence, cache and virtual
//!   queue evolution.
//! - [`mdp`]: state/action types, action legality, enumeration, uniform
//!   legal-action sampling and NOMA group formation.
//! - [`env`]: the environment — per-slot channel snapshot, cost evaluation
//!   and the state transition.
//! - [`agents`]: tabular Q-learning, the SGD + neural function-approximation
//!   agent, and greedy / fixed / random baselines.
//! - [`harness`]: config parsing, experiment runner, CSV metrics and SVG
//!   plot emission.

pub mod agents;
pub mod channel;
pub mod demand;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;

pub use error::{Result, SimError};

/// Mixes a seed with a salt into an independent stream seed (splitmix64).
///
/// Used to derive per-agent RNG streams from the scenario seed so that agent
/// exploration noise never perturbs the environment's request stream.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
