//! Content popularity, request generation and cache evolution.
//!
//! Requests persist until served: a user with an outstanding request never
//! generates a new one. Idle users generate a request each slot with
//! probability `R_g / N`, drawing the content from a Zipf law over
//! popularity rank.

use rand::Rng;

use crate::error::{Result, SimError};

/// Zipf popularity law over `M` contents ranked by popularity.
#[derive(Debug, Clone)]
pub struct ZipfPopularity {
    num_contents: usize,
    exponent: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl ZipfPopularity {
    pub fn new(num_contents: usize, exponent: f64) -> Result<Self> {
        let pmf = zipf_pmf(num_contents, exponent)?;
        let mut cdf = Vec::with_capacity(num_contents);
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        Ok(Self { num_contents, exponent, pmf, cdf })
    }

    pub fn num_contents(&self) -> usize {
        self.num_contents
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Maps a uniform draw in [0, 1) to a 0-based content index.
    pub fn sample_index(&self, u: f64) -> usize {
        match self.cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(i) | Err(i) => i.min(self.num_contents - 1),
        }
    }
}

/// Zipf probability mass function: `pmf[m] = (m+1)^-eta / sum_j j^-eta`,
/// 0-indexed over contents ranked by popularity.
pub fn zipf_pmf(num_contents: usize, exponent: f64) -> Result<Vec<f64>> {
    if num_contents == 0 {
        return Err(SimError::Domain("Zipf law needs at least one content".into()));
    }
    if !(exponent >= 0.0) {
        return Err(SimError::Domain(format!(
            "Zipf exponent must be >= 0, got {exponent}"
        )));
    }
    let weights: Vec<f64> = (1..=num_contents)
        .map(|rank| (rank as f64).powf(-exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Per-user outstanding requests and how long each has waited.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestState {
    /// Requested content per user, `None` when idle.
    pub pending: Vec<Option<usize>>,
    /// Whole slots each pending request has already waited; 0 for new
    /// requests and for idle users.
    pub wait_age: Vec<u32>,
    /// Request generating coefficient `R_g`; each idle user requests with
    /// probability `R_g / N` per slot.
    pub gen_coeff: f64,
}

impl RequestState {
    pub fn idle(num_users: usize, gen_coeff: f64) -> Self {
        Self {
            pending: vec![None; num_users],
            wait_age: vec![0; num_users],
            gen_coeff,
        }
    }

    pub fn num_users(&self) -> usize {
        self.pending.len()
    }

    /// Number of users currently waiting for a response.
    pub fn pending_count(&self) -> usize {
        self.pending.iter().filter(|p| p.is_some()).count()
    }

    /// Requester count per content.
    pub fn request_counts(&self, num_contents: usize) -> Vec<u32> {
        let mut counts = vec![0u32; num_contents];
        for content in self.pending.iter().flatten() {
            counts[*content] += 1;
        }
        counts
    }
}

/// One slot's worth of raw request randomness: for every user, whether the
/// generation coin came up and which content was drawn. Both values are
/// drawn for every user every slot — regardless of whether the user is idle
/// — so that the stream is identical across policies under a shared seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDraws {
    pub draws: Vec<(bool, usize)>,
}

/// Draws this slot's request randomness and applies it to idle users.
///
/// Pending requests are left untouched (persistence); ages are not modified
/// here — the environment increments unserved requests' ages before calling
/// this.
pub fn sample_requests<R: Rng>(
    state: &mut RequestState,
    pop: &ZipfPopularity,
    rng: &mut R,
) -> RequestDraws {
    let n = state.num_users();
    let p_gen = state.gen_coeff / n as f64;
    let mut draws = Vec::with_capacity(n);
    for user in 0..n {
        let coin = rng.gen::<f64>() < p_gen;
        let content = pop.sample_index(rng.gen::<f64>());
        draws.push((coin, content));
        if state.pending[user].is_none() && coin {
            state.pending[user] = Some(content);
            state.wait_age[user] = 0;
        }
    }
    RequestDraws { draws }
}

/// The UAV's content cache at the start of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    pub cached: Vec<bool>,
    pub capacity: usize,
}

impl CacheState {
    pub fn empty(num_contents: usize, capacity: usize) -> Self {
        Self {
            cached: vec![false; num_contents],
            capacity,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.cached.iter().filter(|c| **c).count()
    }
}

/// Per-content backhaul virtual queue indicators for one slot.
///
/// A content is queued when it is requested while uncached, or proactively
/// fetched while uncached; the UAV fetches any given content at most once
/// per slot.
pub fn update_virtual_queues(
    cache: &CacheState,
    request_counts: &[u32],
    proactive: &[bool],
) -> Vec<bool> {
    debug_assert_eq!(request_counts.len(), cache.cached.len());
    debug_assert_eq!(proactive.len(), cache.cached.len());
    cache
        .cached
        .iter()
        .zip(request_counts)
        .zip(proactive)
        .map(|((&cached, &count), &fetch)| !cached && (count > 0 || fetch))
        .collect()
}

/// Replaces the cache with the proactive index: the cache at slot `t + 1`
/// equals `I(t)` exactly, so contents absent from the index are evicted.
pub fn update_cache(cache: &CacheState, proactive: &[bool]) -> Result<CacheState> {
    let chosen = proactive.iter().filter(|i| **i).count();
    if chosen > cache.capacity {
        return Err(SimError::Contract(format!(
            "proactive index selects {chosen} contents but cache capacity is {}",
            cache.capacity
        )));
    }
    Ok(CacheState {
        cached: proactive.to_vec(),
        capacity: cache.capacity,
    })
}
