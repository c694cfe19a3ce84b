//! Per-run delay traces, moving averages and summary records.

use serde::{Deserialize, Serialize};

use crate::env::StepOutcome;

/// Per-slot cost series of one run, with the cost breakdown and cache
/// hit/miss counters.
#[derive(Debug, Clone, Default)]
pub struct DelayTrace {
    pub cost_s: Vec<f64>,
    pub backhaul_s: Vec<f64>,
    pub access_s: Vec<f64>,
    pub scheduling_s: Vec<f64>,
    pub cache_hits: Vec<u32>,
    pub cache_misses: Vec<u32>,
    /// Number of distinct actions discovered (Q-learning diagnostics; 0 for
    /// agents without an action list).
    pub explored_actions: usize,
}

impl DelayTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, outcome: &StepOutcome) {
        self.cost_s.push(outcome.cost_s);
        self.backhaul_s.push(outcome.backhaul_s);
        self.access_s.push(outcome.access_s);
        self.scheduling_s.push(outcome.scheduling_s);
        self.cache_hits.push(outcome.cache_hits);
        self.cache_misses.push(outcome.cache_misses);
    }

    pub fn len(&self) -> usize {
        self.cost_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost_s.is_empty()
    }

    /// Trailing moving average of the cost series: entry `t` averages the
    /// last `window` slots up to and including `t`.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        moving_average(&self.cost_s, window)
    }

    /// Mean cost over the final `window` slots (the whole run if shorter).
    pub fn final_window_mean(&self, window: usize) -> f64 {
        let n = self.cost_s.len();
        if n == 0 {
            return 0.0;
        }
        let start = n.saturating_sub(window);
        let slice = &self.cost_s[start..];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    /// Cache hit ratio over the final `window` slots; 0 when no content was
    /// delivered in the window.
    pub fn hit_ratio(&self, window: usize) -> f64 {
        let n = self.cache_hits.len();
        let start = n.saturating_sub(window);
        let hits: u64 = self.cache_hits[start..].iter().map(|&h| h as u64).sum();
        let misses: u64 = self.cache_misses[start..].iter().map(|&m| m as u64).sum();
        if hits + misses == 0 {
            0.0
        } else {
            hits as f64 / (hits + misses) as f64
        }
    }
}

/// Trailing moving average with a growing head window.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (t, &v) in series.iter().enumerate() {
        acc += v;
        if t >= window {
            acc -= series[t - window];
        }
        let len = (t + 1).min(window);
        out.push(acc / len as f64);
    }
    out
}

/// Least-squares slope of `y` against its index, per index step.
pub fn least_squares_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (v - mean_y);
        den += dx * dx;
    }
    num / den
}

/// One row of the experiment summary CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario_id: String,
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub agent: String,
    pub seed: u64,
    pub slots: u64,
    pub final_window: usize,
    pub final_mean_cost_s: f64,
    pub hit_ratio: f64,
    pub explored_actions: usize,
    pub request_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_matches_naive_recomputation() {
        let series: Vec<f64> = (0..200).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        for window in [1usize, 5, 50, 300] {
            let fast = moving_average(&series, window);
            for (t, &v) in fast.iter().enumerate() {
                let start = (t + 1).saturating_sub(window);
                let naive: f64 =
                    series[start..=t].iter().sum::<f64>() / (t - start + 1) as f64;
                assert!((v - naive).abs() < 1e-9, "t={t} window={window}");
            }
        }
    }

    #[test]
    fn slope_of_linear_series_is_exact() {
        let y: Vec<f64> = (0..100).map(|i| 3.0 + 0.25 * i as f64).collect();
        assert!((least_squares_slope(&y) - 0.25).abs() < 1e-12);
        let flat = vec![2.0; 50];
        assert!(least_squares_slope(&flat).abs() < 1e-12);
    }

    #[test]
    fn final_window_and_hit_ratio() {
        let mut trace = DelayTrace::new();
        for i in 0..10 {
            trace.cost_s.push(i as f64);
            trace.backhaul_s.push(0.0);
            trace.access_s.push(0.0);
            trace.scheduling_s.push(i as f64);
            trace.cache_hits.push(if i >= 5 { 1 } else { 0 });
            trace.cache_misses.push(1);
        }
        assert!((trace.final_window_mean(5) - 7.0).abs() < 1e-12);
        assert!((trace.hit_ratio(5) - 0.5).abs() < 1e-12);
        // Window longer than the run covers everything.
        assert!((trace.final_window_mean(100) - 4.5).abs() < 1e-12);
    }
}
