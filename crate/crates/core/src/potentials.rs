//! Imbalance potentials and the good-event predicate used to instrument
//! runs.
//!
//! Three quantities summarize a load vector's imbalance around the average
//! `W/n`:
//!
//! * the **absolute-deviation potential** `Δ = Σᵢ |xᵢ − W/n|`, computed
//!   exactly as a rational via per-class integer sums;
//! * the **exponential overload potential** `Φ(α) = Σ exp(α·yᵢ)` restricted
//!   to bins with normalized load `yᵢ ≥ 2`, handled entirely in the log
//!   domain (a log-sum-exp over load classes) so it stays finite for
//!   exponents up to `α·y ≈ 10⁶`;
//! * the **good-event predicate**: the state is "good" when at least `n/20`
//!   bins are underloaded or `Δ ≥ n/10`, both checked with exact integer
//!   arithmetic (`20·|B₋| ≥ n` and `10·Σ|n·xᵢ − W| ≥ n²`).
//!
//! [`good_event_density`] and [`min_window_good_count`] summarize how often
//! the good event holds over sliding windows of states, which is how runs
//! certify that imbalance-reducing opportunities recur.

use crate::model::{LoadState, Rational};
use serde::{Deserialize, Serialize};

/// Absolute-deviation potential `Δ = Σᵢ |xᵢ − W/n|`, exact.
pub fn compute_delta(state: &LoadState) -> Rational {
    Rational::new(scaled_abs_deviation(state) as i128, state.n() as i128)
}

/// `Σᵢ |n·xᵢ − W|` — the numerator of `n·Δ` — as an exact integer.
fn scaled_abs_deviation(state: &LoadState) -> u128 {
    let n = state.n() as u128;
    let w = state.total() as u128;
    let mut sum = 0u128;
    for (load, count) in state.classes_asc() {
        let scaled = n * load as u128;
        let dev = scaled.abs_diff(w);
        sum += dev * count as u128;
    }
    sum
}

/// Number of underloaded bins `|B₋|` (bins with `n·x < W`).
pub fn underloaded_count(state: &LoadState) -> u64 {
    match state.underload_threshold() {
        None => 0,
        Some(threshold) => state
            .classes_asc()
            .take_while(|&(load, _)| load <= threshold)
            .map(|(_, count)| count as u64)
            .sum(),
    }
}

/// `ln Φ(α)` where `Φ(α) = Σ exp(α·yᵢ)` over bins with `yᵢ ≥ 2`
/// (equivalently `n·xᵢ − W ≥ 2n`). Returns `f64::NEG_INFINITY` when no bin
/// qualifies (`Φ = 0`). Computed as a log-sum-exp over load classes:
/// `ln Σ count·exp(α·y) = M + ln Σ count·exp(α·y − M)` with `M` the largest
/// exponent, so the result is finite for arbitrarily large `α·y`.
pub fn compute_log_phi(state: &LoadState, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    let n = state.n() as i128;
    let w = state.total() as i128;
    let mut terms: Vec<(f64, f64)> = Vec::new(); // (ln count, α·y)
    for (load, count) in state.classes_desc() {
        let scaled = n * load as i128 - w;
        if scaled < 2 * n {
            break;
        }
        let y = scaled as f64 / n as f64;
        terms.push(((count as f64).ln(), alpha * y));
    }
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max_exp = terms
        .iter()
        .map(|&(ln_c, e)| ln_c + e)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|&(ln_c, e)| (ln_c + e - max_exp).exp()).sum();
    max_exp + sum.ln()
}

/// The good event: `|B₋| ≥ n/20` or `Δ ≥ n/10`, both exact
/// (`20·|B₋| ≥ n`, `10·Σ|n·xᵢ − W| ≥ n²`). The empty state (no balls, every
/// bin exactly average) is not good.
pub fn good_event(state: &LoadState) -> bool {
    let n = state.n() as u128;
    if state.total() == 0 {
        return false;
    }
    if 20 * underloaded_count(state) as u128 >= n {
        return true;
    }
    10 * scaled_abs_deviation(state) >= n * n
}

/// One instrumented observation of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSnapshot {
    /// Round index of the observed state (0 = before any allocation).
    pub round: u64,
    /// Exact load gap `max xᵢ − W/n` as numerator/denominator.
    pub gap_num: i128,
    pub gap_den: i128,
    /// Exact absolute-deviation potential `Δ` as numerator/denominator.
    pub delta_num: i128,
    pub delta_den: i128,
    /// `ln Φ(α)`; `−∞` serialized as `null` when no bin has `y ≥ 2`.
    pub log_phi: f64,
    /// The `α` used for `log_phi`.
    pub alpha: f64,
    /// Number of underloaded bins.
    pub underloaded_count: u64,
    /// Whether the good event holds.
    pub good_event: bool,
}

impl PotentialSnapshot {
    pub fn gap(&self) -> Rational {
        Rational::new(self.gap_num, self.gap_den)
    }

    pub fn delta(&self) -> Rational {
        Rational::new(self.delta_num, self.delta_den)
    }
}

/// Compute a full snapshot of `state` at parameter `alpha`.
pub fn snapshot(state: &LoadState, alpha: f64) -> PotentialSnapshot {
    let gap = state.gap();
    let delta = compute_delta(state);
    PotentialSnapshot {
        round: state.rounds(),
        gap_num: *gap.numer(),
        gap_den: *gap.denom(),
        delta_num: *delta.numer(),
        delta_den: *delta.denom(),
        log_phi: compute_log_phi(state, alpha),
        alpha,
        underloaded_count: underloaded_count(state),
        good_event: good_event(state),
    }
}

/// Number of good states among `goods[t0 ..= t0 + window]` — the closed
/// window of `window + 1` consecutive observations starting at `t0`.
/// Panics if the window extends past the end of `goods`.
pub fn good_event_density(goods: &[bool], t0: usize, window: usize) -> usize {
    goods[t0..=t0 + window].iter().filter(|&&g| g).count()
}

/// Minimum over all start positions of [`good_event_density`] with the
/// given window length, or `None` when `goods` is shorter than one full
/// window. Uses prefix sums, O(len).
pub fn min_window_good_count(goods: &[bool], window: usize) -> Option<usize> {
    if goods.len() < window + 1 {
        return None;
    }
    let mut prefix = vec![0usize; goods.len() + 1];
    for (i, &g) in goods.iter().enumerate() {
        prefix[i + 1] = prefix[i] + g as usize;
    }
    (0..goods.len() - window)
        .map(|t0| prefix[t0 + window + 1] - prefix[t0])
        .min()
}

/// Observer that records the good-event bit of every observed state
/// (initial state included).
#[derive(Debug, Default)]
pub struct GoodEventTracker {
    pub goods: Vec<bool>,
}

impl crate::processes::RunObserver for GoodEventTracker {
    fn on_state(&mut self, state: &LoadState) {
        self.goods.push(good_event(state));
    }
}
