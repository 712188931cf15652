//! One-step expectation oracles and statistical experiment drivers.
//!
//! The oracles compute exact (enumeration-based, no sampling) one-step
//! expectations for a packing round from a given state: the expected
//! number of balls placed, and the expected multiplicative change of the
//! exponential overload potential. Both group bins by load class, so they
//! cost O(#classes) and O(#classes²) instead of O(n) and O(n²).
//!
//! The experiment drivers run many independent repetitions in parallel
//! (rayon) with one dedicated RNG stream per repetition, so results are
//! byte-identical for a given seed regardless of thread count or
//! scheduling. Final gaps are recorded exactly as rationals along with
//! their integer ceilings.

use crate::conditions::ProbabilityVector;
use crate::model::{LoadState, Rational};
use crate::potentials::{compute_delta, compute_log_phi, good_event, underloaded_count};
use crate::processes::{
    make_process, simulate, simulate_with, ConfigError, ProcessConfig, RunObserver,
};
use crate::rng::{rng_for_rep, RNG_ID};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// One-step expectation oracles
// ---------------------------------------------------------------------------

/// Exact expected number of balls a packing round places from `state` when
/// the sampled bin is drawn from `probs` (rank-indexed, heaviest first):
/// an overloaded sample places one ball, an underloaded one places
/// deficit+1, so the expectation is `1 + Σ_underloaded p·deficit`.
pub fn expected_balls_one_step_exact(state: &LoadState, probs: &[Rational]) -> Rational {
    assert_eq!(probs.len(), state.n(), "rank vector must have one entry per bin");
    let mut expected = Rational::new(1, 1);
    let mut offset = 0usize;
    for (load, count) in state.classes_desc() {
        let count = count as usize;
        if !state.load_is_overloaded(load) {
            let deficit = state.load_deficit(load) as i128;
            let mut mass = Rational::new(0, 1);
            for p in &probs[offset..offset + count] {
                mass += *p;
            }
            expected += mass * Rational::new(deficit, 1);
        }
        offset += count;
    }
    expected
}

/// [`expected_balls_one_step_exact`] for either vector representation,
/// as a double.
pub fn expected_balls_one_step(state: &LoadState, vector: &ProbabilityVector) -> f64 {
    match vector {
        ProbabilityVector::Exact(probs) => {
            let e = expected_balls_one_step_exact(state, probs);
            *e.numer() as f64 / *e.denom() as f64
        }
        ProbabilityVector::Approx(probs) => {
            assert_eq!(probs.len(), state.n());
            let mut expected = 1.0f64;
            let mut offset = 0usize;
            for (load, count) in state.classes_desc() {
                let count = count as usize;
                if !state.load_is_overloaded(load) {
                    let deficit = state.load_deficit(load) as f64;
                    let mass: f64 = probs[offset..offset + count].iter().sum();
                    expected += mass * deficit;
                }
                offset += count;
            }
            expected
        }
    }
}

/// Which bins count toward the exponential overload potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiThreshold {
    /// Only bins with normalized load `y ≥ 2` (the instrumented potential).
    AtLeastTwo,
    /// All bins with `y ≥ 0`; never empty, useful for drift exploration.
    NonNegative,
}

impl PhiThreshold {
    fn scaled_min(self, n: i128) -> i128 {
        match self {
            PhiThreshold::AtLeastTwo => 2 * n,
            PhiThreshold::NonNegative => 0,
        }
    }
}

/// Exact expected one-step ratio `E[Φ(α) after one packing round] / Φ(α)`
/// from `state` with a uniformly sampled bin, enumerated over load classes
/// (O(#classes²), no sampling).
///
/// All exponentials share one scaling offset (the largest round-start
/// exponent), so the computation stays finite for exponents `α·y` far past
/// overflow. Panics if no bin meets `threshold` at the start (the ratio
/// would be 0/0).
pub fn expected_phi_ratio_one_step(
    state: &LoadState,
    alpha: f64,
    threshold: PhiThreshold,
) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    let n = state.n() as i128;
    let w = state.total() as i128;
    let classes: Vec<(u64, u32)> = state.classes_desc().collect();
    let thr = threshold.scaled_min(n);
    let offset = alpha * ((n * state.max_load() as i128 - w) as f64 / n as f64);
    let term = |load: u64, w_new: i128| -> f64 {
        let scaled = n * load as i128 - w_new;
        if scaled >= thr {
            (alpha * (scaled as f64 / n as f64) - offset).exp()
        } else {
            0.0
        }
    };
    let phi_scaled: f64 = classes.iter().map(|&(l, c)| c as f64 * term(l, w)).sum();
    assert!(
        phi_scaled > 0.0,
        "no bin meets the potential threshold at the round start"
    );
    let mut expectation_scaled = 0.0f64;
    for &(load, count) in &classes {
        let balls = if state.load_is_overloaded(load) {
            1
        } else {
            state.load_deficit(load) + 1
        };
        let w_new = w + balls as i128;
        let mut after: f64 = classes.iter().map(|&(l, c)| c as f64 * term(l, w_new)).sum();
        after -= term(load, w_new);
        after += term(load + balls, w_new);
        expectation_scaled += (count as f64 / n as f64) * after;
    }
    expectation_scaled / phi_scaled
}

/// The square-lattice overload configuration: on `n = r²` bins, one bin at
/// load `1 + r`, `n − r − 1` bins at 1, and `r` bins at 0, so the total is
/// exactly `n` and the heavy bin sits `√n` above the average. From here a
/// uniformly sampled packing round *increases* the expected overload
/// potential — the configuration witnessing that the potential is not a
/// supermartingale everywhere. Panics unless `n ≥ 4` is a perfect square.
pub fn overload_counterexample_state(n: usize) -> LoadState {
    let r = (n as f64).sqrt().round() as usize;
    assert!(r >= 2 && r * r == n, "n must be a perfect square at least 4");
    let mut loads = vec![1u64; n];
    loads[0] = 1 + r as u64;
    for slot in loads.iter_mut().skip(n - r) {
        *slot = 0;
    }
    let state = LoadState::from_loads(loads, crate::model::MembershipMode::CountsOnly);
    debug_assert_eq!(state.total(), n as u64);
    state
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// Reproducibility manifest embedded in experiment outputs: everything
/// needed to regenerate the data plus optional wall-clock timestamps
/// (the only non-deterministic fields, kept out of data sections).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub rng: String,
    pub config: ProcessConfig,
    pub rounds: u64,
    pub reps: u32,
    pub seed: u64,
    /// RNG stream for single-repetition outputs (multi-repetition
    /// experiments use streams `0..reps`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rep: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stride: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub started_unix_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finished_unix_ms: Option<u64>,
}

impl RunManifest {
    pub fn new(config: &ProcessConfig, rounds: u64, reps: u32, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ID.to_string(),
            config: *config,
            rounds,
            reps,
            seed,
            rep: None,
            alpha: None,
            stride: None,
            started_unix_ms: None,
            finished_unix_ms: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Gap distribution experiments
// ---------------------------------------------------------------------------

/// Final observables of one repetition.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GapSample {
    pub rep: u32,
    /// Total balls at the end of the run.
    pub w: u64,
    /// Total samples drawn.
    pub samples: u64,
    /// Exact final gap as numerator/denominator.
    pub gap_num: i128,
    pub gap_den: i128,
    /// `⌈gap⌉` — the integer gap used for histograms.
    pub gap_ceil: u64,
}

impl GapSample {
    pub fn gap(&self) -> Rational {
        Rational::new(self.gap_num, self.gap_den)
    }

    pub fn gap_f64(&self) -> f64 {
        self.gap_num as f64 / self.gap_den as f64
    }
}

/// Result of a many-repetition gap experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapExperiment {
    pub manifest: RunManifest,
    /// One sample per repetition, in repetition order.
    pub per_rep: Vec<GapSample>,
    /// Repetition counts by integer gap.
    pub histogram: BTreeMap<u64, u32>,
}

impl GapExperiment {
    /// Smallest most-frequent integer gap.
    pub fn mode(&self) -> Option<u64> {
        histogram_mode(&self.histogram)
    }
}

/// Smallest key of maximal count.
pub fn histogram_mode(histogram: &BTreeMap<u64, u32>) -> Option<u64> {
    let best = histogram.values().copied().max()?;
    histogram.iter().find(|&(_, &c)| c == best).map(|(&k, _)| k)
}

/// Run `reps` independent repetitions of `config` for `rounds` rounds each
/// and collect the exact final gaps. Repetition `r` uses RNG stream `r` of
/// `seed`, so the result is independent of thread count and scheduling.
pub fn gap_distribution_experiment(
    config: &ProcessConfig,
    rounds: u64,
    reps: u32,
    seed: u64,
) -> Result<GapExperiment, ConfigError> {
    make_process(config)?; // validate once before going parallel
    let per_rep: Vec<GapSample> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for_rep(seed, rep as u64);
            let state = simulate(config, rounds, &mut rng).expect("config validated");
            let gap = state.gap();
            GapSample {
                rep,
                w: state.total(),
                samples: state.samples(),
                gap_num: *gap.numer(),
                gap_den: *gap.denom(),
                gap_ceil: state.gap_ceil(),
            }
        })
        .collect();
    let mut histogram = BTreeMap::new();
    for sample in &per_rep {
        *histogram.entry(sample.gap_ceil).or_insert(0u32) += 1;
    }
    Ok(GapExperiment {
        manifest: RunManifest::new(config, rounds, reps, seed),
        per_rep,
        histogram,
    })
}

/// Fraction of repetitions whose final gap reaches `threshold`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundResult {
    pub manifest: RunManifest,
    pub threshold: f64,
    pub hits: u32,
    pub fraction: f64,
    pub per_rep: Vec<GapSample>,
}

/// Run a gap experiment and report how often the final gap is at least
/// `threshold` (float comparison; intended for irrational thresholds like
/// `0.5·ln n / ln ln n`).
pub fn lower_bound_experiment(
    config: &ProcessConfig,
    rounds: u64,
    reps: u32,
    seed: u64,
    threshold: f64,
) -> Result<LowerBoundResult, ConfigError> {
    let experiment = gap_distribution_experiment(config, rounds, reps, seed)?;
    let hits = experiment.per_rep.iter().filter(|s| s.gap_f64() >= threshold).count() as u32;
    Ok(LowerBoundResult {
        manifest: experiment.manifest,
        threshold,
        hits,
        fraction: hits as f64 / reps.max(1) as f64,
        per_rep: experiment.per_rep,
    })
}

// ---------------------------------------------------------------------------
// Throughput / sample-efficiency series
// ---------------------------------------------------------------------------

/// Cumulative totals at one observed round.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct SeriesPoint {
    pub round: u64,
    pub w: u64,
    pub samples: u64,
}

impl SeriesPoint {
    /// Balls per round `W/t`, exact.
    pub fn throughput(&self) -> Rational {
        Rational::new(self.w as i128, self.round as i128)
    }

    /// Balls per sample `W/S`, exact.
    pub fn efficiency(&self) -> Rational {
        Rational::new(self.w as i128, self.samples as i128)
    }
}

/// Observer recording cumulative totals every `stride` rounds.
#[derive(Debug)]
pub struct SeriesTracker {
    stride: u64,
    pub points: Vec<SeriesPoint>,
}

impl SeriesTracker {
    pub fn new(stride: u64) -> Self {
        assert!(stride >= 1, "stride must be at least 1");
        SeriesTracker { stride, points: Vec::new() }
    }
}

impl RunObserver for SeriesTracker {
    fn on_state(&mut self, state: &LoadState) {
        let t = state.rounds();
        if t > 0 && t.is_multiple_of(self.stride) {
            self.points.push(SeriesPoint { round: t, w: state.total(), samples: state.samples() });
        }
    }
}

fn totals_series(
    config: &ProcessConfig,
    rounds: u64,
    stride: u64,
    seed: u64,
    rep: u64,
) -> Result<Vec<SeriesPoint>, ConfigError> {
    let mut tracker = SeriesTracker::new(stride);
    let state = simulate_with(config, rounds, &mut rng_for_rep(seed, rep), &mut tracker)?;
    let mut points = tracker.points;
    if points.last().map(|p| p.round) != Some(rounds) {
        points.push(SeriesPoint { round: rounds, w: state.total(), samples: state.samples() });
    }
    Ok(points)
}

/// Cumulative totals every `stride` rounds (final round always included);
/// [`SeriesPoint::throughput`] gives the balls-per-round view.
pub fn throughput_series(
    config: &ProcessConfig,
    rounds: u64,
    stride: u64,
    seed: u64,
    rep: u64,
) -> Result<Vec<SeriesPoint>, ConfigError> {
    totals_series(config, rounds, stride, seed, rep)
}

/// Same series as [`throughput_series`]; [`SeriesPoint::efficiency`] gives
/// the balls-per-sample view.
pub fn sample_efficiency_series(
    config: &ProcessConfig,
    rounds: u64,
    stride: u64,
    seed: u64,
    rep: u64,
) -> Result<Vec<SeriesPoint>, ConfigError> {
    totals_series(config, rounds, stride, seed, rep)
}

// ---------------------------------------------------------------------------
// Checkpointed potential experiments
// ---------------------------------------------------------------------------

/// Full instrumented observation at one checkpoint round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub round: u64,
    pub w: u64,
    pub samples: u64,
    pub gap_num: i128,
    pub gap_den: i128,
    pub gap_ceil: u64,
    /// Absolute-deviation potential divided by `n`.
    pub delta_over_n: f64,
    /// `ln Φ(α)`; `−∞` when no bin has `y ≥ 2`.
    pub log_phi: f64,
    pub underloaded: u64,
    pub good_event: bool,
}

impl CheckpointStats {
    pub fn gap(&self) -> Rational {
        Rational::new(self.gap_num, self.gap_den)
    }
}

fn capture(state: &LoadState, alpha: f64) -> CheckpointStats {
    let gap = state.gap();
    let delta = compute_delta(state);
    CheckpointStats {
        round: state.rounds(),
        w: state.total(),
        samples: state.samples(),
        gap_num: *gap.numer(),
        gap_den: *gap.denom(),
        gap_ceil: state.gap_ceil(),
        delta_over_n: (*delta.numer() as f64 / *delta.denom() as f64) / state.n() as f64,
        log_phi: compute_log_phi(state, alpha),
        underloaded: underloaded_count(state),
        good_event: good_event(state),
    }
}

struct CheckpointObserver<'a> {
    targets: &'a [u64],
    next: usize,
    alpha: f64,
    out: Vec<CheckpointStats>,
}

impl RunObserver for CheckpointObserver<'_> {
    fn on_state(&mut self, state: &LoadState) {
        while self.next < self.targets.len() && state.rounds() == self.targets[self.next] {
            self.out.push(capture(state, self.alpha));
            self.next += 1;
        }
    }
}

fn validate_checkpoints(checkpoints: &[u64], rounds: u64) {
    assert!(!checkpoints.is_empty(), "need at least one checkpoint");
    assert!(
        checkpoints.windows(2).all(|w| w[0] < w[1]),
        "checkpoints must be strictly increasing"
    );
    assert!(
        *checkpoints.last().unwrap() <= rounds,
        "checkpoints must not exceed the round count"
    );
}

/// Run one repetition and capture [`CheckpointStats`] at each of the given
/// (strictly increasing) rounds.
pub fn run_with_checkpoints(
    config: &ProcessConfig,
    rounds: u64,
    checkpoints: &[u64],
    alpha: f64,
    seed: u64,
    rep: u64,
) -> Result<Vec<CheckpointStats>, ConfigError> {
    validate_checkpoints(checkpoints, rounds);
    let mut observer = CheckpointObserver { targets: checkpoints, next: 0, alpha, out: Vec::new() };
    simulate_with(config, rounds, &mut rng_for_rep(seed, rep), &mut observer)?;
    Ok(observer.out)
}

/// [`run_with_checkpoints`] across `reps` parallel repetitions;
/// repetition-major result.
pub fn checkpoint_experiment(
    config: &ProcessConfig,
    rounds: u64,
    checkpoints: &[u64],
    alpha: f64,
    reps: u32,
    seed: u64,
) -> Result<Vec<Vec<CheckpointStats>>, ConfigError> {
    validate_checkpoints(checkpoints, rounds);
    make_process(config)?;
    Ok((0..reps)
        .into_par_iter()
        .map(|rep| {
            run_with_checkpoints(config, rounds, checkpoints, alpha, seed, rep as u64)
                .expect("config validated")
        })
        .collect())
}

/// Doubling ladder `first, 2·first, 4·first, …` capped at `max`, with `max`
/// itself always included.
pub fn geometric_checkpoints(first: u64, max: u64) -> Vec<u64> {
    assert!(first >= 1 && first <= max);
    let mut out = vec![first];
    let mut cur = first;
    while cur <= max / 2 {
        cur *= 2;
        out.push(cur);
    }
    if *out.last().unwrap() != max {
        out.push(max);
    }
    out
}

/// Cross-repetition aggregate at one checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundednessSummary {
    pub round: u64,
    pub mean_delta_over_n: f64,
    /// Largest `ln Φ(α) / n` across repetitions (`−∞` if Φ = 0 everywhere).
    pub max_log_phi_over_n: f64,
    pub median_gap_num: i128,
    pub median_gap_den: i128,
    pub max_gap_ceil: u64,
}

/// Result of a checkpointed boundedness experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundednessResult {
    pub manifest: RunManifest,
    pub checkpoints: Vec<BoundednessSummary>,
}

/// Track `Δ/n` and `ln Φ/n` across a doubling ladder of checkpoints to
/// certify that the imbalance stays bounded as `m` grows.
pub fn delta_boundedness_experiment(
    config: &ProcessConfig,
    rounds: u64,
    reps: u32,
    seed: u64,
    alpha: f64,
    first_checkpoint: u64,
) -> Result<BoundednessResult, ConfigError> {
    let checkpoints = geometric_checkpoints(first_checkpoint.min(rounds).max(1), rounds);
    let data = checkpoint_experiment(config, rounds, &checkpoints, alpha, reps, seed)?;
    let mut summaries = Vec::with_capacity(checkpoints.len());
    for (idx, &round) in checkpoints.iter().enumerate() {
        let column: Vec<&CheckpointStats> = data.iter().map(|rep| &rep[idx]).collect();
        let mean_delta_over_n =
            column.iter().map(|s| s.delta_over_n).sum::<f64>() / column.len().max(1) as f64;
        let max_log_phi_over_n = column
            .iter()
            .map(|s| s.log_phi / config.bins as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let gaps: Vec<Rational> = column.iter().map(|s| s.gap()).collect();
        let median = median_rational(&gaps).unwrap_or_else(|| Rational::new(0, 1));
        summaries.push(BoundednessSummary {
            round,
            mean_delta_over_n,
            max_log_phi_over_n,
            median_gap_num: *median.numer(),
            median_gap_den: *median.denom(),
            max_gap_ceil: column.iter().map(|s| s.gap_ceil).max().unwrap_or(0),
        });
    }
    let mut manifest = RunManifest::new(config, rounds, reps, seed);
    manifest.alpha = Some(alpha);
    Ok(BoundednessResult { manifest, checkpoints: summaries })
}

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

/// Exact median: middle element for odd counts, average of the two middle
/// elements for even counts. `None` on empty input.
pub fn median_rational(values: &[Rational]) -> Option<Rational> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2
    })
}

/// Ordinary least-squares slope of `y` against `x`. `None` with fewer than
/// two points or a degenerate `x` spread.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MembershipMode;
    use crate::processes::ProcessKind;
    use proptest::prelude::*;

    fn state(loads: &[u64]) -> LoadState {
        LoadState::from_loads(loads.to_vec(), MembershipMode::CountsOnly)
    }

    fn uniform(n: usize) -> Vec<Rational> {
        vec![Rational::new(1, n as i128); n]
    }

    #[test]
    fn expected_balls_matches_hand_computations() {
        // (2,0,0,0): sample heavy bin w.p. 1/4 → 1 ball; else 2 balls.
        let e = expected_balls_one_step_exact(&state(&[2, 0, 0, 0]), &uniform(4));
        assert_eq!(e, Rational::new(7, 4));
        // (9,0,0): deficit of an empty bin is 3 → 1 + (2/3)·3 = 3.
        let e = expected_balls_one_step_exact(&state(&[9, 0, 0]), &uniform(3));
        assert_eq!(e, Rational::new(3, 1));
        // Balanced states always place exactly one ball.
        let e = expected_balls_one_step_exact(&state(&[5, 5, 5]), &uniform(3));
        assert_eq!(e, Rational::new(1, 1));
    }

    #[test]
    fn expected_balls_agrees_with_per_bin_enumeration() {
        let mut rng = crate::rng::rng_for_rep(31, 0);
        for _ in 0..100 {
            use rand::Rng;
            let n = rng.gen_range(1usize..14);
            let loads: Vec<u64> = (0..n).map(|_| rng.gen_range(0u64..7)).collect();
            let s = LoadState::from_loads(loads, MembershipMode::CountsOnly);
            let fast = expected_balls_one_step_exact(&s, &uniform(n));
            // Independent per-bin enumeration.
            let mut brute = Rational::new(0, 1);
            for bin in 0..n as u32 {
                let balls = if s.is_overloaded(bin) { 1 } else { s.deficit(bin) + 1 };
                brute += Rational::new(balls as i128, n as i128);
            }
            assert_eq!(fast, brute);
        }
    }

    #[test]
    fn expected_balls_monte_carlo_three_sigma() {
        // On (2,0,0,0): X = 1 w.p. 1/4, 2 w.p. 3/4 → E = 1.75,
        // Var = 3/16; 10⁵ draws give σ_mean ≈ 0.00137.
        let s = state(&[2, 0, 0, 0]);
        let config = ProcessConfig { bins: 4, kind: ProcessKind::Packing };
        let mut process = make_process(&config).unwrap();
        let mut rng = crate::rng::rng_for_rep(8, 0);
        let draws = 100_000u64;
        let mut total = 0u64;
        for _ in 0..draws {
            total += process.plan(&s, &mut rng).balls_placed;
        }
        let mean = total as f64 / draws as f64;
        let sigma_mean = (3.0f64 / 16.0).sqrt() / (draws as f64).sqrt();
        assert!(
            (mean - 1.75).abs() <= 3.0 * sigma_mean,
            "mean {mean} vs 1.75 ± {}",
            3.0 * sigma_mean
        );
    }

    /// Independent naive potential-ratio oracle: per-bin, linear domain,
    /// no scaling. Only safe for small states and moderate α.
    fn phi_ratio_brute(loads: &[u64], alpha: f64, threshold: PhiThreshold) -> f64 {
        let n = loads.len();
        let w: u64 = loads.iter().sum();
        let thr = threshold.scaled_min(n as i128);
        let phi = |ls: &[u64], w_now: u64| -> f64 {
            ls.iter()
                .map(|&x| {
                    let scaled = (n as i128) * x as i128 - w_now as i128;
                    if scaled >= thr {
                        (alpha * (x as f64 - w_now as f64 / n as f64)).exp()
                    } else {
                        0.0
                    }
                })
                .sum()
        };
        let base = phi(loads, w);
        let s = LoadState::from_loads(loads.to_vec(), MembershipMode::CountsOnly);
        let mut acc = 0.0;
        for u in 0..n {
            let balls =
                if s.is_overloaded(u as u32) { 1 } else { s.deficit(u as u32) + 1 };
            let mut next = loads.to_vec();
            next[u] += balls;
            acc += phi(&next, w + balls) / n as f64;
        }
        acc / base
    }

    #[test]
    fn phi_ratio_agrees_with_naive_enumeration() {
        let mut rng = crate::rng::rng_for_rep(77, 0);
        let mut checked_big = 0;
        for _ in 0..60 {
            use rand::Rng;
            let n = rng.gen_range(2usize..12);
            let mut loads: Vec<u64> = (0..n).map(|_| rng.gen_range(0u64..5)).collect();
            // Make sure some states have a qualifying y ≥ 2 bin.
            if rng.gen_bool(0.6) {
                loads[0] += 2 + (loads.iter().sum::<u64>() / n as u64) + 3;
            }
            let alpha = rng.gen_range(0.05f64..0.6);
            let s = LoadState::from_loads(loads.clone(), MembershipMode::CountsOnly);
            // NonNegative never has an empty potential.
            let fast = expected_phi_ratio_one_step(&s, alpha, PhiThreshold::NonNegative);
            let brute = phi_ratio_brute(&loads, alpha, PhiThreshold::NonNegative);
            assert!(
                (fast - brute).abs() <= 1e-9 * brute.abs().max(1.0),
                "nonneg: fast {fast} brute {brute}"
            );
            let has_big = loads
                .iter()
                .any(|&x| (n as i128) * x as i128 - s.total() as i128 >= 2 * n as i128);
            if has_big {
                checked_big += 1;
                let fast = expected_phi_ratio_one_step(&s, alpha, PhiThreshold::AtLeastTwo);
                let brute = phi_ratio_brute(&loads, alpha, PhiThreshold::AtLeastTwo);
                assert!(
                    (fast - brute).abs() <= 1e-9 * brute.abs().max(1.0),
                    "big: fast {fast} brute {brute}"
                );
            }
        }
        assert!(checked_big >= 10, "want a healthy share of qualifying states");
    }

    #[test]
    fn counterexample_state_shape_and_upward_drift() {
        let s = overload_counterexample_state(16);
        assert_eq!(s.total(), 16);
        assert_eq!(s.max_load(), 5);
        assert_eq!(s.n(), 16);
        // One bin at 1+√n, √n empty bins, the rest at 1.
        let loads = s.loads();
        assert_eq!(loads.iter().filter(|&&x| x == 5).count(), 1);
        assert_eq!(loads.iter().filter(|&&x| x == 0).count(), 4);
        assert_eq!(loads.iter().filter(|&&x| x == 1).count(), 11);
        // The y ≥ 2 potential is the lone dominant bin, so it drifts upward
        // even at this tiny n.
        let ratio = expected_phi_ratio_one_step(&s, 0.5, PhiThreshold::AtLeastTwo);
        assert!(ratio > 1.0, "AtLeastTwo ratio {ratio}");
        // The y ≥ 0 potential also counts the n−√n−1 bins at the average;
        // those leave the sum as the average rises, which outweighs the
        // dominant bin's gain until e^{α√n} dwarfs n. At n=16 the ratio is
        // genuinely below one; at n=2500 the upward-drift bound holds.
        let small = expected_phi_ratio_one_step(&s, 0.5, PhiThreshold::NonNegative);
        assert!(small < 1.0, "NonNegative ratio at n=16: {small}");
        let big = overload_counterexample_state(2500);
        let alpha = 0.5;
        let bound = 1.0 + 0.1 * alpha * alpha / 2500.0;
        let ratio = expected_phi_ratio_one_step(&big, alpha, PhiThreshold::NonNegative);
        assert!(ratio >= bound, "NonNegative ratio at n=2500: {ratio} < {bound}");
        // Cross-check against the naive oracle.
        let fast = expected_phi_ratio_one_step(&s, 0.25, PhiThreshold::AtLeastTwo);
        let brute = phi_ratio_brute(s.loads(), 0.25, PhiThreshold::AtLeastTwo);
        assert!((fast - brute).abs() <= 1e-9 * brute);
    }

    #[test]
    #[should_panic(expected = "perfect square")]
    fn counterexample_rejects_non_squares() {
        overload_counterexample_state(15);
    }

    proptest! {
        #[test]
        fn downward_mass_moves_never_decrease_expected_balls(
            loads in proptest::collection::vec(0u64..8, 2..8),
            moves in proptest::collection::vec((0usize..8, 0usize..8, 1u32..4), 0..12),
        ) {
            // Start from uniform and repeatedly move mass from a heavy rank
            // to a lighter one: all prefixes only shrink, so the vector
            // stays majorized by uniform, and the expected ball count can
            // only grow (deficits are non-decreasing in rank).
            let n = loads.len();
            let scale = 8i128; // units of 1/(8n)
            let mut units = vec![scale; n];
            for &(from, to, amount) in &moves {
                let (from, to) = (from % n, to % n);
                if from < to {
                    let amount = (amount as i128).min(units[from]);
                    units[from] -= amount;
                    units[to] += amount;
                }
            }
            let probs: Vec<Rational> =
                units.iter().map(|&u| Rational::new(u, scale * n as i128)).collect();
            let s = LoadState::from_loads(loads, MembershipMode::CountsOnly);
            let shifted = expected_balls_one_step_exact(&s, &probs);
            let base = expected_balls_one_step_exact(&s, &uniform(n));
            prop_assert!(shifted >= base, "shifted {shifted} < uniform {base}");
        }
    }

    #[test]
    fn series_points_are_exact_for_fixed_sample_processes() {
        let one = ProcessConfig { bins: 8, kind: ProcessKind::OneChoice };
        let points = sample_efficiency_series(&one, 100, 7, 3, 0).unwrap();
        assert_eq!(points.last().unwrap().round, 100);
        for p in &points {
            assert_eq!(p.efficiency(), Rational::new(1, 1));
            assert_eq!(p.throughput(), Rational::new(1, 1));
        }
        let two = ProcessConfig { bins: 8, kind: ProcessKind::DChoice { d: 2 } };
        let points = throughput_series(&two, 100, 7, 3, 0).unwrap();
        for p in &points {
            assert_eq!(p.efficiency(), Rational::new(1, 2));
        }
    }

    #[test]
    fn packing_efficiency_settles_near_two() {
        // Filling an underloaded sample to one past the average ceiling
        // yields a long-run efficiency just under 2 balls per sample; the
        // band is a regression pin around the measured stationary value.
        let config = ProcessConfig { bins: 100, kind: ProcessKind::Packing };
        let points = sample_efficiency_series(&config, 10_000, 1000, 5, 0).unwrap();
        let eta = points.last().unwrap().efficiency();
        let eta = *eta.numer() as f64 / *eta.denom() as f64;
        assert!((1.9..=2.05).contains(&eta), "eta {eta}");
    }

    #[test]
    fn gap_experiment_is_deterministic_and_consistent() {
        let config = ProcessConfig { bins: 16, kind: ProcessKind::DChoice { d: 2 } };
        let a = gap_distribution_experiment(&config, 1600, 20, 42).unwrap();
        let b = gap_distribution_experiment(&config, 1600, 20, 42).unwrap();
        assert_eq!(a.per_rep, b.per_rep);
        assert_eq!(a.histogram, b.histogram);
        assert_eq!(a.per_rep.len(), 20);
        assert_eq!(a.histogram.values().sum::<u32>(), 20);
        for (rep, sample) in a.per_rep.iter().enumerate() {
            assert_eq!(sample.rep as usize, rep);
            assert_eq!(sample.w, 1600);
            assert_eq!(sample.samples, 3200);
        }
        let c = gap_distribution_experiment(&config, 1600, 20, 43).unwrap();
        assert_ne!(a.per_rep, c.per_rep);
    }

    #[test]
    fn histogram_mode_prefers_smallest_on_ties() {
        let mut h = BTreeMap::new();
        h.insert(3u64, 5u32);
        h.insert(4, 5);
        h.insert(7, 2);
        assert_eq!(histogram_mode(&h), Some(3));
        assert_eq!(histogram_mode(&BTreeMap::new()), None);
    }

    #[test]
    fn checkpoints_capture_the_requested_rounds() {
        let config = ProcessConfig { bins: 10, kind: ProcessKind::Packing };
        let stats = run_with_checkpoints(&config, 100, &[0, 10, 100], 0.5, 9, 0).unwrap();
        assert_eq!(stats.len(), 3);
        assert_eq!(stats[0].round, 0);
        assert_eq!(stats[0].w, 0);
        assert_eq!(stats[1].round, 10);
        assert_eq!(stats[2].round, 100);
        // Gap ceilings and exact gaps agree.
        for s in &stats {
            let exact = s.gap();
            let ceil = exact.ceil();
            assert_eq!(*ceil.numer() as u64, s.gap_ceil);
        }
    }

    #[test]
    fn geometric_ladder_doubles_and_includes_the_endpoint() {
        assert_eq!(geometric_checkpoints(1, 10), vec![1, 2, 4, 8, 10]);
        assert_eq!(geometric_checkpoints(3, 24), vec![3, 6, 12, 24]);
        assert_eq!(geometric_checkpoints(5, 5), vec![5]);
        assert_eq!(geometric_checkpoints(2, 16), vec![2, 4, 8, 16]);
    }

    #[test]
    fn boundedness_experiment_aggregates_per_checkpoint() {
        let config = ProcessConfig { bins: 16, kind: ProcessKind::Packing };
        let result = delta_boundedness_experiment(&config, 256, 6, 11, 0.5, 16).unwrap();
        assert_eq!(
            result.checkpoints.iter().map(|c| c.round).collect::<Vec<_>>(),
            vec![16, 32, 64, 128, 256]
        );
        for c in &result.checkpoints {
            assert!(c.mean_delta_over_n.is_finite());
            assert!(c.mean_delta_over_n >= 0.0);
        }
        assert_eq!(result.manifest.alpha, Some(0.5));
    }

    #[test]
    fn lower_bound_fraction_counts_threshold_hits() {
        let config = ProcessConfig { bins: 16, kind: ProcessKind::OneChoice };
        let result = lower_bound_experiment(&config, 8, 30, 3, 0.0).unwrap();
        // Gap ≥ 0 always holds.
        assert_eq!(result.hits, 30);
        assert_eq!(result.fraction, 1.0);
        let strict = lower_bound_experiment(&config, 8, 30, 3, 1e9).unwrap();
        assert_eq!(strict.hits, 0);
    }

    #[test]
    fn median_and_slope_helpers() {
        let vals = [Rational::new(3, 1), Rational::new(1, 1), Rational::new(2, 1)];
        assert_eq!(median_rational(&vals), Some(Rational::new(2, 1)));
        let vals = [Rational::new(1, 1), Rational::new(2, 1)];
        assert_eq!(median_rational(&vals), Some(Rational::new(3, 2)));
        assert_eq!(median_rational(&[]), None);
        let pts = [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)];
        assert!((least_squares_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(least_squares_slope(&pts[..1]), None);
        assert_eq!(least_squares_slope(&[(1.0, 1.0), (1.0, 2.0)]), None);
    }

    #[test]
    fn run_outcome_type_is_reexported_for_observers() {
        // Compile-time check that the observer API surfaces what a custom
        // experiment needs.
        fn _assert_observer<T: RunObserver>() {}
        _assert_observer::<SeriesTracker>();
        let _ = |o: &crate::processes::RoundOutcome| o.balls_placed;
    }
}
