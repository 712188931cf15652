//! Allocation process step rules and the deterministic run loop.
//!
//! Every process implements [`AllocationProcess`]: given the current
//! [`LoadState`] and an RNG it *plans* one round as a [`RoundOutcome`]
//! (samples drawn, committed bin, balls per receiving bin) without mutating
//! the state. [`apply`] then commits the outcome. Keeping planning and
//! application separate lets verifiers inspect `(state_before, outcome)`
//! pairs and lets traces be replayed exactly.
//!
//! The processes:
//!
//! * [`OneChoice`] / [`DChoice`] — classic `d` uniform samples with
//!   replacement, ball to a least-loaded sample (ties to the lowest id).
//! * [`OnePlusBeta`] — a `β`-coin mixes a two-choice round with a
//!   one-choice round.
//! * [`Quantile`] — if the first sample's load sits at or above the
//!   `δ`-quantile load, a second sample is drawn and receives the ball
//!   blindly; otherwise the first sample keeps it.
//! * [`Packing`] — uniform sample `i`; an overloaded `i` gets one ball, an
//!   underloaded `i` gets `deficit(i)+1` balls (ending at `⌈W/n⌉+1`).
//! * [`TightPacking`] — same ball count as `Packing`, but the balls fill the
//!   *heaviest* underloaded bins: the first to `⌈W/n⌉+1`, the rest capped at
//!   `⌈W/n⌉−1`.
//! * [`Memory`] — one uniform sample competing against a cached bin; the
//!   lighter of the two receives the ball (ties go to the sample) and the
//!   cache remembers the lighter bin.
//! * [`BiasedPacking`] — the `Packing` rule driven by an adversarial
//!   `(a,b)`-biased rank distribution instead of a uniform sample.
//!
//! All bin indices are 0-based.

use crate::model::{BinId, LoadState, MembershipMode};
use crate::rng::SimRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::ops::ControlFlow;
use thiserror::Error;

/// Which allocation rule to run, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum ProcessKind {
    OneChoice,
    DChoice { d: u32 },
    OnePlusBeta { beta: f64 },
    Quantile { delta: f64 },
    Packing,
    TightPacking,
    Memory,
    BiasedPacking { a: u64, b: u64, bias: BiasKind },
}

/// Which adversarial `(a,b)`-biased rank vector `BiasedPacking` samples
/// from: mass pushed onto the heaviest ranks (`MaxBias`) or the lightest
/// ranks (`MinBias`). Entries always stay inside the `[1/(an), b/n]` box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    MaxBias,
    MinBias,
}

/// A process plus the number of bins it runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub bins: usize,
    #[serde(flatten)]
    pub kind: ProcessKind,
}

/// Everything one round did, planned against a fixed `state_before`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    /// Round index this outcome was planned for (0-based).
    pub round: u64,
    /// Bin samples drawn this round, in draw order (with replacement).
    pub sampled: SmallVec<[BinId; 2]>,
    /// The bin the process committed to (the sampled bin for packing-style
    /// rules; the receiving bin for single-ball rules).
    pub chosen: BinId,
    /// Balls added per bin, sorted by bin id; every count is ≥ 1.
    pub deltas: SmallVec<[(BinId, u64); 4]>,
    /// Total balls placed; equals the sum of `deltas` counts.
    pub balls_placed: u64,
    /// Bin samples consumed (drives sample-efficiency accounting).
    pub samples_used: u64,
    /// Memory cache before/after the round (`Memory` only).
    pub cache_before: Option<BinId>,
    pub cache_after: Option<BinId>,
}

impl RoundOutcome {
    fn single_ball(round: u64, sampled: SmallVec<[BinId; 2]>, chosen: BinId, samples: u64) -> Self {
        RoundOutcome {
            round,
            sampled,
            chosen,
            deltas: SmallVec::from_slice(&[(chosen, 1)]),
            balls_placed: 1,
            samples_used: samples,
            cache_before: None,
            cache_after: None,
        }
    }
}

/// Rejected process configuration.
#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("number of bins must be at least 1")]
    NoBins,
    #[error("d-choice needs d ≥ 1")]
    ZeroChoices,
    #[error("beta must lie in (0, 1], got {0}")]
    BadBeta(f64),
    #[error("quantile fraction must lie in (0, 1), got {0}")]
    BadQuantile(f64),
    #[error("bias parameters need a ≥ 1 and b ≥ 1, got a={a}, b={b}")]
    BadBias { a: u64, b: u64 },
    #[error("bias vector out of range: {0}")]
    BiasOverflow(String),
}

/// One allocation process with whatever internal state it carries (for
/// example the `Memory` cache). Planning draws randomness but never touches
/// the load state.
pub trait AllocationProcess {
    /// Configuration echo for manifests and audits.
    fn kind(&self) -> ProcessKind;

    /// The class-index detail this process needs from its [`LoadState`].
    fn membership_mode(&self) -> MembershipMode {
        MembershipMode::CountsOnly
    }

    /// Plan the next round against `state` without applying it.
    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome;
}

/// Commit a planned outcome: add its balls and the round/sample counters.
pub fn apply(state: &mut LoadState, outcome: &RoundOutcome) {
    debug_assert_eq!(
        outcome.deltas.iter().map(|&(_, c)| c).sum::<u64>(),
        outcome.balls_placed,
        "outcome deltas must sum to balls_placed"
    );
    for &(bin, count) in &outcome.deltas {
        state.add_balls(bin, count);
    }
    state.note_round(outcome.samples_used);
}

/// Per-round hooks for [`simulate_with`]. `on_state` sees every state of
/// the run including the initial one (so a run of `m` rounds reports `m+1`
/// states); `on_round` sees each `(state_before, outcome)` pair and may
/// stop the run early by returning `ControlFlow::Break(())` — used by the
/// strict verifier.
pub trait RunObserver {
    fn on_state(&mut self, _state: &LoadState) {}
    fn on_round(&mut self, _state_before: &LoadState, _outcome: &RoundOutcome) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Observer that does nothing (plain simulation).
pub struct NoObserver;

impl RunObserver for NoObserver {}

/// Build the process named by `config`, validating its parameters.
pub fn make_process(config: &ProcessConfig) -> Result<Box<dyn AllocationProcess>, ConfigError> {
    if config.bins == 0 {
        return Err(ConfigError::NoBins);
    }
    let n = config.bins;
    Ok(match config.kind {
        ProcessKind::OneChoice => Box::new(OneChoice),
        ProcessKind::DChoice { d } => {
            if d == 0 {
                return Err(ConfigError::ZeroChoices);
            }
            Box::new(DChoice { d })
        }
        ProcessKind::OnePlusBeta { beta } => {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(ConfigError::BadBeta(beta));
            }
            Box::new(OnePlusBeta { beta })
        }
        ProcessKind::Quantile { delta } => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(ConfigError::BadQuantile(delta));
            }
            Box::new(Quantile { delta })
        }
        ProcessKind::Packing => Box::new(Packing),
        ProcessKind::TightPacking => Box::new(TightPacking),
        ProcessKind::Memory => Box::new(Memory { cache: None }),
        ProcessKind::BiasedPacking { a, b, bias } => {
            Box::new(BiasedPacking::new(n, a, b, bias)?)
        }
    })
}

/// Run `rounds` rounds of `config` from the empty state.
pub fn simulate(
    config: &ProcessConfig,
    rounds: u64,
    rng: &mut SimRng,
) -> Result<LoadState, ConfigError> {
    simulate_with(config, rounds, rng, &mut NoObserver)
}

/// Run `rounds` rounds of `config` from the empty state, with observer
/// hooks. If `on_round` breaks, the returned state reflects only the rounds
/// completed before the break (inspect `state.rounds()`).
pub fn simulate_with(
    config: &ProcessConfig,
    rounds: u64,
    rng: &mut SimRng,
    observer: &mut dyn RunObserver,
) -> Result<LoadState, ConfigError> {
    let mut process = make_process(config)?;
    let mut state = LoadState::new(config.bins, process.membership_mode());
    observer.on_state(&state);
    for _ in 0..rounds {
        let outcome = process.plan(&state, rng);
        if observer.on_round(&state, &outcome).is_break() {
            return Ok(state);
        }
        apply(&mut state, &outcome);
        observer.on_state(&state);
    }
    Ok(state)
}

fn uniform_bin(state: &LoadState, rng: &mut SimRng) -> BinId {
    rng.gen_range(0..state.n() as BinId)
}

/// Least-loaded bin among `samples`, ties broken by lowest bin id.
pub fn pick_least_loaded(state: &LoadState, samples: &[BinId]) -> BinId {
    let mut best = samples[0];
    let mut best_load = state.load(best);
    for &bin in &samples[1..] {
        let load = state.load(bin);
        if load < best_load || (load == best_load && bin < best) {
            best = bin;
            best_load = load;
        }
    }
    best
}

/// The packing allocation for a sampled bin: one ball if overloaded,
/// `deficit+1` balls (all to the sample, ending at `⌈W/n⌉+1`) if not.
pub fn packing_deltas(state: &LoadState, sampled: BinId) -> SmallVec<[(BinId, u64); 4]> {
    if state.is_overloaded(sampled) {
        SmallVec::from_slice(&[(sampled, 1)])
    } else {
        SmallVec::from_slice(&[(sampled, state.deficit(sampled) + 1)])
    }
}

/// The tight-packing allocation for a sampled bin. Same ball count as
/// [`packing_deltas`], but the balls go to the heaviest underloaded bins:
/// the very heaviest (lowest id on ties) is filled to `⌈W/n⌉+1`, the rest
/// are filled to at most `⌈W/n⌉−1` in (load desc, id asc) order, the last
/// one possibly partially. The sampled bin's own spare capacity guarantees
/// the balls are always exhausted.
pub fn tight_packing_deltas(state: &LoadState, sampled: BinId) -> SmallVec<[(BinId, u64); 4]> {
    if state.is_overloaded(sampled) {
        return SmallVec::from_slice(&[(sampled, 1)]);
    }
    let ceil_avg = state.ceil_avg();
    let mut remaining = state.deficit(sampled) + 1;
    let mut deltas: SmallVec<[(BinId, u64); 4]> = SmallVec::new();
    let mut first = true;
    'walk: for (load, _) in state.underloaded_classes_desc() {
        for bin in state.members_ordered(load) {
            let take = if first {
                first = false;
                ceil_avg + 1 - load
            } else {
                (ceil_avg - 1 - load).min(remaining)
            };
            if take > 0 {
                deltas.push((bin, take));
                remaining -= take;
            }
            if remaining == 0 {
                break 'walk;
            }
        }
    }
    assert_eq!(remaining, 0, "tight packing balls must be exhausted by underloaded bins");
    deltas.sort_unstable_by_key(|&(bin, _)| bin);
    deltas
}

/// The memory commit rule: given the cached bin and a fresh sample, return
/// `(receiving bin, new cache)`. The lighter bin receives the ball; on a
/// tie the sample receives it and the cache is unchanged; whenever the
/// sample is strictly lighter it also becomes the new cache.
pub fn memory_commit(
    state: &LoadState,
    cache: Option<BinId>,
    sampled: BinId,
) -> (BinId, Option<BinId>) {
    match cache {
        None => (sampled, Some(sampled)),
        Some(b) => {
            let (xu, xb) = (state.load(sampled), state.load(b));
            if xu < xb {
                (sampled, Some(sampled))
            } else if xu == xb {
                (sampled, Some(b))
            } else {
                (b, Some(b))
            }
        }
    }
}

/// Whether a quantile process with threshold rank `rank` redirects a first
/// sample `u`: it does iff `u`'s load is at least the load at that rank
/// (so ties with the quantile load also redirect).
pub fn quantile_triggers(state: &LoadState, rank: u64, sampled: BinId) -> bool {
    state.load(sampled) >= state.load_at_rank(rank)
}

pub struct OneChoice;

impl AllocationProcess for OneChoice {
    fn kind(&self) -> ProcessKind {
        ProcessKind::OneChoice
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let u = uniform_bin(state, rng);
        RoundOutcome::single_ball(state.rounds(), SmallVec::from_slice(&[u]), u, 1)
    }
}

pub struct DChoice {
    d: u32,
}

impl AllocationProcess for DChoice {
    fn kind(&self) -> ProcessKind {
        ProcessKind::DChoice { d: self.d }
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let mut sampled: SmallVec<[BinId; 2]> = SmallVec::new();
        for _ in 0..self.d {
            sampled.push(uniform_bin(state, rng));
        }
        let chosen = pick_least_loaded(state, &sampled);
        RoundOutcome::single_ball(state.rounds(), sampled, chosen, self.d as u64)
    }
}

pub struct OnePlusBeta {
    beta: f64,
}

impl AllocationProcess for OnePlusBeta {
    fn kind(&self) -> ProcessKind {
        ProcessKind::OnePlusBeta { beta: self.beta }
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        if rng.gen_bool(self.beta) {
            let sampled =
                SmallVec::from_slice(&[uniform_bin(state, rng), uniform_bin(state, rng)]);
            let chosen = pick_least_loaded(state, &sampled);
            RoundOutcome::single_ball(state.rounds(), sampled, chosen, 2)
        } else {
            let u = uniform_bin(state, rng);
            RoundOutcome::single_ball(state.rounds(), SmallVec::from_slice(&[u]), u, 1)
        }
    }
}

pub struct Quantile {
    delta: f64,
}

impl Quantile {
    /// 1-based threshold rank `⌈δ·n⌉`, clamped into `[1, n]`.
    pub fn threshold_rank(delta: f64, n: usize) -> u64 {
        ((delta * n as f64).ceil() as u64).clamp(1, n as u64)
    }
}

impl AllocationProcess for Quantile {
    fn kind(&self) -> ProcessKind {
        ProcessKind::Quantile { delta: self.delta }
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let rank = Self::threshold_rank(self.delta, state.n());
        let u1 = uniform_bin(state, rng);
        if quantile_triggers(state, rank, u1) {
            let u2 = uniform_bin(state, rng);
            RoundOutcome::single_ball(state.rounds(), SmallVec::from_slice(&[u1, u2]), u2, 2)
        } else {
            RoundOutcome::single_ball(state.rounds(), SmallVec::from_slice(&[u1]), u1, 1)
        }
    }
}

pub struct Packing;

impl AllocationProcess for Packing {
    fn kind(&self) -> ProcessKind {
        ProcessKind::Packing
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let u = uniform_bin(state, rng);
        let deltas = packing_deltas(state, u);
        let balls_placed = deltas.iter().map(|&(_, c)| c).sum();
        RoundOutcome {
            round: state.rounds(),
            sampled: SmallVec::from_slice(&[u]),
            chosen: u,
            deltas,
            balls_placed,
            samples_used: 1,
            cache_before: None,
            cache_after: None,
        }
    }
}

pub struct TightPacking;

impl AllocationProcess for TightPacking {
    fn kind(&self) -> ProcessKind {
        ProcessKind::TightPacking
    }

    fn membership_mode(&self) -> MembershipMode {
        MembershipMode::Ordered
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let u = uniform_bin(state, rng);
        let deltas = tight_packing_deltas(state, u);
        let balls_placed = deltas.iter().map(|&(_, c)| c).sum();
        RoundOutcome {
            round: state.rounds(),
            sampled: SmallVec::from_slice(&[u]),
            chosen: u,
            deltas,
            balls_placed,
            samples_used: 1,
            cache_before: None,
            cache_after: None,
        }
    }
}

pub struct Memory {
    cache: Option<BinId>,
}

impl AllocationProcess for Memory {
    fn kind(&self) -> ProcessKind {
        ProcessKind::Memory
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let u = uniform_bin(state, rng);
        let cache_before = self.cache;
        let (chosen, cache_after) = memory_commit(state, cache_before, u);
        self.cache = cache_after;
        let mut outcome =
            RoundOutcome::single_ball(state.rounds(), SmallVec::from_slice(&[u]), chosen, 1);
        outcome.cache_before = cache_before;
        outcome.cache_after = cache_after;
        outcome
    }
}

/// `Packing` driven by an `(a,b)`-biased rank distribution.
///
/// The sampling distribution lives on sorted load ranks in units of
/// `1/(a·n)`: `MaxBias` gives the heaviest ranks `b/n` each, the lightest
/// `1/(a·n)` each, with one boundary rank absorbing the remainder;
/// `MinBias` is the exact mirror. Tied bins are interchangeable, so the
/// sampler draws a load class by its total mass and then a uniformly
/// random member of that class.
pub struct BiasedPacking {
    a: u64,
    b: u64,
    bias: BiasKind,
    n: u64,
    /// Number of ranks at the heavy end of the max-bias vector holding the
    /// full `a·b` units.
    heavy_ranks: u64,
    /// Units on the boundary rank `heavy_ranks + 1`.
    boundary_units: u64,
}

impl BiasedPacking {
    pub fn new(n: usize, a: u64, b: u64, bias: BiasKind) -> Result<Self, ConfigError> {
        if a == 0 || b == 0 {
            return Err(ConfigError::BadBias { a, b });
        }
        let n64 = n as u64;
        let total = (a as u128) * (n64 as u128);
        let per_heavy = (a as u128) * (b as u128);
        if total > u64::MAX as u128 || per_heavy.saturating_mul(n64 as u128) > u64::MAX as u128 {
            return Err(ConfigError::BiasOverflow(format!("a={a}, b={b}, n={n}")));
        }
        // Solve h·(ab) + boundary + (n−h−1)·1 = a·n with boundary in [1, ab].
        let (heavy_ranks, boundary_units) = if a * b == 1 {
            (0, 1) // uniform: every rank holds 1 unit.
        } else {
            let h = (n64 * (a - 1)) / (a * b - 1);
            let h = h.min(n64 - 1);
            let boundary = a * n64 - h * (a * b) - (n64 - h - 1);
            (h, boundary)
        };
        debug_assert!(boundary_units >= 1 && boundary_units <= a * b);
        Ok(BiasedPacking { a, b, bias, n: n64, heavy_ranks, boundary_units })
    }

    /// Total sampling units `a·n`.
    pub fn total_units(&self) -> u64 {
        self.a * self.n
    }

    /// Units on 1-based rank `k` of the max-bias vector.
    fn max_bias_units(&self, k: u64) -> u64 {
        if k <= self.heavy_ranks {
            self.a * self.b
        } else if k == self.heavy_ranks + 1 {
            self.boundary_units
        } else {
            1
        }
    }

    /// Prefix units of the max-bias vector over ranks `1..=k`.
    fn max_bias_prefix(&self, k: u64) -> u64 {
        let h = self.heavy_ranks;
        if k <= h {
            k * self.a * self.b
        } else {
            h * self.a * self.b + self.boundary_units + (k - h - 1)
        }
    }

    /// Units on 1-based rank `k` of the configured vector.
    pub fn units_at_rank(&self, k: u64) -> u64 {
        match self.bias {
            BiasKind::MaxBias => self.max_bias_units(k),
            BiasKind::MinBias => self.max_bias_units(self.n + 1 - k),
        }
    }

    /// Prefix units over ranks `1..=k` of the configured vector.
    pub fn prefix_units(&self, k: u64) -> u64 {
        match self.bias {
            BiasKind::MaxBias => self.max_bias_prefix(k),
            BiasKind::MinBias => self.total_units() - self.max_bias_prefix(self.n - k),
        }
    }
}

impl AllocationProcess for BiasedPacking {
    fn kind(&self) -> ProcessKind {
        ProcessKind::BiasedPacking { a: self.a, b: self.b, bias: self.bias }
    }

    fn membership_mode(&self) -> MembershipMode {
        MembershipMode::Pooled
    }

    fn plan(&mut self, state: &LoadState, rng: &mut SimRng) -> RoundOutcome {
        let z = rng.gen_range(0..self.total_units());
        let mut acc = 0u64;
        let mut rank_lo = 1u64;
        let mut picked: Option<(u64, u32)> = None;
        for (load, count) in state.classes_desc() {
            let rank_hi = rank_lo + count as u64 - 1;
            let class_units = self.prefix_units(rank_hi) - self.prefix_units(rank_lo - 1);
            if z < acc + class_units {
                picked = Some((load, count));
                break;
            }
            acc += class_units;
            rank_lo = rank_hi + 1;
        }
        let (load, count) = picked.expect("biased sample must land in some class");
        let member = rng.gen_range(0..count);
        let u = state.member_at(load, member);
        let deltas = packing_deltas(state, u);
        let balls_placed = deltas.iter().map(|&(_, c)| c).sum();
        RoundOutcome {
            round: state.rounds(),
            sampled: SmallVec::from_slice(&[u]),
            chosen: u,
            deltas,
            balls_placed,
            samples_used: 1,
            cache_before: None,
            cache_after: None,
        }
    }
}
