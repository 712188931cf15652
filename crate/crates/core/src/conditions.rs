//! Runtime verifiers for the two structural conditions a filling-style
//! process must satisfy.
//!
//! **Sampling condition (majorization).** The per-round selection
//! distribution, viewed over bins sorted by descending load (rank 1 =
//! heaviest), must be majorized by the uniform distribution: every prefix
//! over the top `k` ranks carries at most `k/n` probability. Heavier bins
//! may never be favored in aggregate.
//!
//! **Allocation condition (filling discipline).** Per round, writing `W`
//! for the round-start total and `d` for the committed bin's deficit:
//! an overloaded committed bin receives exactly one ball; an underloaded
//! one triggers exactly `d+1` balls, every receiver must start the round
//! at or below `⌈W/n⌉`, no receiver may end above `⌈W/n⌉+1`, and at most
//! one receiver may end there. The receiver rules are deliberately phrased
//! against the round-start ceiling rather than "underloaded only": a
//! multi-ball round placed ball-by-ball raises the running average as it
//! goes, so a legal sequential placement can top up a bin whose normalized
//! load sits in `[0, 1)`, and equal-load ties can leave two receivers
//! exactly at the ceiling. Only the strictly-above-ceiling slot is unique.
//!
//! Checks are exact wherever the vector is exact: rational prefix sums, or
//! integer unit counts for per-class aggregated vectors. The double path
//! uses a 1e-12 tolerance. Tie classes (equal-load bins) are interchangeable,
//! so a bin-indexed vector that fails under the stable labeling is re-checked
//! under its most favorable tie labeling (ascending mass within each class)
//! before a violation is declared.

use crate::model::{BinId, LoadState, MembershipMode, Rational};
use crate::processes::{
    apply, memory_commit, BiasedPacking as BiasedPackingProcess, ProcessKind, Quantile,
    RoundOutcome,
};
use num_rational::Ratio;
use serde::Serialize;
use std::collections::BTreeMap;
use std::ops::ControlFlow;

/// Tolerance for the floating-point vector path.
pub const P_TOLERANCE: f64 = 1e-12;

/// A selection distribution over sorted load ranks (rank 1 = heaviest),
/// exact or floating-point.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilityVector {
    Exact(Vec<Rational>),
    Approx(Vec<f64>),
}

impl ProbabilityVector {
    pub fn len(&self) -> usize {
        match self {
            ProbabilityVector::Exact(v) => v.len(),
            ProbabilityVector::Approx(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry as a float (for reporting).
    pub fn get_f64(&self, idx: usize) -> f64 {
        match self {
            ProbabilityVector::Exact(v) => ratio_to_f64(v[idx]),
            ProbabilityVector::Approx(v) => v[idx],
        }
    }
}

fn ratio_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// How a round (or vector) broke a condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ViolationKind {
    /// Prefix over the top `rank` ranks exceeds `rank/n`.
    PrefixTooHeavy { rank: u64, prefix: f64, bound: f64 },
    /// Vector malformed: wrong length, negative entry, or mass ≠ 1.
    MalformedVector { detail: String },
    /// Vector entry outside the `(a,b)`-bias box `[1/(an), b/n]`.
    OutsideBiasBox { rank: u64, prob: f64, low: f64, high: f64 },
    /// Overloaded committed bin must receive exactly one ball.
    OverloadedNotSingle { chosen: BinId },
    /// Ball count differs from deficit+1 for an underloaded committed bin.
    WrongBallCount { chosen: BinId, expected: u64, got: u64 },
    /// A receiver started the round above the average ceiling.
    ReceiverTooHeavy { bin: BinId, load: u64, ceil_avg: u64 },
    /// A receiver ended above `⌈W/n⌉+1`.
    ReceiverOvershoot { bin: BinId, end_load: u64, cap: u64 },
    /// More than one receiver ended at `⌈W/n⌉+1`.
    MultipleTopReceivers { count: u64 },
    /// Outcome bookkeeping inconsistent with the state.
    InconsistentOutcome { detail: String },
}

/// Which condition a violation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    Sampling,
    Allocation,
}

/// A condition violation at a specific round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub round: u64,
    pub condition: Condition,
    pub kind: ViolationKind,
}

/// Aggregate verification result over a run or trace.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConditionReport {
    pub rounds_checked: u64,
    pub p_violations: u64,
    pub w_violations: u64,
    pub first_violation: Option<Violation>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.p_violations == 0 && self.w_violations == 0
    }

    fn note(&mut self, round: u64, p: Option<ViolationKind>, w: Option<ViolationKind>) {
        self.rounds_checked += 1;
        if let Some(kind) = p {
            self.p_violations += 1;
            self.first_violation.get_or_insert(Violation {
                round,
                condition: Condition::Sampling,
                kind,
            });
        }
        if let Some(kind) = w {
            self.w_violations += 1;
            self.first_violation.get_or_insert(Violation {
                round,
                condition: Condition::Allocation,
                kind,
            });
        }
    }
}

/// Abort on the first violation, or keep counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    Strict,
    Audit,
}

// ---------------------------------------------------------------------------
// Majorization check
// ---------------------------------------------------------------------------

/// Check the majorization condition for a rank-indexed vector of length `n`:
/// every prefix sum over the top `k` ranks must be at most `k/n`. Exact on
/// the rational path, tolerance [`P_TOLERANCE`] on the double path. Also
/// validates shape: length `n`, non-negative entries, total mass 1.
pub fn check_condition_p(vector: &ProbabilityVector, n: usize) -> Result<(), ViolationKind> {
    if vector.len() != n {
        return Err(ViolationKind::MalformedVector {
            detail: format!("length {} but n = {n}", vector.len()),
        });
    }
    match vector {
        ProbabilityVector::Exact(probs) => {
            let mut sum = Rational::new(0, 1);
            for (idx, &p) in probs.iter().enumerate() {
                if p < Rational::new(0, 1) {
                    return Err(ViolationKind::MalformedVector {
                        detail: format!("negative entry at rank {}", idx + 1),
                    });
                }
                sum += p;
                let k = (idx + 1) as i128;
                if sum > Rational::new(k, n as i128) {
                    return Err(ViolationKind::PrefixTooHeavy {
                        rank: (idx + 1) as u64,
                        prefix: ratio_to_f64(sum),
                        bound: (idx + 1) as f64 / n as f64,
                    });
                }
            }
            if sum != Rational::new(1, 1) {
                return Err(ViolationKind::MalformedVector {
                    detail: format!("mass sums to {sum}, not 1"),
                });
            }
            Ok(())
        }
        ProbabilityVector::Approx(probs) => {
            let mut sum = 0.0f64;
            for (idx, &p) in probs.iter().enumerate() {
                if p < -P_TOLERANCE {
                    return Err(ViolationKind::MalformedVector {
                        detail: format!("negative entry at rank {}", idx + 1),
                    });
                }
                sum += p;
                let bound = (idx + 1) as f64 / n as f64;
                if sum > bound + P_TOLERANCE {
                    return Err(ViolationKind::PrefixTooHeavy {
                        rank: (idx + 1) as u64,
                        prefix: sum,
                        bound,
                    });
                }
            }
            if (sum - 1.0).abs() > P_TOLERANCE {
                return Err(ViolationKind::MalformedVector {
                    detail: format!("mass sums to {sum}, not 1"),
                });
            }
            Ok(())
        }
    }
}

/// Majorization check for a *bin-indexed* vector against a concrete state.
///
/// The vector is put into rank order with the stable labeling (load
/// descending, id ascending). Tied bins are interchangeable, so if the
/// stable labeling fails the check is retried with each tie class reordered
/// in its most favorable order (ascending mass — the order with the lowest
/// possible prefixes); a violation is declared only when that also fails.
pub fn check_condition_p_for_state(
    state: &LoadState,
    by_bin: &ProbabilityVector,
) -> Result<(), ViolationKind> {
    if by_bin.len() != state.n() {
        return Err(ViolationKind::MalformedVector {
            detail: format!("length {} but n = {}", by_bin.len(), state.n()),
        });
    }
    let order = state.sorted_ranks();
    let ranked = reindex(by_bin, &order);
    match check_condition_p(&ranked, state.n()) {
        Ok(()) => Ok(()),
        Err(ViolationKind::PrefixTooHeavy { .. }) => {
            let favorable = sort_ties_ascending(state, &order, ranked);
            check_condition_p(&favorable, state.n())
        }
        Err(other) => Err(other),
    }
}

fn reindex(by_bin: &ProbabilityVector, order: &[BinId]) -> ProbabilityVector {
    match by_bin {
        ProbabilityVector::Exact(v) => {
            ProbabilityVector::Exact(order.iter().map(|&b| v[b as usize]).collect())
        }
        ProbabilityVector::Approx(v) => {
            ProbabilityVector::Approx(order.iter().map(|&b| v[b as usize]).collect())
        }
    }
}

fn sort_ties_ascending(
    state: &LoadState,
    order: &[BinId],
    mut ranked: ProbabilityVector,
) -> ProbabilityVector {
    let mut start = 0;
    while start < order.len() {
        let load = state.load(order[start]);
        let mut end = start + 1;
        while end < order.len() && state.load(order[end]) == load {
            end += 1;
        }
        match &mut ranked {
            ProbabilityVector::Exact(v) => v[start..end].sort_unstable(),
            ProbabilityVector::Approx(v) => v[start..end].sort_unstable_by(f64::total_cmp),
        }
        start = end;
    }
    ranked
}

// ---------------------------------------------------------------------------
// Aggregated (per-class) majorization check
// ---------------------------------------------------------------------------

/// A run of consecutive ranks each holding the same probability mass,
/// expressed in integer units of `1/(scale·n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MassRun {
    pub units: u64,
    pub count: u64,
}

/// Exact majorization check over aggregated rank runs with total mass
/// `scale·n` units. Within a run both the prefix and the bound are linear
/// in the rank, so only each run's first and last rank can be binding;
/// checking those two per run makes the whole check O(#runs).
pub fn check_prefix_units(runs: &[MassRun], n: usize, scale: u64) -> Result<(), ViolationKind> {
    let n = n as u128;
    let scale = scale as u128;
    let mut ranks = 0u128;
    let mut acc = 0u128;
    for run in runs {
        if run.count == 0 {
            continue;
        }
        let first = acc + run.units as u128;
        if first > (ranks + 1) * scale {
            return Err(prefix_violation(ranks + 1, first, scale, n));
        }
        let last = acc + run.units as u128 * run.count as u128;
        if last > (ranks + run.count as u128) * scale {
            return Err(prefix_violation(ranks + run.count as u128, last, scale, n));
        }
        acc = last;
        ranks += run.count as u128;
    }
    if ranks != n || acc != scale * n {
        return Err(ViolationKind::MalformedVector {
            detail: format!("runs cover {ranks} ranks with {acc} units; expected {n} ranks, {} units", scale * n),
        });
    }
    Ok(())
}

fn prefix_violation(rank: u128, units: u128, scale: u128, n: u128) -> ViolationKind {
    ViolationKind::PrefixTooHeavy {
        rank: rank as u64,
        prefix: units as f64 / (scale * n) as f64,
        bound: rank as f64 / n as f64,
    }
}

/// The uniform selection vector aggregated over the state's load classes.
pub fn uniform_mass_runs(state: &LoadState) -> Vec<MassRun> {
    state.classes_desc().map(|(_, count)| MassRun { units: 1, count: count as u64 }).collect()
}

/// The memory-process effective selection vector aggregated over load
/// classes, in units of `1/n`: bins heavier than the cache get 0, the cache
/// gets `1 + #heavier`, every other bin at or below the cache load gets 1.
/// The cache is placed first within its tie class — the *dominant* labeling,
/// so a pass here certifies every labeling of ties.
pub fn memory_mass_runs(state: &LoadState, cache: Option<BinId>) -> Vec<MassRun> {
    let Some(cache) = cache else {
        return uniform_mass_runs(state);
    };
    let cache_load = state.load(cache);
    let heavier = state.count_heavier(cache_load);
    let mut runs = Vec::new();
    for (load, count) in state.classes_desc() {
        let count = count as u64;
        if load > cache_load {
            runs.push(MassRun { units: 0, count });
        } else if load == cache_load {
            runs.push(MassRun { units: 1 + heavier, count: 1 });
            if count > 1 {
                runs.push(MassRun { units: 1, count: count - 1 });
            }
        } else {
            runs.push(MassRun { units: 1, count });
        }
    }
    runs
}

// ---------------------------------------------------------------------------
// Effective selection vectors
// ---------------------------------------------------------------------------

/// Per-bin committed-ball mass of one memory round, in units of `1/n`:
/// entry `b` counts the uniform samples `u` for which the memory rule
/// commits the ball to `b`, given the cached bin.
pub fn memory_bin_masses(state: &LoadState, cache: BinId) -> Vec<u64> {
    let mut masses = vec![0u64; state.n()];
    for u in 0..state.n() as BinId {
        let (chosen, _) = memory_commit(state, Some(cache), u);
        masses[chosen as usize] += 1;
    }
    masses
}

/// Exact effective selection vector of one memory round, indexed by sorted
/// load rank under the stable labeling. Built by enumerating all `n`
/// equally likely samples; O(n).
pub fn effective_vector_memory(state: &LoadState, cache: BinId) -> ProbabilityVector {
    let masses = memory_bin_masses(state, cache);
    let n = state.n() as i128;
    let order = state.sorted_ranks();
    ProbabilityVector::Exact(
        order.iter().map(|&b| Ratio::new(masses[b as usize] as i128, n)).collect(),
    )
}

/// Exact quantile-process selection vector for a state with `t` bins at or
/// above the threshold load: a first sample among those `t` redirects to a
/// blind uniform second sample, any other first sample keeps the ball.
pub fn quantile_vector(n: usize, t: u64) -> ProbabilityVector {
    let n_i = n as i128;
    let t_i = t as i128;
    let nn = n_i * n_i;
    ProbabilityVector::Exact(
        (1..=n as u64)
            .map(|k| {
                if k <= t {
                    Ratio::new(t_i, nn)
                } else {
                    Ratio::new(n_i + t_i, nn)
                }
            })
            .collect(),
    )
}

/// Rank-indexed selection vector of a `d`-choice round: the committed bin
/// is the least loaded of `d` uniform samples, so rank `k` carries
/// `(k^d − (k−1)^d)/n^d`. Tie classes are symmetrized (tied bins are
/// interchangeable). Exact while `n^d` fits in `i128`, floating-point
/// beyond that.
pub fn d_choice_vector(n: usize, d: u32) -> ProbabilityVector {
    let n_i = n as i128;
    if let Some(denom) = n_i.checked_pow(d) {
        ProbabilityVector::Exact(
            (1..=n_i)
                .map(|k| Ratio::new(k.pow(d) - (k - 1).pow(d), denom))
                .collect(),
        )
    } else {
        let nf = n as f64;
        ProbabilityVector::Approx(
            (1..=n as u64)
                .map(|k| (k as f64 / nf).powi(d as i32) - ((k - 1) as f64 / nf).powi(d as i32))
                .collect(),
        )
    }
}

/// Rank-indexed effective selection vector of `kind` on `state`, where one
/// exists independently of process-internal state. `Memory` needs its cache
/// — use [`effective_vector_memory`] — so it returns `None` here.
pub fn effective_vector(kind: &ProcessKind, state: &LoadState) -> Option<ProbabilityVector> {
    let n = state.n();
    match *kind {
        ProcessKind::OneChoice | ProcessKind::Packing | ProcessKind::TightPacking => {
            Some(ProbabilityVector::Exact(vec![Rational::new(1, n as i128); n]))
        }
        ProcessKind::DChoice { d } => Some(d_choice_vector(n, d)),
        ProcessKind::OnePlusBeta { beta } => {
            let nf = n as f64;
            Some(ProbabilityVector::Approx(
                (1..=n as u64)
                    .map(|k| {
                        beta * (2 * k - 1) as f64 / (nf * nf) + (1.0 - beta) / nf
                    })
                    .collect(),
            ))
        }
        ProcessKind::Quantile { delta } => {
            let rank = Quantile::threshold_rank(delta, n);
            let t = state.count_at_least(state.load_at_rank(rank));
            Some(quantile_vector(n, t))
        }
        ProcessKind::BiasedPacking { a, b, bias } => {
            let p = BiasedPackingProcess::new(n, a, b, bias).ok()?;
            let denom = (a as i128) * (n as i128);
            Some(ProbabilityVector::Exact(
                (1..=n as u64).map(|k| Ratio::new(p.units_at_rank(k) as i128, denom)).collect(),
            ))
        }
        ProcessKind::Memory => None,
    }
}

/// Validate a rank-indexed vector against the `(a,b)`-bias box: every entry
/// must lie in `[1/(an), b/n]` and the entries must sum to 1.
pub fn validate_bias_vector(probs: &[Rational], a: u64, b: u64) -> Result<(), ViolationKind> {
    let n = probs.len() as i128;
    let low = Ratio::new(1, (a as i128) * n);
    let high = Ratio::new(b as i128, n);
    let mut sum = Rational::new(0, 1);
    for (idx, &p) in probs.iter().enumerate() {
        if p < low || p > high {
            return Err(ViolationKind::OutsideBiasBox {
                rank: (idx + 1) as u64,
                prob: ratio_to_f64(p),
                low: ratio_to_f64(low),
                high: ratio_to_f64(high),
            });
        }
        sum += p;
    }
    if sum != Rational::new(1, 1) {
        return Err(ViolationKind::MalformedVector {
            detail: format!("mass sums to {sum}, not 1"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Allocation-discipline check
// ---------------------------------------------------------------------------

/// Check the filling allocation discipline of one round against its
/// round-start state. See the module docs for the exact rules and why the
/// receiver constraints are phrased against the round-start ceiling.
pub fn check_condition_w(
    state: &LoadState,
    outcome: &RoundOutcome,
) -> Result<(), ViolationKind> {
    let sum: u64 = outcome.deltas.iter().map(|&(_, c)| c).sum();
    if sum != outcome.balls_placed {
        return Err(ViolationKind::InconsistentOutcome {
            detail: format!("deltas sum to {sum} but balls_placed = {}", outcome.balls_placed),
        });
    }
    if outcome
        .deltas
        .iter()
        .any(|&(bin, count)| count == 0 || (bin as usize) >= state.n())
    {
        return Err(ViolationKind::InconsistentOutcome {
            detail: "delta with zero balls or out-of-range bin".to_string(),
        });
    }
    let chosen = outcome.chosen;
    if (chosen as usize) >= state.n() {
        return Err(ViolationKind::InconsistentOutcome {
            detail: format!("chosen bin {chosen} out of range"),
        });
    }
    if state.is_overloaded(chosen) {
        return if outcome.deltas.as_slice() == [(chosen, 1)] {
            Ok(())
        } else {
            Err(ViolationKind::OverloadedNotSingle { chosen })
        };
    }
    let deficit = state.deficit(chosen);
    if outcome.balls_placed != deficit + 1 {
        return Err(ViolationKind::WrongBallCount {
            chosen,
            expected: deficit + 1,
            got: outcome.balls_placed,
        });
    }
    let ceil_avg = state.ceil_avg();
    let mut top_enders = 0u64;
    for &(bin, count) in &outcome.deltas {
        let start = state.load(bin);
        if start > ceil_avg {
            return Err(ViolationKind::ReceiverTooHeavy { bin, load: start, ceil_avg });
        }
        let end = start + count;
        if end > ceil_avg + 1 {
            return Err(ViolationKind::ReceiverOvershoot { bin, end_load: end, cap: ceil_avg + 1 });
        }
        if end == ceil_avg + 1 {
            top_enders += 1;
        }
    }
    if top_enders > 1 {
        return Err(ViolationKind::MultipleTopReceivers { count: top_enders });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Per-round verifier
// ---------------------------------------------------------------------------

/// How often (in rounds) the memory verifier cross-checks its aggregated
/// per-class vector against a full O(n) enumeration.
pub const MEMORY_ENUM_STRIDE: u64 = 64;

/// Per-round verifier of both conditions, usable as a
/// [`crate::processes::RunObserver`] for in-run verification or via
/// [`audit_trace`] for recorded traces.
///
/// The selection vectors of `DChoice`, `OnePlusBeta`, and `BiasedPacking`
/// do not depend on the load state, so their majorization check runs once
/// and the verdict is reused each round. The quantile vector depends only
/// on the count of bins at or above the threshold load, so verdicts are
/// memoized per count. Uniform-sampling and memory rounds are checked
/// every round through exact per-class aggregation; memory rounds are
/// additionally cross-checked by full enumeration every
/// [`MEMORY_ENUM_STRIDE`] rounds.
pub struct Verifier {
    kind: ProcessKind,
    n: usize,
    mode: VerifyMode,
    report: ConditionReport,
    static_p: Option<Option<ViolationKind>>,
    quantile_p: BTreeMap<u64, Option<ViolationKind>>,
    enum_stride: u64,
}

impl Verifier {
    pub fn new(kind: ProcessKind, n: usize, mode: VerifyMode) -> Self {
        Verifier {
            kind,
            n,
            mode,
            report: ConditionReport::default(),
            static_p: None,
            quantile_p: BTreeMap::new(),
            enum_stride: MEMORY_ENUM_STRIDE,
        }
    }

    pub fn report(&self) -> &ConditionReport {
        &self.report
    }

    pub fn into_report(self) -> ConditionReport {
        self.report
    }

    /// Check one `(state_before, outcome)` pair and record the verdicts.
    /// Returns `Break` when running strictly and a violation was found.
    pub fn record(&mut self, state: &LoadState, outcome: &RoundOutcome) -> ControlFlow<()> {
        let p = self.p_violation(state, outcome);
        let w = check_condition_w(state, outcome).err();
        self.report.note(outcome.round, p, w);
        if self.mode == VerifyMode::Strict && !self.report.passed() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    fn p_violation(&mut self, state: &LoadState, outcome: &RoundOutcome) -> Option<ViolationKind> {
        match self.kind {
            ProcessKind::OneChoice | ProcessKind::Packing | ProcessKind::TightPacking => {
                check_prefix_units(&uniform_mass_runs(state), self.n, 1).err()
            }
            ProcessKind::Memory => {
                let fast =
                    check_prefix_units(&memory_mass_runs(state, outcome.cache_before), self.n, 1)
                        .err();
                if fast.is_some() {
                    return fast;
                }
                match outcome.cache_before {
                    Some(cache)
                        if self.enum_stride > 0 && outcome.round.is_multiple_of(self.enum_stride) =>
                    {
                        let vector = effective_vector_memory(state, cache);
                        check_condition_p(&vector, self.n).err()
                    }
                    _ => None,
                }
            }
            ProcessKind::Quantile { delta } => {
                let rank = Quantile::threshold_rank(delta, self.n);
                let t = state.count_at_least(state.load_at_rank(rank));
                let n = self.n;
                self.quantile_p
                    .entry(t)
                    .or_insert_with(|| check_condition_p(&quantile_vector(n, t), n).err())
                    .clone()
            }
            ProcessKind::DChoice { .. }
            | ProcessKind::OnePlusBeta { .. }
            | ProcessKind::BiasedPacking { .. } => {
                let kind = self.kind;
                let n = self.n;
                self.static_p
                    .get_or_insert_with(|| {
                        let vector = effective_vector(&kind, state)
                            .expect("state-independent selection vector");
                        check_condition_p(&vector, n).err()
                    })
                    .clone()
            }
        }
    }
}

impl crate::processes::RunObserver for Verifier {
    fn on_round(&mut self, state_before: &LoadState, outcome: &RoundOutcome) -> ControlFlow<()> {
        self.record(state_before, outcome)
    }
}

/// Replay a recorded trace of outcomes from the empty state and verify both
/// conditions each round. In strict mode the audit stops at the first
/// violation. Note that a raw (atomic, one ball per step) memory trace is
/// audited as-is and legitimately reports allocation violations — fold it
/// first (see the unfolding module) for the multi-ball filling view.
pub fn audit_trace(
    kind: &ProcessKind,
    n: usize,
    outcomes: &[RoundOutcome],
    mode: VerifyMode,
) -> ConditionReport {
    let mut verifier = Verifier::new(*kind, n, mode);
    let mut state = LoadState::new(n, MembershipMode::CountsOnly);
    for outcome in outcomes {
        if verifier.record(&state, outcome).is_break() {
            break;
        }
        apply(&mut state, outcome);
    }
    verifier.into_report()
}
