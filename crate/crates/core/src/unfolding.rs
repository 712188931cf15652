//! Folding one-ball memory traces into multi-ball filling rounds.
//!
//! The memory process allocates one ball per atomic step, but its
//! imbalance behaviour matches the filling discipline once steps are
//! grouped: at a round boundary, look at the committed bin `c` of the next
//! atomic step against the round-start state. If `c` is overloaded the
//! round is that single step; otherwise the round spans the next
//! `deficit(c) + 1` atomic steps (deficit measured at the round start).
//! The folded round's receivers are the committed bins of its atomic
//! steps, aggregated.
//!
//! [`MemoryFolder`] performs this grouping incrementally so arbitrarily
//! long traces can be folded and audited in a stream without materializing
//! them. A trace that ends mid-round leaves a truncated partial round,
//! which is flagged and excluded from audits and from the folded sequence.

use crate::conditions::{ConditionReport, Verifier, VerifyMode};
use crate::model::{BinId, LoadState, MembershipMode, Rational};
use crate::processes::{apply, ProcessKind, RoundOutcome, RunObserver};
use smallvec::SmallVec;
use std::collections::BTreeMap;
use std::ops::ControlFlow;

/// One folded multi-ball round, plus where it sits in the atomic trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldedRound {
    /// The folded round as a standard outcome: `round` is the folded
    /// index, `chosen` the committed bin of the boundary step, `deltas`
    /// the aggregated receivers, and `samples_used` the number of atomic
    /// steps folded in (equal to `balls_placed`).
    pub outcome: RoundOutcome,
    /// Index of the round's first atomic step within the trace (0-based).
    pub start_step: u64,
}

#[derive(Debug)]
struct Pending {
    start_step: u64,
    chosen: BinId,
    cache_before: Option<BinId>,
    cache_after: Option<BinId>,
    need: u64,
    got: u64,
    sampled: SmallVec<[BinId; 2]>,
    deltas: BTreeMap<BinId, u64>,
}

/// Incremental folder of an atomic memory trace.
///
/// Feed atomic outcomes with [`absorb`](Self::absorb); when a step
/// completes a round, the folded round is returned *before* being applied
/// so callers can check it against the round-start state
/// ([`state`](Self::state)), then apply it with [`commit`](Self::commit).
#[derive(Debug)]
pub struct MemoryFolder {
    state: LoadState,
    pending: Option<Pending>,
    awaiting_commit: bool,
    next_round: u64,
    steps_seen: u64,
}

impl MemoryFolder {
    /// Folder starting from the empty state on `n` bins.
    pub fn new(n: usize) -> Self {
        Self::from_state(LoadState::new(n, MembershipMode::CountsOnly))
    }

    /// Folder starting from an arbitrary round-start state.
    pub fn from_state(state: LoadState) -> Self {
        MemoryFolder {
            state,
            pending: None,
            awaiting_commit: false,
            next_round: 0,
            steps_seen: 0,
        }
    }

    /// The current round-start state: all committed folded rounds applied,
    /// the pending partial round not.
    pub fn state(&self) -> &LoadState {
        &self.state
    }

    /// Whether a partial round is in flight (a trace ending here is
    /// truncated).
    pub fn truncated(&self) -> bool {
        self.pending.is_some()
    }

    /// Balls absorbed into the in-flight partial round.
    pub fn pending_balls(&self) -> u64 {
        self.pending.as_ref().map_or(0, |p| p.got)
    }

    /// Atomic steps consumed so far.
    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    /// Feed one atomic (single-ball) outcome. Returns the completed folded
    /// round, if this step finished one; the round is **not yet applied** —
    /// call [`commit`](Self::commit) before absorbing further steps.
    pub fn absorb(&mut self, outcome: &RoundOutcome) -> Option<FoldedRound> {
        assert!(
            !self.awaiting_commit,
            "absorb called with an uncommitted folded round"
        );
        assert!(
            outcome.balls_placed == 1
                && outcome.deltas.len() == 1
                && outcome.deltas[0] == (outcome.chosen, 1),
            "memory folding expects atomic one-ball outcomes; got {outcome:?}"
        );
        let pending = self.pending.get_or_insert_with(|| {
            let chosen = outcome.chosen;
            let need = if self.state.is_overloaded(chosen) {
                1
            } else {
                self.state.deficit(chosen) + 1
            };
            Pending {
                start_step: self.steps_seen,
                chosen,
                cache_before: outcome.cache_before,
                cache_after: None,
                need,
                got: 0,
                sampled: SmallVec::new(),
                deltas: BTreeMap::new(),
            }
        });
        pending.sampled.extend_from_slice(&outcome.sampled);
        *pending.deltas.entry(outcome.chosen).or_insert(0) += 1;
        pending.cache_after = outcome.cache_after;
        pending.got += 1;
        self.steps_seen += 1;
        if pending.got < pending.need {
            return None;
        }
        let pending = self.pending.take().expect("pending round present");
        self.awaiting_commit = true;
        let folded = FoldedRound {
            outcome: RoundOutcome {
                round: self.next_round,
                sampled: pending.sampled,
                chosen: pending.chosen,
                deltas: pending.deltas.into_iter().collect(),
                balls_placed: pending.need,
                samples_used: pending.need,
                cache_before: pending.cache_before,
                cache_after: pending.cache_after,
            },
            start_step: pending.start_step,
        };
        self.next_round += 1;
        Some(folded)
    }

    /// Apply a folded round returned by [`absorb`](Self::absorb) to the
    /// folder's state.
    pub fn commit(&mut self, folded: &FoldedRound) {
        assert!(self.awaiting_commit, "commit without a pending folded round");
        apply(&mut self.state, &folded.outcome);
        self.awaiting_commit = false;
    }
}

/// Result of folding a complete trace.
#[derive(Debug)]
pub struct FoldReport {
    /// The complete folded rounds, in order.
    pub rounds: Vec<FoldedRound>,
    /// Whether the trace ended mid-round (the partial tail is excluded).
    pub truncated: bool,
    /// Atomic steps consumed, including any truncated tail.
    pub atomic_steps: u64,
    /// State after all complete folded rounds (the truncated tail is not
    /// applied).
    pub final_state: LoadState,
}

/// Fold an atomic memory trace recorded from the empty state on `n` bins.
pub fn fold_memory_trace(n: usize, outcomes: &[RoundOutcome]) -> FoldReport {
    let mut folder = MemoryFolder::new(n);
    let mut rounds = Vec::new();
    for outcome in outcomes {
        if let Some(folded) = folder.absorb(outcome) {
            folder.commit(&folded);
            rounds.push(folded);
        }
    }
    FoldReport {
        truncated: folder.truncated(),
        atomic_steps: folder.steps_seen(),
        final_state: folder.state,
        rounds,
    }
}

/// Streaming fold-and-verify of an atomic memory trace: every completed
/// folded round is checked against both framework conditions at its
/// round-start state. Usable directly as a [`RunObserver`] on an atomic
/// memory run, so verification needs no materialized trace.
pub struct FoldAuditor {
    folder: MemoryFolder,
    verifier: Verifier,
}

impl FoldAuditor {
    pub fn new(n: usize, mode: VerifyMode) -> Self {
        FoldAuditor {
            folder: MemoryFolder::new(n),
            verifier: Verifier::new(ProcessKind::Memory, n, mode),
        }
    }

    /// Feed one atomic outcome; checks and applies any round it completes.
    /// `Break` means strict mode saw a violation.
    pub fn push(&mut self, outcome: &RoundOutcome) -> ControlFlow<()> {
        match self.folder.absorb(outcome) {
            None => ControlFlow::Continue(()),
            Some(folded) => {
                let flow = self.verifier.record(self.folder.state(), &folded.outcome);
                self.folder.commit(&folded);
                flow
            }
        }
    }

    pub fn report(&self) -> &ConditionReport {
        self.verifier.report()
    }

    pub fn truncated(&self) -> bool {
        self.folder.truncated()
    }

    /// Folded rounds fully checked so far.
    pub fn rounds_checked(&self) -> u64 {
        self.verifier.report().rounds_checked
    }

    pub fn into_report(self) -> (ConditionReport, bool) {
        let truncated = self.folder.truncated();
        (self.verifier.into_report(), truncated)
    }
}

impl RunObserver for FoldAuditor {
    fn on_round(&mut self, _state: &LoadState, outcome: &RoundOutcome) -> ControlFlow<()> {
        self.push(outcome)
    }
}

/// Count how many of the states reached after each trace record have a
/// load gap of at least `threshold`. With a one-ball-per-record trace this
/// is the number of atomic allocations that land in (or fail to fix) a
/// state whose gap is at least the threshold.
pub fn bad_allocation_count(n: usize, outcomes: &[RoundOutcome], threshold: &Rational) -> u64 {
    let mut state = LoadState::new(n, MembershipMode::CountsOnly);
    let mut count = 0u64;
    for outcome in outcomes {
        apply(&mut state, outcome);
        if state.gap() >= *threshold {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{simulate_with, ProcessConfig, ProcessKind};
    use crate::rng::rng_for_rep;

    fn atomic(
        round: u64,
        sampled: BinId,
        chosen: BinId,
        cache_before: Option<BinId>,
        cache_after: Option<BinId>,
    ) -> RoundOutcome {
        RoundOutcome {
            round,
            sampled: SmallVec::from_slice(&[sampled]),
            chosen,
            deltas: SmallVec::from_slice(&[(chosen, 1)]),
            balls_placed: 1,
            samples_used: 1,
            cache_before,
            cache_after,
        }
    }

    /// Collects every outcome of a run.
    struct Collector {
        outcomes: Vec<RoundOutcome>,
    }

    impl RunObserver for Collector {
        fn on_round(&mut self, _: &LoadState, o: &RoundOutcome) -> ControlFlow<()> {
            self.outcomes.push(o.clone());
            ControlFlow::Continue(())
        }
    }

    fn memory_trace(n: usize, steps: u64, seed: u64) -> (Vec<RoundOutcome>, LoadState) {
        let config = ProcessConfig { bins: n, kind: ProcessKind::Memory };
        let mut collector = Collector { outcomes: Vec::new() };
        let state =
            simulate_with(&config, steps, &mut rng_for_rep(seed, 0), &mut collector).unwrap();
        (collector.outcomes, state)
    }

    #[test]
    fn two_step_round_folds_into_one_filling_round() {
        // Round-start loads (1,0), cache = bin 0. The boundary step commits
        // to bin 1 (underloaded, deficit 1), so the round spans two steps.
        let start = LoadState::from_loads(vec![1, 0], MembershipMode::CountsOnly);
        let mut folder = MemoryFolder::from_state(start);
        assert!(folder.absorb(&atomic(0, 1, 1, Some(0), Some(1))).is_none());
        assert!(folder.truncated());
        assert_eq!(folder.pending_balls(), 1);
        let folded = folder
            .absorb(&atomic(1, 0, 0, Some(1), Some(1)))
            .expect("second step completes the round");
        assert_eq!(folded.outcome.chosen, 1);
        assert_eq!(folded.outcome.balls_placed, 2);
        assert_eq!(folded.outcome.deltas.as_slice(), &[(0, 1), (1, 1)]);
        assert_eq!(folded.outcome.cache_before, Some(0));
        assert_eq!(folded.start_step, 0);
        // The round-start state is still visible before commit.
        assert_eq!(folder.state().loads(), &[1, 0]);
        folder.commit(&folded);
        assert_eq!(folder.state().loads(), &[2, 1]);
        assert_eq!(folder.state().rounds(), 1);
        assert!(!folder.truncated());
    }

    #[test]
    fn overloaded_boundary_step_is_a_single_step_round() {
        // Loads (1,1): every bin is overloaded (n·x = 2 ≥ W = 2), so the
        // boundary step alone forms the round.
        let start = LoadState::from_loads(vec![1, 1], MembershipMode::CountsOnly);
        let mut folder = MemoryFolder::from_state(start);
        let folded = folder.absorb(&atomic(0, 0, 0, Some(1), Some(1))).expect("single step");
        assert_eq!(folded.outcome.balls_placed, 1);
        assert_eq!(folded.outcome.deltas.as_slice(), &[(0, 1)]);
        folder.commit(&folded);
        assert_eq!(folder.state().loads(), &[2, 1]);
    }

    #[test]
    fn fold_preserves_totals_and_matches_atomic_states_at_boundaries() {
        let n = 16usize;
        let (outcomes, atomic_final) = memory_trace(n, 4000, 21);
        let report = fold_memory_trace(n, &outcomes);
        // Folded balls + truncated tail account for every atomic step.
        let folded_balls: u64 = report.rounds.iter().map(|r| r.outcome.balls_placed).sum();
        assert_eq!(report.atomic_steps, 4000);
        assert!(folded_balls <= 4000);
        assert_eq!(report.truncated, folded_balls < 4000);
        // Replaying the folded rounds reproduces the folder's final state.
        let mut replay = LoadState::new(n, MembershipMode::CountsOnly);
        for folded in &report.rounds {
            apply(&mut replay, &folded.outcome);
        }
        assert_eq!(replay.loads(), report.final_state.loads());
        assert_eq!(replay.total(), folded_balls);
        // At every folded-round boundary the folded state equals the atomic
        // state after the same number of balls.
        let mut atomic_state = LoadState::new(n, MembershipMode::CountsOnly);
        let mut replay2 = LoadState::new(n, MembershipMode::CountsOnly);
        let mut step = 0usize;
        for folded in &report.rounds {
            assert_eq!(folded.start_step, step as u64);
            for atomic_outcome in &outcomes[step..step + folded.outcome.balls_placed as usize] {
                apply(&mut atomic_state, atomic_outcome);
            }
            step += folded.outcome.balls_placed as usize;
            apply(&mut replay2, &folded.outcome);
            assert_eq!(replay2.loads(), atomic_state.loads());
        }
        if !report.truncated {
            assert_eq!(report.final_state.loads(), atomic_final.loads());
        }
        // Folded round indices are sequential.
        for (idx, folded) in report.rounds.iter().enumerate() {
            assert_eq!(folded.outcome.round, idx as u64);
        }
    }

    #[test]
    fn every_folded_round_places_one_or_deficit_plus_one_balls() {
        let n = 10usize;
        let (outcomes, _) = memory_trace(n, 3000, 3);
        let mut folder = MemoryFolder::new(n);
        for outcome in &outcomes {
            if let Some(folded) = folder.absorb(outcome) {
                let state = folder.state();
                let chosen = folded.outcome.chosen;
                let expected = if state.is_overloaded(chosen) {
                    1
                } else {
                    state.deficit(chosen) + 1
                };
                assert_eq!(folded.outcome.balls_placed, expected);
                folder.commit(&folded);
            }
        }
    }

    #[test]
    fn folded_memory_rounds_pass_both_conditions() {
        for (n, steps) in [(2usize, 3000u64), (3, 3000), (10, 4000), (50, 8000)] {
            let config = ProcessConfig { bins: n, kind: ProcessKind::Memory };
            let mut auditor = FoldAuditor::new(n, VerifyMode::Audit);
            simulate_with(&config, steps, &mut rng_for_rep(n as u64, 2), &mut auditor).unwrap();
            let (report, _) = auditor.into_report();
            assert!(report.passed(), "n={n}: {:?}", report.first_violation);
            assert!(report.rounds_checked > 0);
        }
    }

    #[test]
    fn truncated_tail_is_flagged_and_excluded() {
        let start = LoadState::from_loads(vec![2, 0, 0, 0], MembershipMode::CountsOnly);
        let mut folder = MemoryFolder::from_state(start);
        // Boundary commits to bin 1: deficit 1, needs two steps; feed one.
        assert!(folder.absorb(&atomic(0, 1, 1, Some(0), Some(1))).is_none());
        assert!(folder.truncated());
        assert_eq!(folder.pending_balls(), 1);
        assert_eq!(folder.state().loads(), &[2, 0, 0, 0]);
    }

    #[test]
    fn raw_atomic_memory_trace_fails_the_allocation_audit() {
        use crate::conditions::audit_trace;
        let n = 8usize;
        let (outcomes, _) = memory_trace(n, 500, 9);
        let raw = audit_trace(&ProcessKind::Memory, n, &outcomes, VerifyMode::Audit);
        assert!(raw.w_violations > 0);
        assert_eq!(raw.p_violations, 0);
        // The folded view of the same trace is clean.
        let report = fold_memory_trace(n, &outcomes);
        let mut replay = MemoryFolder::new(n);
        let mut verifier = Verifier::new(ProcessKind::Memory, n, VerifyMode::Audit);
        for outcome in &outcomes {
            if let Some(folded) = replay.absorb(outcome) {
                assert!(verifier.record(replay.state(), &folded.outcome).is_continue());
                replay.commit(&folded);
            }
        }
        assert!(verifier.report().passed());
        assert_eq!(verifier.report().rounds_checked, report.rounds.len() as u64);
    }

    #[test]
    fn folded_total_growth_stays_below_twice_the_round_count() {
        // W after t folded rounds is at most 2t−1 while t ≤ n/2.
        let n = 100usize;
        let (outcomes, _) = memory_trace(n, 400, 17);
        let report = fold_memory_trace(n, &outcomes);
        let mut w = 0u64;
        for folded in &report.rounds {
            w += folded.outcome.balls_placed;
            let t = folded.outcome.round + 1;
            if t <= (n / 2) as u64 {
                assert!(w < 2 * t, "W={w} after t={t} folded rounds exceeds 2t-1");
            }
        }
    }

    #[test]
    fn bad_allocation_count_brackets() {
        let n = 12usize;
        let (outcomes, _) = memory_trace(n, 2000, 5);
        let zero = Rational::new(0, 1);
        assert_eq!(bad_allocation_count(n, &outcomes, &zero), 2000);
        // One above the worst gap ever reached → zero.
        let mut state = LoadState::new(n, MembershipMode::CountsOnly);
        let mut worst = Rational::new(0, 1);
        for outcome in &outcomes {
            apply(&mut state, outcome);
            worst = worst.max(state.gap());
        }
        let above = worst + Rational::new(1, 1);
        assert_eq!(bad_allocation_count(n, &outcomes, &above), 0);
        // Exactly the worst gap → at least one.
        assert!(bad_allocation_count(n, &outcomes, &worst) >= 1);
    }
}
