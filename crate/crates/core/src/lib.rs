//! Simulation and verification library for balanced-allocation processes
//! that place balls into bins in rounds, centered on *filling* processes:
//! allocation rules that pour several balls into underloaded bins at once
//! while obeying two structural conditions — majorized (never
//! heavy-biased) sampling and the filling allocation discipline.
//!
//! Modules:
//!
//! * [`model`] — load states with exact integer/rational observables
//!   (gap, deficits, overload tests) and per-class bookkeeping;
//! * [`processes`] — the allocation processes (single- and multi-choice
//!   baselines, packing variants, the cached-bin memory process, biased
//!   sampling) behind one seeded, observable run loop;
//! * [`conditions`] — runtime verifiers for the two framework conditions,
//!   with exact per-class fast paths and effective selection vectors;
//! * [`potentials`] — imbalance potentials (absolute-deviation and
//!   log-domain exponential) and the good-event predicate;
//! * [`unfolding`] — folding one-ball memory traces into multi-ball
//!   filling rounds, plus streaming fold-and-verify;
//! * [`trace`] — newline-delimited JSON trace recording and replay;
//! * [`analysis`] — exact one-step expectation oracles and parallel,
//!   deterministically seeded experiment drivers;
//! * [`rng`] — the pinned RNG construction (one stream per repetition).
//!
//! Exactness policy: every quantity that can be integer or rational is
//! computed that way (`u128` cross-multiplication for overload tests,
//! `Ratio<i128>` for gaps and potentials); floating point only enters for
//! exponentials and explicitly approximate vectors, and the exponential
//! potential lives in the log domain so huge exponents never overflow.
//! Runs are reproducible: one RNG stream per repetition, so multi-threaded
//! experiments give byte-identical results for a given seed.

pub mod analysis;
pub mod conditions;
pub mod model;
pub mod potentials;
pub mod processes;
pub mod rng;
pub mod trace;
pub mod unfolding;

pub use analysis::{
    checkpoint_experiment, delta_boundedness_experiment, expected_balls_one_step,
    expected_balls_one_step_exact, expected_phi_ratio_one_step, gap_distribution_experiment,
    geometric_checkpoints, histogram_mode, least_squares_slope, lower_bound_experiment,
    median_rational, overload_counterexample_state, run_with_checkpoints,
    sample_efficiency_series, throughput_series, BoundednessResult, BoundednessSummary,
    CheckpointStats, GapExperiment, GapSample, LowerBoundResult, PhiThreshold, RunManifest,
    SeriesPoint, SeriesTracker,
};
pub use conditions::{
    audit_trace, check_condition_p, check_condition_p_for_state, check_condition_w,
    check_prefix_units, d_choice_vector, effective_vector, effective_vector_memory,
    memory_bin_masses, memory_mass_runs, quantile_vector, uniform_mass_runs,
    validate_bias_vector, Condition, ConditionReport, MassRun, ProbabilityVector, Verifier,
    VerifyMode, Violation, ViolationKind, MEMORY_ENUM_STRIDE, P_TOLERANCE,
};
pub use model::{gap, normalized_load, sorted_ranks, BinId, LoadState, MembershipMode, Rational};
pub use potentials::{
    compute_delta, compute_log_phi, good_event, good_event_density, min_window_good_count,
    snapshot, underloaded_count, GoodEventTracker, PotentialSnapshot,
};
pub use processes::{
    apply, make_process, simulate, simulate_with, AllocationProcess, BiasKind, ConfigError,
    NoObserver, ProcessConfig, ProcessKind, RoundOutcome, RunObserver,
};
pub use rng::{rng_for_rep, SimRng, RNG_ID};
pub use trace::{
    read_trace, TraceHeader, TraceReader, TraceRecord, TraceRecorder, TraceWriter,
    TRACE_FORMAT_VERSION,
};
pub use unfolding::{
    bad_allocation_count, fold_memory_trace, FoldAuditor, FoldReport, FoldedRound, MemoryFolder,
};
