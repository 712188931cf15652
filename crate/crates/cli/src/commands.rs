//! One function per subcommand. Each returns the process exit code on
//! success (verification subcommands use it for their verdict) and
//! `CliError` for configuration or I/O failures, which `main` prints and
//! maps to exit code 2.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};

use serde::Serialize;

use ballsim::{
    expected_phi_ratio_one_step, gap_distribution_experiment, good_event, good_event_density,
    histogram_mode, min_window_good_count, overload_counterexample_state, rng_for_rep,
    sample_efficiency_series, simulate_with, snapshot, ConditionReport, FoldAuditor, GapSample,
    LoadState, MemoryFolder, PhiThreshold, PotentialSnapshot, ProcessKind, Rational, RunManifest,
    RunObserver, SeriesPoint, TraceHeader, TraceReader, TraceRecorder, TraceWriter, Verifier,
    VerifyMode,
};

use crate::output::{now_ms, open_sink, write_json, CsvOut};
use crate::{
    CliError, CounterexampleArgs, EfficiencyArgs, Format, FoldMemoryArgs, GapArgs, PotentialArgs,
    TraceArgs, VerifyArgs,
};

// ---------------------------------------------------------------------------
// gap
// ---------------------------------------------------------------------------

/// Cross-repetition summary of the final gaps (integer stats over the
/// ceiling histogram, exact mean over the rational gaps).
#[derive(Serialize)]
struct GapSummary {
    reps: u32,
    mean_gap: f64,
    mean_gap_num: i128,
    mean_gap_den: i128,
    mode_gap_ceil: Option<u64>,
    min_gap_ceil: Option<u64>,
    max_gap_ceil: Option<u64>,
}

impl GapSummary {
    fn compute(per_rep: &[GapSample], histogram: &BTreeMap<u64, u32>) -> Self {
        let mut total = Rational::new(0, 1);
        for sample in per_rep {
            total += sample.gap();
        }
        let mean = if per_rep.is_empty() {
            total
        } else {
            total / Rational::new(per_rep.len() as i128, 1)
        };
        GapSummary {
            reps: per_rep.len() as u32,
            mean_gap: *mean.numer() as f64 / *mean.denom() as f64,
            mean_gap_num: *mean.numer(),
            mean_gap_den: *mean.denom(),
            mode_gap_ceil: histogram_mode(histogram),
            min_gap_ceil: histogram.keys().next().copied(),
            max_gap_ceil: histogram.keys().next_back().copied(),
        }
    }
}

#[derive(Serialize)]
struct GapDoc {
    manifest: RunManifest,
    summary: GapSummary,
    histogram: BTreeMap<u64, u32>,
    per_rep: Vec<GapSample>,
}

pub fn gap(args: &GapArgs) -> Result<u8, CliError> {
    let config = args.process.to_config()?;
    let rounds = args.horizon.rounds(config.bins)?;
    let started = now_ms();
    let mut experiment = gap_distribution_experiment(&config, rounds, args.reps, args.seed)?;
    experiment.manifest.started_unix_ms = Some(started);
    experiment.manifest.finished_unix_ms = Some(now_ms());
    let summary = GapSummary::compute(&experiment.per_rep, &experiment.histogram);
    let sink = open_sink(args.output.out.as_deref())?;
    match args.output.format {
        Format::Json => {
            let doc = GapDoc {
                manifest: experiment.manifest,
                summary,
                histogram: experiment.histogram,
                per_rep: experiment.per_rep,
            };
            write_json(sink, &doc)?;
        }
        Format::Csv => {
            let mut csv = CsvOut::new(sink, &experiment.manifest)?;
            csv.section("summary")?;
            csv.row([
                "reps",
                "mean_gap",
                "mean_gap_num",
                "mean_gap_den",
                "mode_gap_ceil",
                "min_gap_ceil",
                "max_gap_ceil",
            ])?;
            csv.row([
                summary.reps.to_string(),
                summary.mean_gap.to_string(),
                summary.mean_gap_num.to_string(),
                summary.mean_gap_den.to_string(),
                opt(summary.mode_gap_ceil),
                opt(summary.min_gap_ceil),
                opt(summary.max_gap_ceil),
            ])?;
            csv.section("histogram")?;
            csv.row(["gap_ceil", "count"])?;
            for (gap_ceil, count) in &experiment.histogram {
                csv.row([gap_ceil.to_string(), count.to_string()])?;
            }
            csv.section("per_rep")?;
            csv.row(["rep", "w", "samples", "gap", "gap_num", "gap_den", "gap_ceil"])?;
            for sample in &experiment.per_rep {
                csv.row([
                    sample.rep.to_string(),
                    sample.w.to_string(),
                    sample.samples.to_string(),
                    sample.gap_f64().to_string(),
                    sample.gap_num.to_string(),
                    sample.gap_den.to_string(),
                    sample.gap_ceil.to_string(),
                ])?;
            }
            csv.finish()?;
        }
    }
    Ok(0)
}

fn opt<T: ToString>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// efficiency
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SeriesDoc {
    manifest: RunManifest,
    points: Vec<SeriesPoint>,
}

pub fn efficiency(args: &EfficiencyArgs) -> Result<u8, CliError> {
    let config = args.process.to_config()?;
    let rounds = args.horizon.rounds(config.bins)?;
    let stride = args.stride.unwrap_or_else(|| (rounds / 100).max(1));
    if stride == 0 {
        return Err(CliError::config("--stride must be at least 1"));
    }
    let started = now_ms();
    let points = sample_efficiency_series(&config, rounds, stride, args.seed, args.rep)?;
    let mut manifest = RunManifest::new(&config, rounds, 1, args.seed);
    manifest.rep = Some(args.rep);
    manifest.stride = Some(stride);
    manifest.started_unix_ms = Some(started);
    manifest.finished_unix_ms = Some(now_ms());
    let sink = open_sink(args.output.out.as_deref())?;
    match args.output.format {
        Format::Json => write_json(sink, &SeriesDoc { manifest, points })?,
        Format::Csv => {
            let mut csv = CsvOut::new(sink, &manifest)?;
            csv.section("series")?;
            csv.row(["round", "t_over_n", "w", "samples", "throughput", "efficiency"])?;
            for point in &points {
                csv.row([
                    point.round.to_string(),
                    (point.round as f64 / config.bins as f64).to_string(),
                    point.w.to_string(),
                    point.samples.to_string(),
                    (point.w as f64 / point.round as f64).to_string(),
                    (point.w as f64 / point.samples as f64).to_string(),
                ])?;
            }
            csv.finish()?;
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let config = args.process.to_config()?;
    let rounds = args.horizon.rounds(config.bins)?;
    let mode: VerifyMode = args.mode.into();
    let mut rng = rng_for_rep(args.seed, args.rep);
    println!("config: {}", serde_json::to_string(&config)?);
    println!("rounds requested: {rounds}");
    println!("mode: {}", if mode == VerifyMode::Strict { "strict" } else { "audit" });

    let report;
    if config.kind == ProcessKind::Memory {
        // Atomic memory steps fold into multi-ball filling rounds on the
        // fly; each completed round is checked at its round-start state.
        let mut auditor = FoldAuditor::new(config.bins, mode);
        let state = simulate_with(&config, rounds, &mut rng, &mut auditor)?;
        let (folded_report, truncated) = auditor.into_report();
        report = folded_report;
        println!("atomic steps run: {}", state.rounds());
        println!("folded rounds checked: {}", report.rounds_checked);
        println!("truncated tail: {}", if truncated { "yes" } else { "no" });
    } else {
        let mut verifier = Verifier::new(config.kind, config.bins, mode);
        let state = simulate_with(&config, rounds, &mut rng, &mut verifier)?;
        report = verifier.into_report();
        if state.rounds() < rounds {
            println!("stopped after {} rounds at the first violation", state.rounds());
        }
        println!("rounds checked: {}", report.rounds_checked);
    }
    print_report(&report)?;
    if mode == VerifyMode::Strict && !report.passed() {
        return Ok(1);
    }
    Ok(0)
}

fn print_report(report: &ConditionReport) -> Result<(), CliError> {
    println!("sampling violations: {}", report.p_violations);
    println!("allocation violations: {}", report.w_violations);
    if let Some(violation) = &report.first_violation {
        println!("first violation: {}", serde_json::to_string(violation)?);
    }
    println!("result: {}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}

// ---------------------------------------------------------------------------
// counterexample
// ---------------------------------------------------------------------------

pub fn counterexample(args: &CounterexampleArgs) -> Result<u8, CliError> {
    if !args.alpha.is_finite() || args.alpha <= 0.0 {
        return Err(CliError::config("alpha must be positive and finite"));
    }
    let n = args.bins;
    let root = (n as f64).sqrt().round() as usize;
    if n < 4 || root * root != n {
        return Err(CliError::config("bins must be a perfect square, at least 4"));
    }
    let state = overload_counterexample_state(n);
    let ratio = expected_phi_ratio_one_step(&state, args.alpha, PhiThreshold::NonNegative);
    let bound = 1.0 + 0.1 * args.alpha * args.alpha / n as f64;
    println!("bins: {n}");
    println!("alpha: {}", args.alpha);
    println!("configuration: one bin {root} above the average, {root} bins one below, rest at it");
    println!("one-step expected potential ratio: {ratio}");
    println!("required bound (1 + 0.1*alpha^2/n): {bound}");
    let pass = ratio >= bound;
    println!("verdict: {}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// potential
// ---------------------------------------------------------------------------

/// Observer grabbing potential snapshots on a stride and the good-event
/// bit of every state.
struct PotentialProbe {
    alpha: f64,
    stride: u64,
    rounds: u64,
    snapshots: Vec<PotentialSnapshot>,
    goods: Vec<bool>,
}

impl RunObserver for PotentialProbe {
    fn on_state(&mut self, state: &LoadState) {
        let t = state.rounds();
        self.goods.push(good_event(state));
        if t.is_multiple_of(self.stride) || t == self.rounds {
            self.snapshots.push(snapshot(state, self.alpha));
        }
    }
}

#[derive(Serialize)]
struct WindowRow {
    t0: u64,
    good_count: u64,
}

#[derive(Serialize)]
struct PotentialDoc {
    manifest: RunManifest,
    /// Window length of the good-event counts (rounds per closed window).
    window: u64,
    snapshots: Vec<PotentialSnapshot>,
    /// Good-state counts of the windows starting at stride multiples.
    windows: Vec<WindowRow>,
    /// Minimum good-state count over every window of the run.
    min_window_good_count: Option<u64>,
    /// The bin-count-over-40 reference the minimum is compared against.
    window_good_bound: f64,
    meets_window_bound: Option<bool>,
}

pub fn potential(args: &PotentialArgs) -> Result<u8, CliError> {
    if !args.alpha.is_finite() || args.alpha <= 0.0 {
        return Err(CliError::config("alpha must be positive and finite"));
    }
    let config = args.process.to_config()?;
    let rounds = args.horizon.rounds(config.bins)?;
    let stride = args.stride.unwrap_or_else(|| (rounds / 100).max(1));
    if stride == 0 {
        return Err(CliError::config("--stride must be at least 1"));
    }
    let window = args.window.unwrap_or(config.bins as u64);
    if window == 0 {
        return Err(CliError::config("--window must be at least 1"));
    }
    let started = now_ms();
    let mut probe = PotentialProbe {
        alpha: args.alpha,
        stride,
        rounds,
        snapshots: Vec::new(),
        goods: Vec::new(),
    };
    simulate_with(&config, rounds, &mut rng_for_rep(args.seed, args.rep), &mut probe)?;
    let mut manifest = RunManifest::new(&config, rounds, 1, args.seed);
    manifest.rep = Some(args.rep);
    manifest.alpha = Some(args.alpha);
    manifest.stride = Some(stride);
    manifest.started_unix_ms = Some(started);
    manifest.finished_unix_ms = Some(now_ms());

    let mut windows = Vec::new();
    if window <= rounds {
        let mut t0 = 0u64;
        while t0 + window <= rounds {
            let count = good_event_density(&probe.goods, t0 as usize, window as usize) as u64;
            windows.push(WindowRow { t0, good_count: count });
            t0 += stride;
        }
    }
    let min_count = min_window_good_count(&probe.goods, window as usize).map(|c| c as u64);
    let bound = config.bins as f64 / 40.0;
    let meets = min_count.map(|c| c * 40 >= config.bins as u64);

    let sink = open_sink(args.output.out.as_deref())?;
    match args.output.format {
        Format::Json => write_json(
            sink,
            &PotentialDoc {
                manifest,
                window,
                snapshots: probe.snapshots,
                windows,
                min_window_good_count: min_count,
                window_good_bound: bound,
                meets_window_bound: meets,
            },
        )?,
        Format::Csv => {
            let mut csv = CsvOut::new(sink, &manifest)?;
            csv.section("snapshots")?;
            csv.row([
                "round",
                "gap",
                "gap_num",
                "gap_den",
                "delta",
                "delta_num",
                "delta_den",
                "log_phi",
                "underloaded",
                "good_event",
            ])?;
            for snap in &probe.snapshots {
                csv.row([
                    snap.round.to_string(),
                    (snap.gap_num as f64 / snap.gap_den as f64).to_string(),
                    snap.gap_num.to_string(),
                    snap.gap_den.to_string(),
                    (snap.delta_num as f64 / snap.delta_den as f64).to_string(),
                    snap.delta_num.to_string(),
                    snap.delta_den.to_string(),
                    snap.log_phi.to_string(),
                    snap.underloaded_count.to_string(),
                    snap.good_event.to_string(),
                ])?;
            }
            csv.section("windows")?;
            csv.row(["t0", "good_count"])?;
            for row in &windows {
                csv.row([row.t0.to_string(), row.good_count.to_string()])?;
            }
            csv.section("window_summary")?;
            csv.row(["window", "min_good_count", "good_bound", "meets_bound"])?;
            csv.row([
                window.to_string(),
                opt(min_count),
                bound.to_string(),
                opt(meets),
            ])?;
            csv.finish()?;
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// fold-memory
// ---------------------------------------------------------------------------

pub fn fold_memory(args: &FoldMemoryArgs) -> Result<u8, CliError> {
    let file = File::open(&args.input)
        .map_err(|err| CliError::config(format!("{}: {err}", args.input.display())))?;
    let (header, reader) = TraceReader::open(BufReader::new(file))?;
    if header.config.kind != ProcessKind::Memory {
        return Err(CliError::config(format!(
            "fold-memory needs an atomic memory trace, got {}",
            serde_json::to_string(&header.config)?
        )));
    }
    let n = header.config.bins;
    let sink = open_sink(args.out.as_deref())?;
    let mut writer = TraceWriter::new(sink, &header)?;
    let mut folder = MemoryFolder::new(n);
    let mut verifier = Verifier::new(ProcessKind::Memory, n, VerifyMode::Audit);
    let mut atomic = 0u64;
    let mut folded_rounds = 0u64;
    for record in reader {
        let record = record?;
        let outcome = record.to_outcome();
        if outcome.balls_placed != 1 || outcome.deltas.len() != 1 {
            return Err(CliError::config(format!(
                "record {} is not an atomic one-ball step; fold-memory reads raw memory traces",
                outcome.round
            )));
        }
        atomic += 1;
        if let Some(folded) = folder.absorb(&outcome) {
            // Audit mode never asks to stop, so the flow result is moot.
            let _ = verifier.record(folder.state(), &folded.outcome);
            writer.record(&folded.outcome)?;
            folded_rounds += 1;
            folder.commit(&folded);
        }
    }
    let mut sink = writer.finish()?;
    sink.flush()?;
    let report = verifier.into_report();
    // The audit summary goes to stderr so the folded trace can stream to
    // stdout untouched.
    eprintln!("atomic steps read: {atomic}");
    eprintln!("folded rounds written: {folded_rounds}");
    eprintln!("truncated tail: {}", if folder.truncated() { "yes" } else { "no" });
    eprintln!("sampling violations: {}", report.p_violations);
    eprintln!("allocation violations: {}", report.w_violations);
    if let Some(violation) = &report.first_violation {
        eprintln!("first violation: {}", serde_json::to_string(violation)?);
    }
    eprintln!("result: {}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(0)
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

pub fn trace(args: &TraceArgs) -> Result<u8, CliError> {
    let config = args.process.to_config()?;
    let rounds = args.horizon.rounds(config.bins)?;
    let header = TraceHeader::new(&config, rounds, args.seed, args.rep);
    let sink = open_sink(args.out.as_deref())?;
    let writer = TraceWriter::new(sink, &header)?;
    let mut recorder = TraceRecorder::new(writer);
    simulate_with(&config, rounds, &mut rng_for_rep(args.seed, args.rep), &mut recorder)?;
    let mut sink = recorder.finish()?;
    sink.flush()?;
    Ok(0)
}
