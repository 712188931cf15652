//! Trace recording: newline-delimited JSON with a header line followed by
//! one record per round.
//!
//! A trace captures everything needed to replay, audit, or fold a run
//! offline: the header pins the process configuration, bin count, seed,
//! repetition stream, and RNG construction; each record is one round's
//! outcome. Bin indices are 0-based throughout. Writing is streaming, so
//! arbitrarily long runs can be traced without holding them in memory.

use crate::model::BinId;
use crate::processes::{ProcessConfig, RoundOutcome, RunObserver};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::io::{self, BufRead, Write};
use std::ops::ControlFlow;

/// Bumped when the trace schema changes incompatibly.
pub const TRACE_FORMAT_VERSION: u32 = 1;

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub tool_version: String,
    /// RNG construction identifier (see [`crate::rng::RNG_ID`]).
    pub rng: String,
    pub config: ProcessConfig,
    /// Rounds the run was asked for (the record count can be smaller if
    /// the run stopped early).
    pub rounds: u64,
    pub seed: u64,
    pub rep: u64,
}

impl TraceHeader {
    pub fn new(config: &ProcessConfig, rounds: u64, seed: u64, rep: u64) -> Self {
        TraceHeader {
            format_version: TRACE_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: crate::rng::RNG_ID.to_string(),
            config: *config,
            rounds,
            seed,
            rep,
        }
    }
}

/// One round of a trace; a serialization-stable mirror of [`RoundOutcome`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    pub sampled: Vec<BinId>,
    pub chosen: BinId,
    pub deltas: Vec<(BinId, u64)>,
    pub balls: u64,
    pub samples: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cache_before: Option<BinId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cache_after: Option<BinId>,
}

impl From<&RoundOutcome> for TraceRecord {
    fn from(outcome: &RoundOutcome) -> Self {
        TraceRecord {
            round: outcome.round,
            sampled: outcome.sampled.to_vec(),
            chosen: outcome.chosen,
            deltas: outcome.deltas.to_vec(),
            balls: outcome.balls_placed,
            samples: outcome.samples_used,
            cache_before: outcome.cache_before,
            cache_after: outcome.cache_after,
        }
    }
}

impl TraceRecord {
    pub fn to_outcome(&self) -> RoundOutcome {
        RoundOutcome {
            round: self.round,
            sampled: SmallVec::from_slice(&self.sampled),
            chosen: self.chosen,
            deltas: SmallVec::from_slice(&self.deltas),
            balls_placed: self.balls,
            samples_used: self.samples,
            cache_before: self.cache_before,
            cache_after: self.cache_after,
        }
    }
}

/// Streaming trace writer: header on construction, one JSON line per
/// round.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> io::Result<Self> {
        let line = serde_json::to_string(header).map_err(invalid_data)?;
        writeln!(out, "{line}")?;
        Ok(TraceWriter { out })
    }

    pub fn record(&mut self, outcome: &RoundOutcome) -> io::Result<()> {
        let line = serde_json::to_string(&TraceRecord::from(outcome)).map_err(invalid_data)?;
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn invalid_data(err: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, err)
}

/// Observer that streams every round into a [`TraceWriter`]. An I/O error
/// stops the run; check [`finish`](Self::finish).
pub struct TraceRecorder<W: Write> {
    writer: TraceWriter<W>,
    error: Option<io::Error>,
}

impl<W: Write> TraceRecorder<W> {
    pub fn new(writer: TraceWriter<W>) -> Self {
        TraceRecorder { writer, error: None }
    }

    /// Surface any deferred write error and hand back the underlying
    /// writer.
    pub fn finish(self) -> io::Result<W> {
        match self.error {
            Some(err) => Err(err),
            None => self.writer.finish(),
        }
    }
}

impl<W: Write> RunObserver for TraceRecorder<W> {
    fn on_round(&mut self, _: &crate::model::LoadState, outcome: &RoundOutcome) -> ControlFlow<()> {
        match self.writer.record(outcome) {
            Ok(()) => ControlFlow::Continue(()),
            Err(err) => {
                self.error = Some(err);
                ControlFlow::Break(())
            }
        }
    }
}

/// Streaming trace reader: yields records after the header.
pub struct TraceReader<R: BufRead> {
    lines: io::Lines<R>,
}

impl<R: BufRead> TraceReader<R> {
    /// Read the header line and return the reader positioned at the first
    /// record.
    pub fn open(reader: R) -> io::Result<(TraceHeader, Self)> {
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "empty trace"))??;
        let header: TraceHeader = serde_json::from_str(&first).map_err(invalid_data)?;
        Ok((header, TraceReader { lines }))
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = io::Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.lines.next()? {
                Err(err) => return Some(Err(err)),
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => {
                    return Some(serde_json::from_str(&line).map_err(invalid_data));
                }
            }
        }
    }
}

/// Read a whole trace into memory.
pub fn read_trace<R: BufRead>(reader: R) -> io::Result<(TraceHeader, Vec<TraceRecord>)> {
    let (header, records) = TraceReader::open(reader)?;
    let records: io::Result<Vec<TraceRecord>> = records.collect();
    Ok((header, records?))
}
