//! Output plumbing shared by the data-emitting subcommands: sink
//! selection, manifest timestamps, and the sectioned CSV layout.
//!
//! Every output file embeds its run manifest. JSON documents carry it as a
//! `manifest` field; CSV files open with a two-field record
//! `manifest,<json>` followed by `section,<name>` marker records, each
//! section bringing its own header row. Quoting and escaping follow RFC
//! 4180 (the csv crate handles both); field counts vary across records by
//! design. Timestamps live only in the manifest, so the data sections of
//! two runs with the same configuration and seed are byte-identical.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

/// Open the chosen output: a file if `path` is given, stdout otherwise.
pub fn open_sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Milliseconds since the Unix epoch, for manifest timestamps.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Sectioned CSV writer (see the module docs for the layout).
pub struct CsvOut<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvOut<W> {
    /// Start a CSV document whose first record embeds the manifest.
    pub fn new<M: Serialize>(sink: W, manifest: &M) -> Result<Self, CliError> {
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(sink);
        writer.write_record(["manifest", &serde_json::to_string(manifest)?])?;
        Ok(CsvOut { writer })
    }

    /// Begin a named section; the caller writes its header row next.
    pub fn section(&mut self, name: &str) -> Result<(), CliError> {
        self.writer.write_record(["section", name])?;
        Ok(())
    }

    /// Write one record from anything stringly iterable.
    pub fn row<I, T>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        self.writer.write_record(fields.into_iter().map(|f| f.as_ref().to_string()))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Write a JSON document (single object, trailing newline).
pub fn write_json<T: Serialize>(mut sink: Box<dyn Write>, doc: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut sink, doc)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}
