use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use stereospace_kit::Error;

use crate::args::Format;

#[derive(Debug)]
pub enum CliError {
    Kit(Error),
    Scene(String, Error),
    Json(serde_json::Error),
    Csv(csv::Error),
    Io(io::Error),
    Input(String),
    SelftestFailed(usize),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Kit(e) | CliError::Scene(_, e) => e.kind(),
            CliError::Json(_) => "Json",
            CliError::Csv(_) => "Csv",
            CliError::Io(_) => "Io",
            CliError::Input(_) => "Input",
            CliError::SelftestFailed(_) => "SelftestFailed",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Kit(e) => e.to_string(),
            CliError::Scene(id, e) => format!("scene {id}: {e}"),
            CliError::Json(e) => e.to_string(),
            CliError::Csv(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
            CliError::Input(m) => m.clone(),
            CliError::SelftestFailed(n) => format!("{n} selftest check(s) failed"),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.message() }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Kit(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Json(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Streams flat records as JSON lines or CSV rows.
#[allow(clippy::large_enum_variant)]
pub enum RecordWriter<W: Write> {
    Json(W),
    Csv(csv::Writer<W>),
}

impl<W: Write> RecordWriter<W> {
    pub fn new(inner: W, format: Format) -> Self {
        match format {
            Format::Json => RecordWriter::Json(inner),
            Format::Csv => RecordWriter::Csv(csv::Writer::from_writer(inner)),
        }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> CliResult<()> {
        match self {
            RecordWriter::Json(w) => {
                serde_json::to_writer(&mut *w, record)?;
                w.write_all(b"\n")?;
            }
            RecordWriter::Csv(w) => w.serialize(record)?,
        }
        Ok(())
    }

    pub fn finish(self) -> CliResult<()> {
        match self {
            RecordWriter::Json(mut w) => w.flush()?,
            RecordWriter::Csv(mut w) => w.flush()?,
        }
        Ok(())
    }
}

pub fn stdout_records(format: Format) -> RecordWriter<BufWriter<io::Stdout>> {
    RecordWriter::new(BufWriter::new(io::stdout()), format)
}

pub fn file_records(path: &Path, format: Format) -> CliResult<RecordWriter<BufWriter<File>>> {
    Ok(RecordWriter::new(BufWriter::new(File::create(path)?), format))
}

/// Print one JSON object as a line on stdout.
pub fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
