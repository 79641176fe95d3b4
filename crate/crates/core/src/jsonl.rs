//! JSON Lines helpers shared by the feed, ledger, and event-log formats.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Serializes `record` as one compact JSON line (with trailing newline).
pub fn to_line<T: Serialize>(record: &T) -> Result<String, serde_json::Error> {
    let mut s = serde_json::to_string(record)?;
    s.push('\n');
    Ok(s)
}

/// Reads every non-empty line of `path`, reporting the 1-based line number on
/// the first record that fails to parse.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let reader = BufReader::new(File::open(path)?);
    parse_lines(reader)
}

pub fn parse_lines<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| JsonlError::Corrupt {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes all records to `path`, replacing any existing content.
pub fn write_all<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        w.write_all(to_line(r)?.as_bytes())?;
    }
    let file = w.into_inner().map_err(|e| e.into_error())?;
    file.sync_all()?;
    Ok(())
}

/// Append-only JSON Lines writer. Records are buffered; `sync` flushes and
/// fsyncs.
pub struct Appender {
    writer: BufWriter<File>,
}

impl Appender {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: BufWriter::new(file),
        })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        self.writer.write_all(to_line(record)?.as_bytes())?;
        Ok(())
    }

    pub fn append_raw(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_all()
    }
}
