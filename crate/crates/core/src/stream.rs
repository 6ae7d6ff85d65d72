//! Single-pass parsers for the line-delimited input streams.
//!
//! Each parser reads one line at a time into a reused buffer, yields the
//! records that parse, and keeps a list of the lines it had to skip. Only
//! I/O failures end a stream early.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Read};
use std::marker::PhantomData;

use serde::Deserialize;

use crate::biblio::PubRecord;
use crate::engine::{CellId, Transaction};
use crate::feedback::{ScoredDoc, Session};

/// A skipped input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Records that can be decoded from one line of text.
pub trait FromLine: Sized {
    fn from_line(line: &str) -> Result<Self, String>;
}

#[derive(Deserialize)]
struct RawTransaction {
    id: String,
    items: Vec<String>,
    #[serde(default)]
    ts: Option<u64>,
}

impl FromLine for Transaction {
    fn from_line(line: &str) -> Result<Self, String> {
        let raw: RawTransaction = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let items = raw
            .items
            .into_iter()
            .map(CellId::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Transaction::new(raw.id, items, raw.ts).map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct RawSession {
    q: String,
    results: Vec<ScoredDoc>,
    #[serde(default)]
    clicks: Vec<String>,
    #[serde(default)]
    dwell: BTreeMap<String, f64>,
}

impl FromLine for Session {
    fn from_line(line: &str) -> Result<Self, String> {
        let raw: RawSession = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Session::new(raw.q, raw.results, raw.clicks, raw.dwell).map_err(|e| e.to_string())
    }
}

impl FromLine for ScoredDoc {
    fn from_line(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    authors: Vec<String>,
    year: i64,
    #[serde(default)]
    title: Option<String>,
}

impl FromLine for PubRecord {
    fn from_line(line: &str) -> Result<Self, String> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        PubRecord::new(raw.id, raw.authors, raw.year, raw.title).map_err(|e| e.to_string())
    }
}

/// Iterator over the records of a line-delimited stream. Blank lines are
/// ignored; lines that fail to decode are recorded in [`LineRecords::errors`].
pub struct LineRecords<R, T> {
    reader: R,
    buf: Vec<u8>,
    line: usize,
    errors: Vec<LineError>,
    failed: bool,
    _record: PhantomData<fn() -> T>,
}

impl<R: BufRead, T: FromLine> LineRecords<R, T> {
    pub fn new(reader: R) -> Self {
        LineRecords {
            reader,
            buf: Vec::new(),
            line: 0,
            errors: Vec::new(),
            failed: false,
            _record: PhantomData,
        }
    }

    pub fn errors(&self) -> &[LineError] {
        &self.errors
    }

    pub fn into_errors(self) -> Vec<LineError> {
        self.errors
    }

    /// Number of lines consumed so far.
    pub fn lines_read(&self) -> usize {
        self.line
    }
}

impl<R: BufRead, T: FromLine> Iterator for LineRecords<R, T> {
    type Item = io::Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.failed {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
            self.line += 1;
            let text = match std::str::from_utf8(&self.buf) {
                Ok(text) => text.trim(),
                Err(e) => {
                    self.errors.push(LineError {
                        line: self.line,
                        message: format!("invalid UTF-8: {e}"),
                    });
                    continue;
                }
            };
            if text.is_empty() {
                continue;
            }
            match T::from_line(text) {
                Ok(record) => return Some(Ok(record)),
                Err(message) => self.errors.push(LineError {
                    line: self.line,
                    message,
                }),
            }
        }
        None
    }
}

pub fn parse_transaction_stream<R: BufRead>(reader: R) -> LineRecords<R, Transaction> {
    LineRecords::new(reader)
}

pub fn parse_session_log<R: BufRead>(reader: R) -> LineRecords<R, Session> {
    LineRecords::new(reader)
}

pub fn parse_baseline<R: BufRead>(reader: R) -> LineRecords<R, ScoredDoc> {
    LineRecords::new(reader)
}

pub fn parse_records_jsonl<R: BufRead>(reader: R) -> LineRecords<R, PubRecord> {
    LineRecords::new(reader)
}

/// Comma-separated publication records: `id,authors,year[,title]` with the
/// authors joined by `;` inside one (usually quoted) field. A first row
/// whose id field reads `id` is taken as a header.
pub struct CsvRecords<R> {
    rows: csv::StringRecordsIntoIter<R>,
    errors: Vec<LineError>,
    first: bool,
    failed: bool,
}

impl<R: Read> CsvRecords<R> {
    pub fn new(reader: R) -> Self {
        let rows = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        CsvRecords {
            rows,
            errors: Vec::new(),
            first: true,
            failed: false,
        }
    }

    pub fn errors(&self) -> &[LineError] {
        &self.errors
    }

    pub fn into_errors(self) -> Vec<LineError> {
        self.errors
    }

    fn decode(row: &csv::StringRecord) -> Result<PubRecord, String> {
        if !(3..=4).contains(&row.len()) {
            return Err(format!("expected 3 or 4 fields, found {}", row.len()));
        }
        let authors: Vec<&str> = row[1]
            .split(';')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let year: i64 = row[2]
            .parse()
            .map_err(|_| format!("year {:?} is not an integer", &row[2]))?;
        let title = row.get(3).filter(|t| !t.is_empty()).map(str::to_string);
        PubRecord::new(&row[0], authors, year, title).map_err(|e| e.to_string())
    }
}

impl<R: Read> Iterator for CsvRecords<R> {
    type Item = io::Result<PubRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.failed {
            let row = match self.rows.next()? {
                Ok(row) => row,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    if e.is_io_error() {
                        self.failed = true;
                        return Some(Err(io::Error::other(e.to_string())));
                    }
                    self.errors.push(LineError {
                        line,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let line = row.position().map_or(0, |p| p.line() as usize);
            let header = std::mem::take(&mut self.first) && row.get(0) == Some("id");
            if header || (row.len() == 1 && row[0].is_empty()) {
                continue;
            }
            match Self::decode(&row) {
                Ok(rec) => return Some(Ok(rec)),
                Err(message) => self.errors.push(LineError { line, message }),
            }
        }
        None
    }
}
