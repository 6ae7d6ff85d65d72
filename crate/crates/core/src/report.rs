//! Deterministic tabular output.
//!
//! Reports are written as JSON lines or CSV. Field order is fixed by each
//! record type and real numbers use six significant digits, formatted the
//! same way regardless of locale.

use std::io::{self, Write};

use crate::anima::Hit;
use crate::biblio::{AuthorPair, TrendReport};
use crate::engine::EdgeKey;
use crate::feedback::RankedDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Uint(u64),
    Float(f64),
    Text(String),
    /// Written as `null` in JSON and as an empty CSV cell.
    Empty,
}

pub trait ReportRecord {
    fn fields(&self) -> Vec<(&'static str, Field)>;
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{value:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_fraction(&format!("{value:.decimals$}")).to_string()
}

fn trim_fraction(text: &str) -> &str {
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.')
    } else {
        text
    }
}

struct Counting<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for Counting<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn field_text(field: &Field) -> String {
    match field {
        Field::Int(v) => v.to_string(),
        Field::Uint(v) => v.to_string(),
        Field::Float(v) => format_sig6(*v),
        Field::Text(s) => s.clone(),
        Field::Empty => String::new(),
    }
}

fn field_json(field: &Field) -> String {
    match field {
        Field::Float(v) if !v.is_finite() => "null".into(),
        Field::Text(s) => serde_json::to_string(s).expect("strings serialise"),
        Field::Empty => "null".into(),
        other => field_text(other),
    }
}

/// Writes `records` and returns the number of bytes produced. CSV output
/// starts with a header row when there is at least one record.
pub fn emit_report<W, R, I>(records: I, format: Format, sink: W) -> io::Result<u64>
where
    W: Write,
    R: ReportRecord,
    I: IntoIterator<Item = R>,
{
    let mut out = Counting {
        inner: sink,
        bytes: 0,
    };
    match format {
        Format::Jsonl => {
            for record in records {
                let body: Vec<String> = record
                    .fields()
                    .iter()
                    .map(|(name, value)| format!("\"{name}\":{}", field_json(value)))
                    .collect();
                writeln!(out, "{{{}}}", body.join(","))?;
            }
            out.flush()?;
        }
        Format::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            let mut header_done = false;
            for record in records {
                let fields = record.fields();
                if !header_done {
                    writer.write_record(fields.iter().map(|(name, _)| *name))?;
                    header_done = true;
                }
                writer.write_record(fields.iter().map(|(_, value)| field_text(value)))?;
            }
            writer.flush()?;
        }
    }
    Ok(out.bytes)
}

impl ReportRecord for Hit {
    fn fields(&self) -> Vec<(&'static str, Field)> {
        vec![
            ("offset", Field::Uint(self.offset as u64)),
            ("length", Field::Uint(self.length as u64)),
            ("verdict", Field::Text(self.verdict.tag().into())),
            (
                "probability",
                self.verdict
                    .probability()
                    .map_or(Field::Empty, Field::Float),
            ),
        ]
    }
}

impl ReportRecord for (EdgeKey, f64) {
    fn fields(&self) -> Vec<(&'static str, Field)> {
        vec![
            ("a", Field::Text(self.0.low().to_string())),
            ("b", Field::Text(self.0.high().to_string())),
            ("weight", Field::Float(self.1)),
        ]
    }
}

impl ReportRecord for RankedDoc {
    fn fields(&self) -> Vec<(&'static str, Field)> {
        vec![
            ("doc", Field::Text(self.doc.clone())),
            ("score", Field::Float(self.score)),
            ("baseline_rank", Field::Uint(self.baseline_rank as u64)),
            ("rank", Field::Uint(self.rank as u64)),
        ]
    }
}

/// A community found in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityRow {
    pub window_start: i64,
    pub window_end: i64,
    pub members: Vec<String>,
}

impl ReportRecord for CommunityRow {
    fn fields(&self) -> Vec<(&'static str, Field)> {
        vec![
            ("window_start", Field::Int(self.window_start)),
            ("window_end", Field::Int(self.window_end)),
            ("size", Field::Uint(self.members.len() as u64)),
            ("members", Field::Text(self.members.join(";"))),
        ]
    }
}

/// Trend of one author pair; `report` is `None` when the pair never met.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub pair: AuthorPair,
    pub report: Option<TrendReport>,
}

impl ReportRecord for TrendRow {
    fn fields(&self) -> Vec<(&'static str, Field)> {
        let (label, from, to, presence) = match &self.report {
            Some(r) => (
                Field::Text(r.label.as_str().into()),
                Field::Int(r.span.0),
                Field::Int(r.span.1),
                Field::Text(
                    r.presence
                        .iter()
                        .map(|&p| if p { '1' } else { '0' })
                        .collect(),
                ),
            ),
            None => (
                Field::Text("absent".into()),
                Field::Empty,
                Field::Empty,
                Field::Empty,
            ),
        };
        vec![
            ("first", Field::Text(self.pair.first().into())),
            ("second", Field::Text(self.pair.second().into())),
            ("label", label),
            ("span_from", from),
            ("span_to", to),
            ("presence", presence),
        ]
    }
}
