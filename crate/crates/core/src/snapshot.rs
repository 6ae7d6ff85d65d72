//! Whole-map snapshots in a versioned, line-oriented text format.
//!
//! ```text
//! MINDMAP v1
//! P <w0> <eta> <lambda> <theta_death> <graveyard_ticks>
//! T <tick>
//! C <token> <weight> alive <last_stimulated> <created_at>
//! E <low token> <high token> <weight> <last_reinforced>
//! G <token> <weight> dead <last_stimulated> <created_at> <died_at>
//! END <cells> <edges> <graves>
//! ```
//!
//! Fields are tab separated. Real numbers are hexadecimal floats so a
//! load reproduces every weight bit for bit. Tokens have `%`, tabs, line
//! breaks and other control characters percent-encoded. The `END` trailer
//! carries record counts; a file without it is treated as truncated.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use thiserror::Error;

use crate::engine::{
    Cell, CellId, CellStatus, Connection, EdgeKey, EngineParams, GraveEntry, MindMap,
};
use crate::hexfloat;

pub const HEADER: &str = "MINDMAP v1";

const TOKEN_ESCAPES: &AsciiSet = &CONTROLS.add(b'%');

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o failed: {0}")]
    Io(#[from] io::Error),
    #[error("not a mind-map snapshot (missing `{HEADER}` header)")]
    MissingHeader,
    #[error("unsupported snapshot version {0:?}")]
    UnsupportedVersion(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("snapshot is truncated (no END trailer)")]
    Truncated,
    #[error("inconsistent snapshot: {0}")]
    Inconsistent(String),
}

pub fn encode_token(token: &str) -> String {
    utf8_percent_encode(token, TOKEN_ESCAPES).to_string()
}

pub fn decode_token(field: &str) -> Result<String, String> {
    percent_decode_str(field)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|e| format!("token {field:?} is not valid UTF-8 after decoding: {e}"))
}

impl MindMap {
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        let p = self.params();
        writeln!(out, "{HEADER}")?;
        writeln!(
            out,
            "P\t{}\t{}\t{}\t{}\t{}",
            hexfloat::format(p.w0),
            hexfloat::format(p.eta),
            hexfloat::format(p.lambda),
            hexfloat::format(p.theta_death),
            p.graveyard_ticks
        )?;
        writeln!(out, "T\t{}", self.tick())?;

        let mut cells: Vec<&Cell> = self.cells().collect();
        cells.sort_by(|a, b| a.id.cmp(&b.id));
        for c in &cells {
            writeln!(
                out,
                "C\t{}\t{}\talive\t{}\t{}",
                encode_token(c.id.as_str()),
                hexfloat::format(c.weight),
                c.last_stimulated,
                c.created_at
            )?;
        }
        let mut edges: Vec<&Connection> = self.connections().collect();
        edges.sort_by(|a, b| a.endpoints.cmp(&b.endpoints));
        for e in &edges {
            writeln!(
                out,
                "E\t{}\t{}\t{}\t{}",
                encode_token(e.endpoints.low().as_str()),
                encode_token(e.endpoints.high().as_str()),
                hexfloat::format(e.weight),
                e.last_reinforced
            )?;
        }
        let mut graves: Vec<&GraveEntry> = self.graveyard().collect();
        graves.sort_by(|a, b| a.cell.id.cmp(&b.cell.id));
        for g in &graves {
            writeln!(
                out,
                "G\t{}\t{}\tdead\t{}\t{}\t{}",
                encode_token(g.cell.id.as_str()),
                hexfloat::format(g.cell.weight),
                g.cell.last_stimulated,
                g.cell.created_at,
                g.died_at
            )?;
        }
        writeln!(
            out,
            "END\t{}\t{}\t{}",
            cells.len(),
            edges.len(),
            graves.len()
        )
    }

    pub fn to_snapshot(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("snapshot text is UTF-8")
    }

    pub fn read_snapshot<R: BufRead>(reader: R) -> Result<MindMap, SnapshotError> {
        let mut loader = Loader::default();
        for (idx, line) in reader.lines().enumerate() {
            loader.feed(idx + 1, &line?)?;
        }
        loader.finish()
    }

    pub fn from_snapshot(text: &str) -> Result<MindMap, SnapshotError> {
        MindMap::read_snapshot(text.as_bytes())
    }
}

/// Saves then reloads `map`.
pub fn snapshot_roundtrip(map: &MindMap) -> Result<MindMap, SnapshotError> {
    MindMap::from_snapshot(&map.to_snapshot())
}

#[derive(Default)]
struct Loader {
    header_seen: bool,
    params: Option<EngineParams>,
    tick: Option<u64>,
    cells: Vec<Cell>,
    edges: Vec<Connection>,
    graves: Vec<GraveEntry>,
    trailer: Option<(usize, usize, usize)>,
}

struct Fields<'a> {
    line: usize,
    parts: std::str::Split<'a, char>,
}

impl<'a> Fields<'a> {
    fn err(&self, reason: impl Into<String>) -> SnapshotError {
        SnapshotError::Malformed {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, SnapshotError> {
        self.parts
            .next()
            .ok_or_else(|| self.err(format!("missing field `{what}`")))
    }

    fn float(&mut self, what: &str) -> Result<f64, SnapshotError> {
        let raw = self.next(what)?;
        hexfloat::parse(raw).map_err(|e| self.err(format!("{what}: {e}")))
    }

    fn weight(&mut self, what: &str) -> Result<f64, SnapshotError> {
        let w = self.float(what)?;
        if w < 0.0 || w.is_sign_negative() {
            return Err(self.err(format!("{what} must be nonnegative")));
        }
        Ok(w)
    }

    fn uint<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, SnapshotError> {
        let raw = self.next(what)?;
        raw.parse()
            .map_err(|_| self.err(format!("{what}: expected an unsigned integer, got {raw:?}")))
    }

    fn token(&mut self, what: &str) -> Result<CellId, SnapshotError> {
        let raw = self.next(what)?;
        let decoded = decode_token(raw).map_err(|e| self.err(e))?;
        CellId::new(decoded).map_err(|e| self.err(format!("{what}: {e}")))
    }

    fn keyword(&mut self, expected: &str) -> Result<(), SnapshotError> {
        let raw = self.next(expected)?;
        if raw != expected {
            return Err(self.err(format!("expected `{expected}`, got {raw:?}")));
        }
        Ok(())
    }

    fn done(&mut self) -> Result<(), SnapshotError> {
        match self.parts.next() {
            None => Ok(()),
            Some(extra) => Err(self.err(format!("unexpected trailing field {extra:?}"))),
        }
    }
}

impl Loader {
    fn feed(&mut self, line: usize, text: &str) -> Result<(), SnapshotError> {
        if !self.header_seen {
            if text == HEADER {
                self.header_seen = true;
                return Ok(());
            }
            return Err(match text.strip_prefix("MINDMAP ") {
                Some(version) => SnapshotError::UnsupportedVersion(version.to_string()),
                None => SnapshotError::MissingHeader,
            });
        }
        let mut f = Fields {
            line,
            parts: text.split('\t'),
        };
        if self.trailer.is_some() {
            return Err(f.err("content after END trailer"));
        }
        let tag = f.next("record tag")?;
        if tag != "P" && self.params.is_none() {
            return Err(f.err("expected the P line before any other record"));
        }
        if !matches!(tag, "P" | "T") && self.tick.is_none() {
            return Err(f.err("expected the T line before cell and edge records"));
        }
        match tag {
            "P" => {
                if self.params.is_some() {
                    return Err(f.err("duplicate P line"));
                }
                let params = EngineParams {
                    w0: f.float("w0")?,
                    eta: f.float("eta")?,
                    lambda: f.float("lambda")?,
                    theta_death: f.float("theta_death")?,
                    graveyard_ticks: f.uint("graveyard_ticks")?,
                };
                params.validate().map_err(|e| f.err(e.to_string()))?;
                self.params = Some(params);
            }
            "T" => {
                if self.tick.is_some() {
                    return Err(f.err("duplicate T line"));
                }
                self.tick = Some(f.uint("tick")?);
            }
            "C" => {
                let id = f.token("token")?;
                let weight = f.weight("weight")?;
                f.keyword("alive")?;
                self.cells.push(Cell {
                    id,
                    weight,
                    status: CellStatus::Alive,
                    last_stimulated: f.uint("last_stimulated")?,
                    created_at: f.uint("created_at")?,
                });
            }
            "E" => {
                let low = f.token("low endpoint")?;
                let high = f.token("high endpoint")?;
                let endpoints = EdgeKey::new(low, high).map_err(|e| f.err(e.to_string()))?;
                self.edges.push(Connection {
                    endpoints,
                    weight: f.weight("weight")?,
                    last_reinforced: f.uint("last_reinforced")?,
                });
            }
            "G" => {
                let id = f.token("token")?;
                let weight = f.weight("weight")?;
                f.keyword("dead")?;
                let cell = Cell {
                    id,
                    weight,
                    status: CellStatus::Dead,
                    last_stimulated: f.uint("last_stimulated")?,
                    created_at: f.uint("created_at")?,
                };
                self.graves.push(GraveEntry {
                    cell,
                    died_at: f.uint("died_at")?,
                });
            }
            "END" => {
                self.trailer = Some((f.uint("cells")?, f.uint("edges")?, f.uint("graves")?));
            }
            other => return Err(f.err(format!("unknown record tag {other:?}"))),
        }
        f.done()
    }

    fn finish(self) -> Result<MindMap, SnapshotError> {
        if !self.header_seen {
            return Err(SnapshotError::MissingHeader);
        }
        let Some(counts) = self.trailer else {
            return Err(SnapshotError::Truncated);
        };
        let inconsistent = |msg: String| Err(SnapshotError::Inconsistent(msg));
        let actual = (self.cells.len(), self.edges.len(), self.graves.len());
        if counts != actual {
            return inconsistent(format!(
                "END trailer announces {counts:?} records, found {actual:?}"
            ));
        }
        let (Some(params), Some(tick)) = (self.params, self.tick) else {
            return inconsistent("missing P or T line".into());
        };

        let mut alive = HashSet::new();
        for c in &self.cells {
            if !alive.insert(&c.id) {
                return inconsistent(format!("cell {} listed twice", c.id));
            }
            if c.last_stimulated > tick || c.created_at > tick {
                return inconsistent(format!("cell {} is stamped after tick {tick}", c.id));
            }
        }
        let mut dead = HashSet::new();
        for g in &self.graves {
            if alive.contains(&g.cell.id) || !dead.insert(&g.cell.id) {
                return inconsistent(format!("graveyard entry {} duplicates a cell", g.cell.id));
            }
            if g.died_at > tick {
                return inconsistent(format!("cell {} died after tick {tick}", g.cell.id));
            }
        }
        let mut seen_edges = HashSet::new();
        for e in &self.edges {
            if !seen_edges.insert(&e.endpoints) {
                return inconsistent(format!("edge {} listed twice", e.endpoints));
            }
            if !alive.contains(e.endpoints.low()) || !alive.contains(e.endpoints.high()) {
                return inconsistent(format!(
                    "edge {} references a cell that is not alive",
                    e.endpoints
                ));
            }
        }
        Ok(MindMap::from_parts(
            params,
            tick,
            self.cells,
            self.edges,
            self.graves,
        ))
    }
}
