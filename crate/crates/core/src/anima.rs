//! Signature store with activation-sum alerting.
//!
//! Known-bad signatures are byte strings. Every distinct byte becomes a
//! cell with a weight in `[0, 1]`, and adjacent bytes of a signature are
//! joined by a directed edge. A signature spreads one unit of weight over
//! its path: symbols already in the store keep whatever weight they have,
//! and the remainder is split equally over the positions held by new
//! symbols. When the known symbols leave less than one unit unspent (or
//! none at all), the gap is stored as the signature's terminal residual so
//! a complete signature still sums to exactly one.
//!
//! A query is scored by walking its longest valid prefix run (known
//! symbols joined by existing edges) and summing the weights along it,
//! plus the residual when the query is itself a stored signature. The sum
//! maps onto a four-way [`Verdict`].

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::ops::Range;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use percent_encoding::percent_decode;
use thiserror::Error;

/// Tolerance for the "exactly one" and "exactly zero" verdicts.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignatureError {
    #[error("signature is empty")]
    Empty,
    #[error("activation sum must be nonnegative, got {0}")]
    NegativeSum(f64),
    #[error("p_min must lie in [0, 1], got {0}")]
    InvalidPMin(f64),
    #[error("signature file line {line}: {reason}")]
    File { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(Vec<u8>);

impl Signature {
    pub fn new(symbols: impl Into<Vec<u8>>) -> Result<Self, SignatureError> {
        let symbols = symbols.into();
        if symbols.is_empty() {
            return Err(SignatureError::Empty);
        }
        Ok(Signature(symbols))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Borrow<[u8]> for Signature {
    fn borrow(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode_signature(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRecord {
    signature: Signature,
    path_sum: f64,
    residual: f64,
    over_unity: bool,
}

impl SignatureRecord {
    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    /// The cell path, one symbol per position.
    pub fn path(&self) -> &[u8] {
        self.signature.as_bytes()
    }

    /// Sum of cell weights along the path at insertion time. Cell weights
    /// never change afterwards, so this stays current.
    pub fn path_sum(&self) -> f64 {
        self.path_sum
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Set when the path alone already weighs more than one.
    pub fn over_unity(&self) -> bool {
        self.over_unity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Alert,
    NoAlert,
    /// Partial evidence; carries the activation sum, strictly inside (0, 1).
    Probabilistic(f64),
    NotConsidered,
}

impl Verdict {
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Alert => "alert",
            Verdict::NoAlert => "no-alert",
            Verdict::Probabilistic(_) => "probabilistic",
            Verdict::NotConsidered => "not-considered",
        }
    }

    pub fn probability(&self) -> Option<f64> {
        match self {
            Verdict::Probabilistic(p) => Some(*p),
            _ => None,
        }
    }
}

pub fn classify(sum: f64) -> Result<Verdict, SignatureError> {
    if sum.is_nan() || sum < 0.0 {
        return Err(SignatureError::NegativeSum(sum));
    }
    Ok(if (sum - 1.0).abs() <= SUM_TOLERANCE {
        Verdict::Alert
    } else if sum <= SUM_TOLERANCE {
        Verdict::NoAlert
    } else if sum > 1.0 {
        Verdict::NotConsidered
    } else {
        Verdict::Probabilistic(sum)
    })
}

/// Dense 256x256 bit matrix of directed successor links.
#[derive(Clone, PartialEq, Eq)]
struct EdgeSet(Box<[u64; 1024]>);

impl EdgeSet {
    fn new() -> Self {
        EdgeSet(Box::new([0; 1024]))
    }

    fn slot(from: u8, to: u8) -> (usize, u64) {
        let bit = (from as usize) << 8 | to as usize;
        (bit >> 6, 1 << (bit & 63))
    }

    fn contains(&self, from: u8, to: u8) -> bool {
        let (word, mask) = Self::slot(from, to);
        self.0[word] & mask != 0
    }

    /// Returns true when the edge was not present before.
    fn insert(&mut self, from: u8, to: u8) -> bool {
        let (word, mask) = Self::slot(from, to);
        let fresh = self.0[word] & mask == 0;
        self.0[word] |= mask;
        fresh
    }
}

impl fmt::Debug for EdgeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let count: u32 = self.0.iter().map(|w| w.count_ones()).sum();
        write!(f, "EdgeSet({count} edges)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigStore {
    weights: Box<[Option<f64>; 256]>,
    edges: EdgeSet,
    edge_count: usize,
    records: BTreeMap<Signature, SignatureRecord>,
    max_len: usize,
}

impl Default for SigStore {
    fn default() -> Self {
        SigStore {
            weights: Box::new([None; 256]),
            edges: EdgeSet::new(),
            edge_count: 0,
            records: BTreeMap::new(),
            max_len: 0,
        }
    }
}

impl SigStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn weight(&self, symbol: u8) -> Option<f64> {
        self.weights[symbol as usize]
    }

    pub fn has_edge(&self, from: u8, to: u8) -> bool {
        self.edges.contains(from, to)
    }

    pub fn cell_count(&self) -> usize {
        self.weights.iter().filter(|w| w.is_some()).count()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Length of the longest stored signature.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn record(&self, symbols: &[u8]) -> Option<&SignatureRecord> {
        self.records.get(symbols)
    }

    /// Stored records ordered by signature bytes.
    pub fn records(&self) -> impl Iterator<Item = &SignatureRecord> {
        self.records.values()
    }

    /// Inserts `sig`, returning its record. Inserting a signature that is
    /// already stored changes nothing.
    pub fn insert_signature(&mut self, sig: Signature) -> &SignatureRecord {
        if self.records.contains_key(&sig) {
            return &self.records[&sig];
        }
        let symbols = sig.as_bytes();
        let (known_sum, fresh_positions) =
            symbols
                .iter()
                .fold((0.0, 0usize), |(sum, fresh), &s| match self.weight(s) {
                    Some(w) => (sum + w, fresh),
                    None => (sum, fresh + 1),
                });
        if fresh_positions > 0 {
            let share = (1.0 - known_sum).max(0.0) / fresh_positions as f64;
            for &s in symbols {
                self.weights[s as usize].get_or_insert(share);
            }
        }
        for pair in symbols.windows(2) {
            if self.edges.insert(pair[0], pair[1]) {
                self.edge_count += 1;
            }
        }
        let path_sum = self.path_weight(symbols);
        let record = SignatureRecord {
            path_sum,
            residual: (1.0 - path_sum).max(0.0),
            over_unity: path_sum > 1.0 + SUM_TOLERANCE,
            signature: sig.clone(),
        };
        self.max_len = self.max_len.max(symbols.len());
        self.records.entry(sig).or_insert(record)
    }

    /// Summed weight of the longest valid prefix run of `query`, plus the
    /// terminal residual when `query` is a stored signature.
    pub fn activation_sum(&self, query: &[u8]) -> f64 {
        let mut sum = self.path_weight(query);
        if let Some(record) = self.record(query) {
            sum += record.residual;
        }
        sum
    }

    /// Sum over the longest prefix of `symbols` whose symbols are all cells
    /// and whose consecutive pairs are all edges.
    fn path_weight(&self, symbols: &[u8]) -> f64 {
        let mut sum = 0.0;
        let mut prev: Option<u8> = None;
        for &s in symbols {
            let Some(w) = self.weight(s) else { break };
            if let Some(p) = prev {
                if !self.edges.contains(p, s) {
                    break;
                }
            }
            sum += w;
            prev = Some(s);
        }
        sum
    }

    pub fn scanner(&self) -> Scanner<'_> {
        Scanner::new(self)
    }
}

/// One reported scan window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub offset: usize,
    pub length: usize,
    pub verdict: Verdict,
}

/// Read-only view of a store prepared for scanning. Any number of threads
/// may scan through the same `Scanner`.
pub struct Scanner<'s> {
    store: &'s SigStore,
    exact: Option<AhoCorasick>,
    residuals: Vec<f64>,
}

impl<'s> Scanner<'s> {
    pub fn new(store: &'s SigStore) -> Self {
        let (patterns, residuals): (Vec<&[u8]>, Vec<f64>) = store
            .records
            .values()
            .map(|r| (r.path(), r.residual))
            .unzip();
        let exact = if patterns.is_empty() {
            None
        } else {
            Some(
                AhoCorasickBuilder::new()
                    .match_kind(MatchKind::Standard)
                    .build(&patterns)
                    .expect("signature automaton fits in memory"),
            )
        };
        Scanner {
            store,
            exact,
            residuals,
        }
    }

    /// Classifies every window of length `1..=max_len` at every offset and
    /// reports alerts plus probabilistic verdicts with `p >= p_min`,
    /// ordered by offset then length.
    pub fn scan(&self, data: &[u8], p_min: f64) -> Result<Vec<Hit>, SignatureError> {
        self.scan_offsets(data, 0..data.len(), p_min)
    }

    /// Like [`Scanner::scan`] but only for windows starting in `offsets`.
    /// Windows may extend past the end of the range.
    pub fn scan_offsets(
        &self,
        data: &[u8],
        offsets: Range<usize>,
        p_min: f64,
    ) -> Result<Vec<Hit>, SignatureError> {
        if !(0.0..=1.0).contains(&p_min) {
            return Err(SignatureError::InvalidPMin(p_min));
        }
        let max_len = self.store.max_len;
        let offsets = offsets.start.min(data.len())..offsets.end.min(data.len());
        let mut hits = Vec::new();
        let Some(exact) = &self.exact else {
            return Ok(hits);
        };
        if offsets.is_empty() {
            return Ok(hits);
        }

        // Exact signature occurrences starting inside the range, as
        // (offset, length, residual) sorted in report order.
        let region_end = (offsets.end - 1 + max_len).min(data.len());
        let region = &data[offsets.start..region_end];
        let mut matches: Vec<(usize, usize, f64)> = exact
            .find_overlapping_iter(region)
            .map(|m| {
                (
                    offsets.start + m.start(),
                    m.len(),
                    self.residuals[m.pattern()],
                )
            })
            .filter(|(start, _, _)| offsets.contains(start))
            .collect();
        matches.sort_by_key(|&(start, len, _)| (start, len));
        let mut pending = matches.into_iter().peekable();

        let mut run_sums = Vec::with_capacity(max_len + 1);
        for offset in offsets {
            let longest = max_len.min(data.len() - offset);
            let window = &data[offset..offset + longest];
            run_sums.clear();
            run_sums.push(0.0);
            let mut prev: Option<u8> = None;
            for &s in window {
                let Some(w) = self.store.weight(s) else { break };
                if prev.is_some_and(|p| !self.store.has_edge(p, s)) {
                    break;
                }
                run_sums.push(run_sums[run_sums.len() - 1] + w);
                prev = Some(s);
            }
            let run = run_sums.len() - 1;
            for length in 1..=longest {
                let mut sum = run_sums[length.min(run)];
                if let Some((_, _, residual)) =
                    pending.next_if(|&(start, len, _)| start == offset && len == length)
                {
                    sum += residual;
                }
                let verdict = classify(sum).expect("weights are nonnegative");
                let report = match verdict {
                    Verdict::Alert => true,
                    Verdict::Probabilistic(p) => p >= p_min,
                    Verdict::NoAlert | Verdict::NotConsidered => false,
                };
                if report {
                    hits.push(Hit {
                        offset,
                        length,
                        verdict,
                    });
                }
            }
        }
        Ok(hits)
    }

    /// Splits the offsets into `workers` contiguous ranges scanned on
    /// separate threads; the result is identical to [`Scanner::scan`].
    pub fn scan_parallel(
        &self,
        data: &[u8],
        p_min: f64,
        workers: usize,
    ) -> Result<Vec<Hit>, SignatureError> {
        if !(0.0..=1.0).contains(&p_min) {
            return Err(SignatureError::InvalidPMin(p_min));
        }
        let workers = workers.max(1);
        let chunk = data.len().div_ceil(workers).max(1);
        let parts: Vec<Result<Vec<Hit>, SignatureError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..data.len())
                .step_by(chunk)
                .map(|start| {
                    let range = start..(start + chunk).min(data.len());
                    scope.spawn(move || self.scan_offsets(data, range, p_min))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scan worker panicked"))
                .collect()
        });
        let mut hits = Vec::new();
        for part in parts {
            hits.extend(part?);
        }
        Ok(hits)
    }
}

/// Scans `data` against `store`; see [`Scanner::scan`].
pub fn scan_stream(store: &SigStore, data: &[u8], p_min: f64) -> Result<Vec<Hit>, SignatureError> {
    store.scanner().scan(data, p_min)
}

/// Reads a signature list: one signature per line, `#` starts a comment
/// line, blank lines are skipped, `%XX` escapes arbitrary bytes.
pub fn read_signatures<R: BufRead>(reader: R) -> Result<Vec<Signature>, SignatureError> {
    let mut out = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let line = line.map_err(|e| SignatureError::File {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let line = line.strip_suffix(b"\r").unwrap_or(&line);
        if line.is_empty() || line[0] == b'#' {
            continue;
        }
        let decoded: Vec<u8> = percent_decode(line).collect();
        let sig = Signature::new(decoded).map_err(|e| SignatureError::File {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(sig);
    }
    Ok(out)
}

/// Text form used by signature files: printable ASCII stays literal, other
/// bytes, `%`, and a leading `#` are percent-encoded.
pub fn encode_signature(symbols: &[u8]) -> String {
    let mut out = String::with_capacity(symbols.len());
    for (i, &b) in symbols.iter().enumerate() {
        let literal = (0x20..0x7f).contains(&b) && b != b'%' && !(i == 0 && b == b'#');
        if literal {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
