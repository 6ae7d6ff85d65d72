//! Temporal co-authorship graphs over a stream of publication records.
//!
//! Records are bucketed by year. A window `[start, start + width)` turns
//! the records inside it into a co-author graph whose edge multiplicities
//! count shared publications exactly. Windows slide by `step` years;
//! [`BiblioState::windows`] maintains the graph incrementally while
//! sliding. Over a window sequence a pair's presence pattern is summarised
//! as constant, recurring or visiting.

use std::collections::{BTreeMap, HashSet};

use petgraph::unionfind::UnionFind;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BiblioError {
    #[error("record id is empty")]
    EmptyId,
    #[error("record {0:?} has no authors")]
    NoAuthors(String),
    #[error("record {0:?} has an empty author name")]
    EmptyAuthor(String),
    #[error("window width and step must be at least one year (got {width}:{step})")]
    InvalidWindow { width: u32, step: u32 },
    #[error("a pair needs two distinct authors, got {0:?} twice")]
    SelfPair(String),
    #[error("first year {first} is after last year {last}")]
    InvalidYearRange { first: i64, last: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PubRecord {
    id: String,
    authors: Vec<String>,
    year: i64,
    title: Option<String>,
}

impl PubRecord {
    /// Builds a record; repeated author names are dropped, keeping the
    /// first occurrence.
    pub fn new(
        id: impl Into<String>,
        authors: impl IntoIterator<Item = impl Into<String>>,
        year: i64,
        title: Option<String>,
    ) -> Result<Self, BiblioError> {
        let id = id.into();
        if id.is_empty() {
            return Err(BiblioError::EmptyId);
        }
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for author in authors {
            let author = author.into();
            if author.is_empty() {
                return Err(BiblioError::EmptyAuthor(id));
            }
            if seen.insert(author.clone()) {
                list.push(author);
            }
        }
        if list.is_empty() {
            return Err(BiblioError::NoAuthors(id));
        }
        Ok(PubRecord {
            id,
            authors: list,
            year,
            title,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn authors(&self) -> &[String] {
        &self.authors
    }

    pub fn year(&self) -> i64 {
        self.year
    }

    pub fn title(&self) -> Option<&str> {
        self.title.as_deref()
    }

    fn has_pair(&self, pair: &AuthorPair) -> bool {
        self.authors.contains(&pair.0) && self.authors.contains(&pair.1)
    }
}

/// Unordered pair of distinct authors, smaller name first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuthorPair(String, String);

impl AuthorPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Result<Self, BiblioError> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(AuthorPair(a, b)),
            std::cmp::Ordering::Greater => Ok(AuthorPair(b, a)),
            std::cmp::Ordering::Equal => Err(BiblioError::SelfPair(a)),
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    width: u32,
    step: u32,
}

impl WindowConfig {
    pub fn new(width: u32, step: u32) -> Result<Self, BiblioError> {
        if width == 0 || step == 0 {
            return Err(BiblioError::InvalidWindow { width, step });
        }
        Ok(WindowConfig { width, step })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    fn end(&self, start: i64) -> i64 {
        start + self.width as i64
    }
}

/// Co-author graph of one window. Besides edge multiplicities it keeps how
/// many in-window records each author appears on, which lets a sliding
/// window drop records again.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoauthorGraph {
    authors: BTreeMap<String, u32>,
    edges: BTreeMap<AuthorPair, u32>,
}

impl CoauthorGraph {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a PubRecord>) -> Self {
        let mut graph = CoauthorGraph::default();
        for rec in records {
            graph.add(rec);
        }
        graph
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.authors.keys().map(String::as_str)
    }

    pub fn author_count(&self) -> usize {
        self.authors.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&AuthorPair, u32)> {
        self.edges.iter().map(|(p, &m)| (p, m))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of shared in-window publications; 0 when not connected.
    pub fn multiplicity(&self, a: &str, b: &str) -> u32 {
        AuthorPair::new(a, b)
            .ok()
            .and_then(|p| self.edges.get(&p).copied())
            .unwrap_or(0)
    }

    fn add(&mut self, rec: &PubRecord) {
        for author in &rec.authors {
            *self.authors.entry(author.clone()).or_default() += 1;
        }
        for_each_pair(rec, |pair| *self.edges.entry(pair).or_default() += 1);
    }

    fn remove(&mut self, rec: &PubRecord) {
        for author in &rec.authors {
            decrement(&mut self.authors, author.clone());
        }
        for_each_pair(rec, |pair| decrement(&mut self.edges, pair));
    }
}

fn for_each_pair(rec: &PubRecord, mut f: impl FnMut(AuthorPair)) {
    for (i, a) in rec.authors.iter().enumerate() {
        for b in &rec.authors[i + 1..] {
            f(AuthorPair::new(a.clone(), b.clone()).expect("authors are distinct"));
        }
    }
}

fn decrement<K: Ord>(counts: &mut BTreeMap<K, u32>, key: K) {
    if let Some(n) = counts.get_mut(&key) {
        *n -= 1;
        if *n == 0 {
            counts.remove(&key);
        }
    }
}

/// Connected components over edges with multiplicity ≥ `min_multiplicity`.
/// Isolated authors are left out. Members are sorted; components come
/// largest first, ties by first member.
pub fn communities(graph: &CoauthorGraph, min_multiplicity: u32) -> Vec<Vec<String>> {
    let names: Vec<&str> = graph.authors().collect();
    let index = |name: &str| {
        names
            .binary_search(&name)
            .expect("edge endpoints are authors")
    };
    let mut sets = UnionFind::<usize>::new(names.len());
    let mut linked = vec![false; names.len()];
    for (pair, m) in graph.edges() {
        if m >= min_multiplicity {
            let (a, b) = (index(pair.first()), index(pair.second()));
            sets.union(a, b);
            linked[a] = true;
            linked[b] = true;
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if linked[i] {
            groups
                .entry(sets.find(i))
                .or_default()
                .push(name.to_string());
        }
    }
    let mut out: Vec<Vec<String>> = groups.into_values().collect();
    out.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendLabel {
    Constant,
    Recurring,
    Visiting,
}

impl TrendLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrendLabel::Constant => "constant",
            TrendLabel::Recurring => "recurring",
            TrendLabel::Visiting => "visiting",
        }
    }
}

/// Presence of a pair over a window sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendReport {
    pub label: TrendLabel,
    /// Start year of every window in the sequence.
    pub window_starts: Vec<i64>,
    pub presence: Vec<bool>,
    /// Start years of the first and last windows where the pair appears.
    pub span: (i64, i64),
}

/// Labels a presence vector. Present everywhere is constant, a single
/// present window is visiting, two present windows with an absent one
/// between them is recurring, and a contiguous run that does not cover
/// the whole sequence is constant over that run.
pub fn classify_presence(presence: &[bool]) -> Option<(TrendLabel, usize, usize)> {
    let first = presence.iter().position(|&p| p)?;
    let last = presence.iter().rposition(|&p| p)?;
    let present = presence.iter().filter(|&&p| p).count();
    let label = if present == presence.len() {
        TrendLabel::Constant
    } else if present == 1 {
        TrendLabel::Visiting
    } else if last - first + 1 > present {
        TrendLabel::Recurring
    } else {
        TrendLabel::Constant
    };
    Some((label, first, last))
}

/// Year-bucketed record store.
#[derive(Debug, Clone, Default)]
pub struct BiblioState {
    years: BTreeMap<i64, Vec<PubRecord>>,
    ids: HashSet<String>,
    duplicates: usize,
}

impl BiblioState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Buffers `rec` under its year. A record whose id was already seen is
    /// dropped and counted; returns whether the record was kept.
    pub fn ingest_record(&mut self, rec: PubRecord) -> bool {
        if !self.ids.insert(rec.id.clone()) {
            self.duplicates += 1;
            return false;
        }
        self.years.entry(rec.year).or_default().push(rec);
        true
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    pub fn record_count(&self) -> usize {
        self.ids.len()
    }

    /// Smallest and largest year seen.
    pub fn year_range(&self) -> Option<(i64, i64)> {
        Some((*self.years.keys().next()?, *self.years.keys().next_back()?))
    }

    pub fn records_in(&self, years: std::ops::Range<i64>) -> impl Iterator<Item = &PubRecord> {
        let range = if years.start < years.end {
            years
        } else {
            years.start..years.start
        };
        self.years.range(range).flat_map(|(_, recs)| recs.iter())
    }

    pub fn snapshot_window(&self, start: i64, cfg: WindowConfig) -> CoauthorGraph {
        CoauthorGraph::from_records(self.records_in(start..cfg.end(start)))
    }

    /// Windows starting at `first_start`, `first_start + step`, … up to and
    /// including `last_start`, each paired with its graph. Overlapping
    /// windows are updated incrementally.
    pub fn windows(
        &self,
        first_start: i64,
        last_start: i64,
        cfg: WindowConfig,
    ) -> SlidingWindows<'_> {
        SlidingWindows {
            state: self,
            cfg,
            next_start: first_start,
            last_start,
            current: None,
        }
    }

    /// Presence of `pair` across the windows starting at `first_year`,
    /// `first_year + step`, … while the start is ≤ `last_year`. `None` when
    /// the pair never appears.
    pub fn trend(
        &self,
        pair: &AuthorPair,
        cfg: WindowConfig,
        first_year: i64,
        last_year: i64,
    ) -> Result<Option<TrendReport>, BiblioError> {
        if first_year > last_year {
            return Err(BiblioError::InvalidYearRange {
                first: first_year,
                last: last_year,
            });
        }
        let window_starts: Vec<i64> = (first_year..=last_year)
            .step_by(cfg.step as usize)
            .collect();
        let last_end = cfg.end(*window_starts.last().expect("non-empty range"));
        let mut per_year: BTreeMap<i64, u32> = BTreeMap::new();
        for rec in self.records_in(first_year..last_end) {
            if rec.has_pair(pair) {
                *per_year.entry(rec.year).or_default() += 1;
            }
        }
        let presence: Vec<bool> = window_starts
            .iter()
            .map(|&s| per_year.range(s..cfg.end(s)).next().is_some())
            .collect();
        Ok(
            classify_presence(&presence).map(|(label, first, last)| TrendReport {
                label,
                span: (window_starts[first], window_starts[last]),
                window_starts,
                presence,
            }),
        )
    }
}

pub struct SlidingWindows<'a> {
    state: &'a BiblioState,
    cfg: WindowConfig,
    next_start: i64,
    last_start: i64,
    current: Option<(i64, CoauthorGraph)>,
}

impl Iterator for SlidingWindows<'_> {
    type Item = (i64, CoauthorGraph);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_start > self.last_start {
            return None;
        }
        let start = self.next_start;
        let end = self.cfg.end(start);
        let graph = match self.current.take() {
            Some((prev, mut graph)) if self.cfg.end(prev) > start => {
                for rec in self.state.records_in(prev..start) {
                    graph.remove(rec);
                }
                for rec in self.state.records_in(self.cfg.end(prev)..end) {
                    graph.add(rec);
                }
                graph
            }
            _ => self.state.snapshot_window(start, self.cfg),
        };
        self.current = Some((start, graph.clone()));
        self.next_start += self.cfg.step as i64;
        Some((start, graph))
    }
}
