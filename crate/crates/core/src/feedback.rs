//! Implicit-feedback mind-map over search sessions.
//!
//! Each session becomes one transaction over three kinds of cells: the
//! query itself, its terms, and the documents the user clicked. Terms are
//! linked to each other and to the query; clicked documents are linked to
//! the query with a gain that grows with dwell time. Results the user
//! skipped never enter the graph.
//!
//! Cell tokens are namespaced (`q:`, `t:`, `d:`) so a term and a document
//! with the same text stay distinct.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{CellId, EdgeKey, EngineError, EngineParams, MindMap, Stimulus};

const QUERY_PREFIX: &str = "q:";
const TERM_PREFIX: &str = "t:";
const DOC_PREFIX: &str = "d:";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedbackError {
    #[error("query has no terms")]
    EmptyQuery,
    #[error("clicked document {0:?} is not among the results")]
    UnknownClick(String),
    #[error("dwell time given for {0:?}, which was not clicked")]
    DwellWithoutClick(String),
    #[error("dwell time for {0:?} must be a nonnegative number of seconds, got {1}")]
    InvalidDwell(String, f64),
    #[error("baseline ranking is empty")]
    EmptyBaseline,
    #[error("invalid feedback parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Term,
    Query,
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    TermTerm,
    QueryTerm,
    QueryDocument,
}

pub fn cell_kind(id: &str) -> Option<CellKind> {
    if id.starts_with(TERM_PREFIX) {
        Some(CellKind::Term)
    } else if id.starts_with(QUERY_PREFIX) {
        Some(CellKind::Query)
    } else if id.starts_with(DOC_PREFIX) {
        Some(CellKind::Document)
    } else {
        None
    }
}

/// Kind of the connection between two cells, or `None` for pairs that are
/// never linked (term–document, document–document, query–query).
pub fn edge_kind(key: &EdgeKey) -> Option<EdgeKind> {
    use CellKind::*;
    match (
        cell_kind(key.low().as_str())?,
        cell_kind(key.high().as_str())?,
    ) {
        (Term, Term) => Some(EdgeKind::TermTerm),
        (Query, Term) | (Term, Query) => Some(EdgeKind::QueryTerm),
        (Query, Document) | (Document, Query) => Some(EdgeKind::QueryDocument),
        _ => None,
    }
}

/// Lowercases and splits on whitespace; repeated terms count once.
pub fn tokenize(query: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    query
        .split_whitespace()
        .map(str::to_lowercase)
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

fn cell(prefix: &str, text: &str) -> Result<CellId, EngineError> {
    CellId::new(format!("{prefix}{text}"))
}

fn query_text(terms: &[String]) -> String {
    terms.join(" ")
}

fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoredDoc {
    pub doc: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    query: String,
    terms: Vec<String>,
    results: Vec<ScoredDoc>,
    clicks: Vec<String>,
    dwell: BTreeMap<String, f64>,
}

impl Session {
    pub fn new(
        query: impl Into<String>,
        results: Vec<ScoredDoc>,
        clicks: Vec<String>,
        dwell: BTreeMap<String, f64>,
    ) -> Result<Self, FeedbackError> {
        let query = query.into();
        let terms = tokenize(&query);
        if terms.is_empty() {
            return Err(FeedbackError::EmptyQuery);
        }
        let result_ids: HashSet<&str> = results.iter().map(|r| r.doc.as_str()).collect();
        let mut seen = HashSet::new();
        let clicks: Vec<String> = clicks
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .collect();
        if let Some(stray) = clicks.iter().find(|c| !result_ids.contains(c.as_str())) {
            return Err(FeedbackError::UnknownClick(stray.clone()));
        }
        for (doc, &secs) in &dwell {
            if !seen.contains(doc) {
                return Err(FeedbackError::DwellWithoutClick(doc.clone()));
            }
            if !(secs.is_finite() && secs >= 0.0) {
                return Err(FeedbackError::InvalidDwell(doc.clone(), secs));
            }
        }
        Ok(Session {
            query,
            terms,
            results,
            clicks,
            dwell,
        })
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn results(&self) -> &[ScoredDoc] {
        &self.results
    }

    pub fn clicks(&self) -> &[String] {
        &self.clicks
    }

    pub fn dwell(&self, doc: &str) -> f64 {
        self.dwell.get(doc).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    /// Weight of the baseline score.
    pub alpha: f64,
    /// Weight of the normalised query–document edge.
    pub beta: f64,
    /// Weight of evidence from queries that share terms.
    pub gamma: f64,
    /// Dwell time (seconds) at which a click earns its full bonus.
    pub tau: f64,
    pub engine: EngineParams,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        FeedbackParams {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.25,
            tau: 30.0,
            engine: EngineParams::default(),
        }
    }
}

impl FeedbackParams {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FeedbackError::InvalidParams(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(FeedbackError::InvalidParams(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        self.engine.validate()?;
        Ok(())
    }
}

/// One line of rerank output. Ranks are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc: String,
    pub score: f64,
    pub baseline_rank: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGraph {
    map: MindMap,
    params: FeedbackParams,
}

impl FeedbackGraph {
    pub fn new(params: FeedbackParams) -> Result<Self, FeedbackError> {
        params.validate()?;
        Ok(FeedbackGraph {
            map: MindMap::new(params.engine)?,
            params,
        })
    }

    pub fn map(&self) -> &MindMap {
        &self.map
    }

    pub fn params(&self) -> &FeedbackParams {
        &self.params
    }

    /// Weight of the link between two cells given by kind and text.
    pub fn weight(&self, a: (CellKind, &str), b: (CellKind, &str)) -> Option<f64> {
        let token = |(kind, text): (CellKind, &str)| {
            let prefix = match kind {
                CellKind::Term => TERM_PREFIX,
                CellKind::Query => QUERY_PREFIX,
                CellKind::Document => DOC_PREFIX,
            };
            format!("{prefix}{text}")
        };
        self.map.weight(&token(a), &token(b))
    }

    /// Weight between the query (normalised by [`tokenize`]) and a document.
    pub fn query_document_weight(&self, query: &str, doc: &str) -> Option<f64> {
        let q = query_text(&tokenize(query));
        self.weight((CellKind::Query, &q), (CellKind::Document, doc))
    }

    pub fn ingest_session(&mut self, session: &Session) -> Result<(), FeedbackError> {
        let terms = session.terms();
        let query = cell(QUERY_PREFIX, &query_text(terms))?;
        let term_cells = terms
            .iter()
            .map(|t| cell(TERM_PREFIX, t))
            .collect::<Result<Vec<_>, _>>()?;

        let mut stimulus = Stimulus::new();
        stimulus.cell(query.clone());
        for (i, a) in term_cells.iter().enumerate() {
            for b in &term_cells[i + 1..] {
                stimulus.link(a.clone(), b.clone(), 1.0)?;
            }
        }
        for t in &term_cells {
            stimulus.link(query.clone(), t.clone(), 1.0)?;
        }
        for doc in session.clicks() {
            let gain = 1.0 + (session.dwell(doc) / self.params.tau).min(1.0);
            stimulus.link(query.clone(), cell(DOC_PREFIX, doc)?, gain)?;
        }
        self.map.ingest_stimulus(&stimulus);
        Ok(())
    }

    /// Reorders `baseline` by
    /// `alpha·score + beta·ŵ(q,d) + gamma·Σ sim(q,q')·ŵ(q',d)`, where ŵ is the
    /// query–document weight divided by the largest such weight in the
    /// graph and q' ranges over the other queries sharing a term with q
    /// (Jaccard similarity over term sets). Ties keep baseline order.
    pub fn rerank(
        &self,
        query: &str,
        baseline: &[ScoredDoc],
        params: &FeedbackParams,
    ) -> Result<Vec<RankedDoc>, FeedbackError> {
        if baseline.is_empty() {
            return Err(FeedbackError::EmptyBaseline);
        }
        let terms = tokenize(query);
        let q_token = format!("{QUERY_PREFIX}{}", query_text(&terms));
        let max_qd = self
            .map
            .connections()
            .filter(|c| edge_kind(&c.endpoints) == Some(EdgeKind::QueryDocument))
            .map(|c| c.weight)
            .fold(0.0_f64, f64::max);

        let own_terms: BTreeSet<&str> = terms.iter().map(String::as_str).collect();
        let mut neighbours: BTreeMap<&str, f64> = BTreeMap::new();
        for term in &terms {
            for other in self.map.neighbors(&format!("{TERM_PREFIX}{term}")) {
                let other = other.as_str();
                if other == q_token || cell_kind(other) != Some(CellKind::Query) {
                    continue;
                }
                neighbours.entry(other).or_insert_with(|| {
                    let text = &other[QUERY_PREFIX.len()..];
                    let their_terms: BTreeSet<&str> = text.split(' ').collect();
                    jaccard(&own_terms, &their_terms)
                });
            }
        }

        let normalised = |q: &str, doc: &str| -> f64 {
            if max_qd <= 0.0 {
                return 0.0;
            }
            self.map
                .weight(q, &format!("{DOC_PREFIX}{doc}"))
                .map_or(0.0, |w| w / max_qd)
        };

        let mut ranked: Vec<RankedDoc> = baseline
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let direct = normalised(&q_token, &entry.doc);
                let borrowed: f64 = neighbours
                    .iter()
                    .map(|(q, sim)| sim * normalised(q, &entry.doc))
                    .sum();
                RankedDoc {
                    doc: entry.doc.clone(),
                    score: params.alpha * entry.score
                        + params.beta * direct
                        + params.gamma * borrowed,
                    baseline_rank: i + 1,
                    rank: 0,
                }
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        for (i, doc) in ranked.iter_mut().enumerate() {
            doc.rank = i + 1;
        }
        Ok(ranked)
    }

    /// Strongest term–term neighbours of `term`.
    pub fn related_terms(&self, term: &str, k: usize) -> Vec<(String, f64)> {
        let token = format!("{TERM_PREFIX}{}", term.to_lowercase());
        let mut related: Vec<(String, f64)> = self
            .map
            .neighbors(&token)
            .filter(|n| cell_kind(n.as_str()) == Some(CellKind::Term))
            .filter_map(|n| {
                let w = self.map.weight(&token, n.as_str())?;
                Some((n.as_str()[TERM_PREFIX.len()..].to_string(), w))
            })
            .collect();
        related.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        related.truncate(k);
        related
    }

    #[cfg(test)]
    fn inject_query_document_weight(&mut self, query: &str, doc: &str, weight: f64) -> bool {
        let q = format!("{QUERY_PREFIX}{}", query_text(&tokenize(query)));
        self.map
            .set_connection_weight(&q, &format!("{DOC_PREFIX}{doc}"), weight)
    }
}
