//! The adaptive mind-map engine.
//!
//! A [`MindMap`] starts empty and grows as transactions arrive. Each
//! transaction is turned into a mini-network (one cell per distinct item,
//! fully connected) and merged into the map: cells and connections that
//! already exist are reinforced, new ones are inserted at the initial weight.
//! Every tick all weights decay multiplicatively; whatever falls below the
//! death threshold is removed, and dead cells wait in a graveyard from which
//! they can be revived for a bounded number of ticks.
//!
//! The per-transaction pipeline runs in a fixed order:
//!
//! 1. advance the tick,
//! 2. decay every cell and connection,
//! 3. build the mini-network,
//! 4. merge it (reinforce or insert, reviving graveyard cells in range),
//! 5. reap everything under the death threshold and purge old graves.

use std::borrow::Borrow;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Longest accepted cell token, in bytes.
pub const MAX_TOKEN_BYTES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("cell token is empty")]
    EmptyToken,
    #[error("cell token is {0} bytes long (limit {MAX_TOKEN_BYTES})")]
    TokenTooLong(usize),
    #[error("transaction {0:?} contains no items")]
    EmptyTransaction(String),
    #[error("connection endpoints must be distinct, got {0:?} twice")]
    SelfLoop(String),
    #[error("invalid engine parameters: {0}")]
    InvalidParams(String),
    #[error("link gain must be finite and positive, got {0}")]
    InvalidGain(f64),
}

/// Identity of a symbolic cell: a non-empty, case-sensitive token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(String);

impl CellId {
    pub fn new(token: impl Into<String>) -> Result<Self, EngineError> {
        let token = token.into();
        if token.is_empty() {
            return Err(EngineError::EmptyToken);
        }
        if token.len() > MAX_TOKEN_BYTES {
            return Err(EngineError::TokenTooLong(token.len()));
        }
        Ok(CellId(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for CellId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for CellId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<&str> for CellId {
    type Error = EngineError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        CellId::new(value)
    }
}

impl TryFrom<String> for CellId {
    type Error = EngineError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CellId::new(value)
    }
}

/// Unordered pair of distinct cells, stored with the smaller token first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey {
    low: CellId,
    high: CellId,
}

impl EdgeKey {
    pub fn new(a: CellId, b: CellId) -> Result<Self, EngineError> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(EdgeKey { low: a, high: b }),
            std::cmp::Ordering::Greater => Ok(EdgeKey { low: b, high: a }),
            std::cmp::Ordering::Equal => Err(EngineError::SelfLoop(a.0)),
        }
    }

    pub fn low(&self) -> &CellId {
        &self.low
    }

    pub fn high(&self) -> &CellId {
        &self.high
    }

    pub fn contains(&self, id: &str) -> bool {
        self.low.as_str() == id || self.high.as_str() == id
    }

    /// The endpoint opposite to `id`, if `id` is one of the endpoints.
    pub fn other(&self, id: &str) -> Option<&CellId> {
        if self.low.as_str() == id {
            Some(&self.high)
        } else if self.high.as_str() == id {
            Some(&self.low)
        } else {
            None
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: CellId,
    pub weight: f64,
    pub status: CellStatus,
    pub last_stimulated: u64,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub endpoints: EdgeKey,
    pub weight: f64,
    pub last_reinforced: u64,
}

/// A dead cell kept for possible revival.
#[derive(Debug, Clone, PartialEq)]
pub struct GraveEntry {
    pub cell: Cell,
    pub died_at: u64,
}

/// One unit of the input stream. Items are deduplicated on construction,
/// keeping first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    id: String,
    items: Vec<CellId>,
    timestamp: Option<u64>,
}

impl Transaction {
    pub fn new(
        id: impl Into<String>,
        items: impl IntoIterator<Item = CellId>,
        timestamp: Option<u64>,
    ) -> Result<Self, EngineError> {
        let id = id.into();
        let mut seen = HashSet::new();
        let items: Vec<CellId> = items
            .into_iter()
            .filter(|item| seen.insert(item.clone()))
            .collect();
        if items.is_empty() {
            return Err(EngineError::EmptyTransaction(id));
        }
        Ok(Transaction {
            id,
            items,
            timestamp,
        })
    }

    /// Convenience constructor from raw tokens.
    pub fn from_tokens<S: AsRef<str>>(
        id: impl Into<String>,
        tokens: &[S],
    ) -> Result<Self, EngineError> {
        let items = tokens
            .iter()
            .map(|t| CellId::new(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Transaction::new(id, items, None)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Distinct items in first-occurrence order.
    pub fn items(&self) -> &[CellId] {
        &self.items
    }

    pub fn timestamp(&self) -> Option<u64> {
        self.timestamp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineParams {
    /// Weight given to newly created (or revived) cells and connections.
    pub w0: f64,
    /// Additive reinforcement per co-occurrence.
    pub eta: f64,
    /// Fraction of weight lost per tick.
    pub lambda: f64,
    /// Anything strictly below this weight dies.
    pub theta_death: f64,
    /// How many ticks a dead cell stays revivable.
    pub graveyard_ticks: u64,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            w0: 1.0,
            eta: 1.0,
            lambda: 0.05,
            theta_death: 0.01,
            graveyard_ticks: 100,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidParams(msg));
        if !(self.w0.is_finite() && self.w0 > 0.0) {
            return bad(format!("w0 must be positive, got {}", self.w0));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1), got {}", self.lambda));
        }
        if !(self.theta_death.is_finite() && self.theta_death >= 0.0) {
            return bad(format!(
                "theta_death must be nonnegative, got {}",
                self.theta_death
            ));
        }
        if self.w0 <= self.theta_death {
            return bad(format!(
                "w0 ({}) must exceed theta_death ({})",
                self.w0, self.theta_death
            ));
        }
        Ok(())
    }
}

/// The complete graph over one transaction's distinct items.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniNetwork {
    pub cells: Vec<Cell>,
    pub connections: Vec<Connection>,
}

pub fn build_mini_network(txn: &Transaction, params: &EngineParams) -> MiniNetwork {
    let cells: Vec<Cell> = txn
        .items()
        .iter()
        .map(|id| Cell {
            id: id.clone(),
            weight: params.w0,
            status: CellStatus::Alive,
            last_stimulated: 0,
            created_at: 0,
        })
        .collect();
    let mut connections = Vec::with_capacity(cells.len() * cells.len().saturating_sub(1) / 2);
    for (i, a) in txn.items().iter().enumerate() {
        for b in &txn.items()[i + 1..] {
            // items are distinct, so the pair is never a self-loop
            let endpoints = EdgeKey::new(a.clone(), b.clone()).expect("distinct items");
            connections.push(Connection {
                endpoints,
                weight: params.w0,
                last_reinforced: 0,
            });
        }
    }
    MiniNetwork { cells, connections }
}

/// Input to a single merge step: which cells fire and which links between
/// them are reinforced, each link with a gain multiplying both its initial
/// weight and its reinforcement.
///
/// Plain transactions use the complete graph with unit gains; the
/// application layers build their own stimuli when only some pairs are
/// meant to be linked.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stimulus {
    cells: Vec<CellId>,
    seen: HashSet<CellId>,
    links: Vec<(EdgeKey, f64)>,
}

impl Stimulus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cell(&mut self, id: CellId) -> &mut Self {
        if self.seen.insert(id.clone()) {
            self.cells.push(id);
        }
        self
    }

    /// Adds a link (and both endpoints). A pair that is already present
    /// keeps its first gain.
    pub fn link(&mut self, a: CellId, b: CellId, gain: f64) -> Result<&mut Self, EngineError> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(EngineError::InvalidGain(gain));
        }
        let key = EdgeKey::new(a.clone(), b.clone())?;
        self.cell(a);
        self.cell(b);
        if !self.links.iter().any(|(k, _)| *k == key) {
            self.links.push((key, gain));
        }
        Ok(self)
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn links(&self) -> &[(EdgeKey, f64)] {
        &self.links
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl From<&MiniNetwork> for Stimulus {
    fn from(net: &MiniNetwork) -> Self {
        let mut stimulus = Stimulus::new();
        for cell in &net.cells {
            stimulus.cell(cell.id.clone());
        }
        stimulus.links = net
            .connections
            .iter()
            .map(|c| (c.endpoints.clone(), 1.0))
            .collect();
        stimulus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MindMap {
    params: EngineParams,
    tick: u64,
    cells: HashMap<CellId, Cell>,
    connections: HashMap<EdgeKey, Connection>,
    graveyard: HashMap<CellId, GraveEntry>,
    adjacency: HashMap<CellId, HashSet<CellId>>,
}

impl MindMap {
    pub fn new(params: EngineParams) -> Result<Self, EngineError> {
        params.validate()?;
        Ok(MindMap {
            params,
            tick: 0,
            cells: HashMap::new(),
            connections: HashMap::new(),
            graveyard: HashMap::new(),
            adjacency: HashMap::new(),
        })
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    /// Replaces the parameters used by subsequent operations.
    pub fn set_params(&mut self, params: EngineParams) -> Result<(), EngineError> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.graveyard.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn connection_count(&self) -> usize {
        self.connections.len()
    }

    pub fn cell(&self, id: &str) -> Option<&Cell> {
        self.cells.get(id)
    }

    pub fn grave(&self, id: &str) -> Option<&GraveEntry> {
        self.graveyard.get(id)
    }

    pub fn connection(&self, a: &str, b: &str) -> Option<&Connection> {
        let key = EdgeKey::new(CellId::new(a).ok()?, CellId::new(b).ok()?).ok()?;
        self.connections.get(&key)
    }

    #[cfg(test)]
    pub(crate) fn set_connection_weight(&mut self, a: &str, b: &str, weight: f64) -> bool {
        let Ok(key) = EdgeKey::new(CellId::new(a).unwrap(), CellId::new(b).unwrap()) else {
            return false;
        };
        match self.connections.get_mut(&key) {
            Some(conn) => {
                conn.weight = weight;
                true
            }
            None => false,
        }
    }

    /// Weight of the connection between `a` and `b`, if it is alive.
    pub fn weight(&self, a: &str, b: &str) -> Option<f64> {
        self.connection(a, b).map(|c| c.weight)
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    pub fn connections(&self) -> impl Iterator<Item = &Connection> {
        self.connections.values()
    }

    pub fn graveyard(&self) -> impl Iterator<Item = &GraveEntry> {
        self.graveyard.values()
    }

    /// Alive cells directly connected to `id`.
    pub fn neighbors<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a CellId> + 'a {
        self.adjacency.get(id).into_iter().flatten()
    }

    pub fn ingest_transaction(&mut self, txn: &Transaction) {
        let mini = build_mini_network(txn, &self.params);
        self.ingest_stimulus(&Stimulus::from(&mini));
    }

    /// Runs one full merge step for an arbitrary stimulus.
    pub fn ingest_stimulus(&mut self, stimulus: &Stimulus) {
        self.tick += 1;
        self.apply_decay();
        for id in stimulus.cells() {
            self.stimulate_cell(id);
        }
        let tick = self.tick;
        for (key, gain) in stimulus.links() {
            match self.connections.get_mut(key) {
                Some(conn) => {
                    conn.weight += self.params.eta * gain;
                    conn.last_reinforced = tick;
                }
                None => self.insert_connection(Connection {
                    endpoints: key.clone(),
                    weight: self.params.w0 * gain,
                    last_reinforced: tick,
                }),
            }
        }
        self.reap();
    }

    /// One idle tick: decay, death, graveyard purge.
    pub fn decay_tick(&mut self) {
        self.tick += 1;
        self.apply_decay();
        self.reap();
    }

    /// The `k` strongest connections, heaviest first. Equal weights are
    /// ordered by the endpoint tokens.
    pub fn retrieve_top_k(&self, k: usize) -> Vec<(EdgeKey, f64)> {
        let mut all: Vec<(&EdgeKey, f64)> = self
            .connections
            .iter()
            .map(|(key, conn)| (key, conn.weight))
            .collect();
        let by_strength = |a: &(&EdgeKey, f64), b: &(&EdgeKey, f64)| {
            b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
        };
        if k < all.len() {
            if k == 0 {
                return Vec::new();
            }
            all.select_nth_unstable_by(k - 1, by_strength);
            all.truncate(k);
        }
        all.sort_unstable_by(by_strength);
        all.into_iter().map(|(key, w)| (key.clone(), w)).collect()
    }

    /// Alive cells within `depth` hops of `id` plus every connection among
    /// them. The result carries this map's params and tick and an empty
    /// graveyard.
    pub fn neighborhood(&self, id: &str, depth: usize) -> MindMap {
        let mut sub = MindMap {
            params: self.params,
            tick: self.tick,
            cells: HashMap::new(),
            connections: HashMap::new(),
            graveyard: HashMap::new(),
            adjacency: HashMap::new(),
        };
        let Some(start) = self.cells.get(id) else {
            return sub;
        };
        let mut reached: HashSet<&CellId> = HashSet::from([&start.id]);
        let mut frontier = VecDeque::from([(&start.id, 0usize)]);
        while let Some((current, dist)) = frontier.pop_front() {
            if dist == depth {
                continue;
            }
            for next in self.neighbors(current.as_str()) {
                if reached.insert(next) {
                    frontier.push_back((next, dist + 1));
                }
            }
        }
        for cell_id in &reached {
            sub.cells
                .insert((*cell_id).clone(), self.cells[*cell_id].clone());
        }
        for cell_id in &reached {
            for next in self.neighbors(cell_id.as_str()) {
                if cell_id.as_str() < next.as_str() && reached.contains(next) {
                    let key = EdgeKey::new((*cell_id).clone(), next.clone()).expect("distinct");
                    sub.insert_connection(self.connections[&key].clone());
                }
            }
        }
        sub
    }

    /// Graphviz text for the alive part of the map. Nodes are sorted by
    /// token, edges by endpoint pair, weights printed with four decimals.
    pub fn export_dot(&self) -> String {
        let mut out = String::from("graph mindmap {\n");
        let mut ids: Vec<&CellId> = self.cells.keys().collect();
        ids.sort();
        for id in ids {
            out.push_str(&format!("  \"{}\";\n", dot_escape(id.as_str())));
        }
        let mut edges: Vec<&Connection> = self.connections.values().collect();
        edges.sort_by(|a, b| a.endpoints.cmp(&b.endpoints));
        for conn in edges {
            out.push_str(&format!(
                "  \"{}\" -- \"{}\" [label=\"{:.4}\"];\n",
                dot_escape(conn.endpoints.low().as_str()),
                dot_escape(conn.endpoints.high().as_str()),
                conn.weight
            ));
        }
        out.push_str("}\n");
        out
    }

    pub(crate) fn from_parts(
        params: EngineParams,
        tick: u64,
        cells: Vec<Cell>,
        connections: Vec<Connection>,
        graves: Vec<GraveEntry>,
    ) -> MindMap {
        let mut map = MindMap {
            params,
            tick,
            cells: cells.into_iter().map(|c| (c.id.clone(), c)).collect(),
            connections: HashMap::new(),
            graveyard: graves.into_iter().map(|g| (g.cell.id.clone(), g)).collect(),
            adjacency: HashMap::new(),
        };
        for conn in connections {
            map.insert_connection(conn);
        }
        map
    }

    fn apply_decay(&mut self) {
        if self.params.lambda == 0.0 {
            return;
        }
        let keep = 1.0 - self.params.lambda;
        for cell in self.cells.values_mut() {
            cell.weight *= keep;
        }
        for conn in self.connections.values_mut() {
            conn.weight *= keep;
        }
    }

    fn stimulate_cell(&mut self, id: &CellId) {
        let tick = self.tick;
        if let Some(cell) = self.cells.get_mut(id) {
            cell.weight += self.params.eta;
            cell.last_stimulated = tick;
            return;
        }
        let created_at = match self.graveyard.remove(id) {
            Some(grave) if tick - grave.died_at <= self.params.graveyard_ticks => {
                grave.cell.created_at
            }
            _ => tick,
        };
        self.cells.insert(
            id.clone(),
            Cell {
                id: id.clone(),
                weight: self.params.w0,
                status: CellStatus::Alive,
                last_stimulated: tick,
                created_at,
            },
        );
    }

    fn insert_connection(&mut self, conn: Connection) {
        let key = conn.endpoints.clone();
        self.adjacency
            .entry(key.low.clone())
            .or_default()
            .insert(key.high.clone());
        self.adjacency
            .entry(key.high.clone())
            .or_default()
            .insert(key.low.clone());
        self.connections.insert(key, conn);
    }

    fn remove_connection(&mut self, key: &EdgeKey) {
        if self.connections.remove(key).is_none() {
            return;
        }
        for (from, to) in [(&key.low, &key.high), (&key.high, &key.low)] {
            if let Some(set) = self.adjacency.get_mut(from) {
                set.remove(to);
                if set.is_empty() {
                    self.adjacency.remove(from);
                }
            }
        }
    }

    fn reap(&mut self) {
        let theta = self.params.theta_death;
        let weak: Vec<EdgeKey> = self
            .connections
            .iter()
            .filter(|(_, c)| c.weight < theta)
            .map(|(k, _)| k.clone())
            .collect();
        for key in &weak {
            self.remove_connection(key);
        }

        let dying: Vec<CellId> = self
            .cells
            .values()
            .filter(|c| c.weight < theta)
            .map(|c| c.id.clone())
            .collect();
        for id in dying {
            let incident: Vec<EdgeKey> = self
                .neighbors(id.as_str())
                .map(|other| EdgeKey::new(id.clone(), other.clone()).expect("distinct"))
                .collect();
            for key in &incident {
                self.remove_connection(key);
            }
            if let Some(mut cell) = self.cells.remove(&id) {
                cell.status = CellStatus::Dead;
                self.graveyard.insert(
                    id,
                    GraveEntry {
                        cell,
                        died_at: self.tick,
                    },
                );
            }
        }

        let (tick, horizon) = (self.tick, self.params.graveyard_ticks);
        self.graveyard
            .retain(|_, grave| tick - grave.died_at <= horizon);
    }
}

fn dot_escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for ch in token.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(ch),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn txn(items: &[&str]) -> Transaction {
        Transaction::from_tokens("t", items).unwrap()
    }

    fn map() -> MindMap {
        MindMap::new(EngineParams::default()).unwrap()
    }

    #[test]
    fn cell_id_limits() {
        assert_eq!(CellId::new(""), Err(EngineError::EmptyToken));
        assert!(CellId::new("x".repeat(256)).is_ok());
        assert_eq!(
            CellId::new("x".repeat(257)),
            Err(EngineError::TokenTooLong(257))
        );
        assert_ne!(CellId::new("a").unwrap(), CellId::new("A").unwrap());
    }

    #[test]
    fn empty_transaction_rejected() {
        let err = Transaction::new("t9", Vec::new(), None).unwrap_err();
        assert_eq!(err, EngineError::EmptyTransaction("t9".into()));
    }

    #[test]
    fn params_validation() {
        let mut p = EngineParams::default();
        assert!(p.validate().is_ok());
        p.lambda = 1.0;
        assert!(p.validate().is_err());
        p = EngineParams {
            w0: 0.01,
            ..EngineParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn mini_network_triangle() {
        let net = build_mini_network(&txn(&["A", "B", "C"]), &EngineParams::default());
        assert_eq!(net.cells.len(), 3);
        assert_eq!(net.connections.len(), 3);
        assert!(net.cells.iter().all(|c| c.weight == 1.0));
        assert!(net.connections.iter().all(|c| c.weight == 1.0));
    }

    #[test]
    fn mini_network_singleton() {
        let net = build_mini_network(&txn(&["A"]), &EngineParams::default());
        assert_eq!(net.cells.len(), 1);
        assert!(net.connections.is_empty());
    }

    #[test]
    fn mini_network_dedup_matches_set_oracle() {
        let raw = ["A", "B", "A"];
        let net = build_mini_network(&txn(&raw), &EngineParams::default());
        let distinct: BTreeSet<&str> = raw.iter().copied().collect();
        let oracle_pairs: BTreeSet<(&str, &str)> = distinct
            .iter()
            .flat_map(|a| distinct.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a < b)
            .collect();
        let got: BTreeSet<(&str, &str)> = net
            .connections
            .iter()
            .map(|c| (c.endpoints.low().as_str(), c.endpoints.high().as_str()))
            .collect();
        assert_eq!(net.cells.len(), distinct.len());
        assert_eq!(got, oracle_pairs);
    }

    #[test]
    fn ingest_replay() {
        let mut m = map();
        m.ingest_transaction(&txn(&["A", "B"]));
        assert_eq!(m.tick(), 1);
        assert_eq!(m.weight("A", "B"), Some(1.0));

        m.ingest_transaction(&txn(&["A", "B"]));
        let expected = 1.0 * 0.95 + 1.0;
        assert_eq!(m.weight("A", "B"), Some(expected));

        m.ingest_transaction(&txn(&["A", "C"]));
        assert!((m.weight("A", "B").unwrap() - 1.8525).abs() < 1e-12);
        assert_eq!(m.weight("A", "C"), Some(1.0));
        for id in ["A", "B", "C"] {
            assert_eq!(m.cell(id).unwrap().status, CellStatus::Alive);
        }
    }

    #[test]
    fn decay_once() {
        let mut m = map();
        m.ingest_transaction(&txn(&["A", "B"]));
        m.decay_tick();
        assert_eq!(m.weight("A", "B"), Some(0.95));
        assert_eq!(m.tick(), 2);
    }

    #[test]
    fn zero_lambda_keeps_weights() {
        let mut m = MindMap::new(EngineParams {
            lambda: 0.0,
            ..EngineParams::default()
        })
        .unwrap();
        m.ingest_transaction(&txn(&["A", "B"]));
        for _ in 0..10_000 {
            m.decay_tick();
        }
        assert_eq!(m.weight("A", "B"), Some(1.0));
        assert_eq!(m.cell("A").unwrap().weight, 1.0);
    }

    #[test]
    fn death_after_ninety_idle_ticks() {
        let mut m = map();
        m.ingest_transaction(&txn(&["A", "B"]));
        let stimulated = m.tick();
        while m.cell("A").is_some() {
            m.decay_tick();
        }
        assert_eq!(m.tick() - stimulated, 90);
        let grave = m.grave("A").unwrap();
        assert_eq!(grave.died_at, m.tick());
        assert_eq!(grave.cell.status, CellStatus::Dead);
        assert!(grave.cell.weight < 0.01);
        assert_eq!(m.connection_count(), 0);
    }

    #[test]
    fn revival_keeps_creation_tick() {
        let mut m = map();
        m.ingest_transaction(&txn(&["A", "B"]));
        while m.cell("A").is_some() {
            m.decay_tick();
        }
        m.ingest_transaction(&txn(&["A"]));
        let cell = m.cell("A").unwrap();
        assert_eq!(cell.weight, 1.0);
        assert_eq!(cell.created_at, 1);
        assert!(m.grave("A").is_none());
    }

    #[test]
    fn purged_cell_comes_back_fresh() {
        let mut m = MindMap::new(EngineParams {
            graveyard_ticks: 3,
            ..EngineParams::default()
        })
        .unwrap();
        m.ingest_transaction(&txn(&["A"]));
        while m.cell("A").is_some() {
            m.decay_tick();
        }
        for _ in 0..4 {
            m.decay_tick();
        }
        assert!(m.grave("A").is_none());
        m.ingest_transaction(&txn(&["A"]));
        assert_eq!(m.cell("A").unwrap().created_at, m.tick());
    }

    #[test]
    fn weak_connection_dies_before_its_cells() {
        let mut m = map();
        m.ingest_transaction(&txn(&["A", "B"]));
        // keep both cells alive without ever reinforcing the pair
        for _ in 0..200 {
            m.ingest_transaction(&txn(&["A"]));
            m.ingest_transaction(&txn(&["B"]));
        }
        assert!(m.cell("A").is_some());
        assert!(m.cell("B").is_some());
        assert_eq!(m.weight("A", "B"), None);
        assert_eq!(m.neighbors("A").count(), 0);
    }

    #[test]
    fn top_k_on_empty_map() {
        assert!(map().retrieve_top_k(5).is_empty());
    }

    #[test]
    fn top_k_tie_break_is_lexicographic() {
        let mut m = map();
        m.ingest_transaction(&txn(&["C", "D", "A", "B"]));
        let top: Vec<String> = m
            .retrieve_top_k(3)
            .into_iter()
            .map(|(k, _)| format!("{}{}", k.low(), k.high()))
            .collect();
        assert_eq!(top, ["AB", "AC", "AD"]);
    }

    #[test]
    fn neighborhood_cases() {
        let mut m = map();
        m.ingest_transaction(&txn(&["A", "B"]));
        m.ingest_transaction(&txn(&["A", "C"]));
        m.ingest_transaction(&txn(&["C", "D"]));

        let unknown = m.neighborhood("Z", 3);
        assert_eq!(unknown.cell_count(), 0);

        let zero = m.neighborhood("A", 0);
        assert_eq!(zero.cell_count(), 1);
        assert_eq!(zero.connection_count(), 0);

        let one = m.neighborhood("A", 1);
        let ids: BTreeSet<&str> = one.cells().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, BTreeSet::from(["A", "B", "C"]));
        assert_eq!(one.connection_count(), 2);
        assert_eq!(one.weight("A", "B"), m.weight("A", "B"));

        let two = m.neighborhood("A", 2);
        assert_eq!(two.cell_count(), 4);
        assert_eq!(two.connection_count(), 3);
    }

    #[test]
    fn dot_output_contract() {
        let empty = map().export_dot();
        assert_eq!(empty, "graph mindmap {\n}\n");

        let mut m = map();
        m.ingest_transaction(&txn(&["B", "A"]));
        let dot = m.export_dot();
        let edge_lines: Vec<&str> = dot.lines().filter(|l| l.contains(" -- ")).collect();
        assert_eq!(edge_lines, ["  \"A\" -- \"B\" [label=\"1.0000\"];"]);
        assert_eq!(dot, m.export_dot());
    }

    #[test]
    fn dot_escapes_quotes() {
        let mut m = map();
        m.ingest_transaction(&txn(&["say \"hi\"", "back\\slash"]));
        let dot = m.export_dot();
        assert!(dot.contains(r#""say \"hi\"""#));
        assert!(dot.contains(r#""back\\slash""#));
    }

    #[test]
    fn stimulus_rejects_bad_links() {
        let a = CellId::new("a").unwrap();
        let mut s = Stimulus::new();
        assert!(matches!(
            s.link(a.clone(), a.clone(), 1.0),
            Err(EngineError::SelfLoop(_))
        ));
        assert!(matches!(
            s.link(a.clone(), CellId::new("b").unwrap(), f64::NAN),
            Err(EngineError::InvalidGain(_))
        ));
    }

    #[test]
    fn stimulus_gain_scales_insert_and_reinforce() {
        let mut m = map();
        let mut s = Stimulus::new();
        s.link(CellId::new("q").unwrap(), CellId::new("d").unwrap(), 2.0)
            .unwrap();
        m.ingest_stimulus(&s);
        assert_eq!(m.weight("q", "d"), Some(2.0));
        m.ingest_stimulus(&s);
        assert_eq!(m.weight("q", "d"), Some(2.0 * 0.95 + 2.0));
    }
}
