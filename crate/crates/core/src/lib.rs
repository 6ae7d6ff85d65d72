//! Incremental, adaptive mind-maps over transactional streams.
//!
//! * [`engine`]: the generic weighted cell graph with reinforcement, decay,
//!   death and revival.
//! * [`anima`]: signature store and activation-sum alerting over byte data.
//! * [`feedback`]: search-session graph and click-based re-ranking.
//! * [`biblio`]: co-authorship graphs over sliding year windows.
//! * [`stream`], [`report`], [`snapshot`]: input parsing, output formatting
//!   and persistence.

pub mod anima;
pub mod biblio;
pub mod engine;
pub mod feedback;
pub mod hexfloat;
pub mod report;
pub mod snapshot;
pub mod stream;

pub use anima::{classify, scan_stream, Hit, SigStore, Signature, SignatureRecord, Verdict};
pub use biblio::{
    communities, AuthorPair, BiblioState, CoauthorGraph, PubRecord, TrendLabel, TrendReport,
    WindowConfig,
};
pub use engine::{
    build_mini_network, Cell, CellId, CellStatus, Connection, EdgeKey, EngineError, EngineParams,
    MindMap, MiniNetwork, Stimulus, Transaction,
};
pub use feedback::{CellKind, FeedbackGraph, FeedbackParams, RankedDoc, ScoredDoc, Session};
pub use report::{emit_report, Format};
pub use snapshot::{snapshot_roundtrip, SnapshotError};
pub use stream::parse_transaction_stream;
