//! Brute-force oracles shared by the integration suites. None of these go
//! through the code paths they are used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use mindmap::anima::{SigStore, SUM_TOLERANCE};
use mindmap::{MindMap, PubRecord};
use rand::seq::SliceRandom;
use rand::Rng;

/// Every connection, heaviest first, ties by endpoint tokens.
pub fn sorted_connections(map: &MindMap) -> Vec<(String, String, u64)> {
    let mut all: Vec<(String, String, f64)> = map
        .connections()
        .map(|c| {
            let (a, b) = (
                c.endpoints.low().to_string(),
                c.endpoints.high().to_string(),
            );
            (a, b, c.weight)
        })
        .collect();
    all.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap()
            .then_with(|| x.0.cmp(&y.0))
            .then_with(|| x.1.cmp(&y.1))
    });
    all.into_iter()
        .map(|(a, b, w)| (a, b, w.to_bits()))
        .collect()
}

pub fn top_k_as_bits(map: &MindMap, k: usize) -> Vec<(String, String, u64)> {
    map.retrieve_top_k(k)
        .into_iter()
        .map(|(key, w)| (key.low().to_string(), key.high().to_string(), w.to_bits()))
        .collect()
}

/// Field-by-field view of a map with weights as raw bits.
#[derive(Debug, PartialEq, Eq)]
pub struct MapFingerprint {
    pub tick: u64,
    pub params: [u64; 5],
    pub cells: BTreeMap<String, (u64, u64, u64)>,
    pub edges: BTreeMap<(String, String), (u64, u64)>,
    pub graves: BTreeMap<String, (u64, u64, u64, u64)>,
}

pub fn fingerprint(map: &MindMap) -> MapFingerprint {
    let p = map.params();
    MapFingerprint {
        tick: map.tick(),
        params: [
            p.w0.to_bits(),
            p.eta.to_bits(),
            p.lambda.to_bits(),
            p.theta_death.to_bits(),
            p.graveyard_ticks,
        ],
        cells: map
            .cells()
            .map(|c| {
                (
                    c.id.to_string(),
                    (c.weight.to_bits(), c.last_stimulated, c.created_at),
                )
            })
            .collect(),
        edges: map
            .connections()
            .map(|c| {
                (
                    (
                        c.endpoints.low().to_string(),
                        c.endpoints.high().to_string(),
                    ),
                    (c.weight.to_bits(), c.last_reinforced),
                )
            })
            .collect(),
        graves: map
            .graveyard()
            .map(|g| {
                (
                    g.cell.id.to_string(),
                    (
                        g.cell.weight.to_bits(),
                        g.cell.last_stimulated,
                        g.cell.created_at,
                        g.died_at,
                    ),
                )
            })
            .collect(),
    }
}

/// Activation sum recomputed from the store's public accessors.
pub fn oracle_activation(store: &SigStore, window: &[u8]) -> f64 {
    let mut sum = 0.0;
    for (i, &s) in window.iter().enumerate() {
        let Some(w) = store.weight(s) else { break };
        if i > 0 && !store.has_edge(window[i - 1], s) {
            break;
        }
        sum += w;
    }
    if let Some(rec) = store.record(window) {
        sum += rec.residual();
    }
    sum
}

/// (offset, length, tag, probability bits) for every reportable window.
pub fn oracle_scan(
    store: &SigStore,
    data: &[u8],
    p_min: f64,
) -> Vec<(usize, usize, &'static str, Option<u64>)> {
    let mut out = Vec::new();
    if store.record_count() == 0 {
        return out;
    }
    for offset in 0..data.len() {
        for len in 1..=store.max_len().min(data.len() - offset) {
            let sum = oracle_activation(store, &data[offset..offset + len]);
            if (sum - 1.0).abs() <= SUM_TOLERANCE {
                out.push((offset, len, "alert", None));
            } else if sum > SUM_TOLERANCE && sum < 1.0 && sum >= p_min {
                out.push((offset, len, "probabilistic", Some(sum.to_bits())));
            }
        }
    }
    out
}

pub fn hits_view(hits: &[mindmap::Hit]) -> Vec<(usize, usize, &'static str, Option<u64>)> {
    hits.iter()
        .map(|h| {
            (
                h.offset,
                h.length,
                h.verdict.tag(),
                h.verdict.probability().map(f64::to_bits),
            )
        })
        .collect()
}

pub fn random_signature(
    rng: &mut impl Rng,
    alphabet: &[u8],
    len: std::ops::RangeInclusive<usize>,
) -> Vec<u8> {
    let n = rng.gen_range(len);
    (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// Pair multiplicities and author set of the records whose year lies in
/// `[start, end)`, counted record by record.
pub fn oracle_window(
    records: &[PubRecord],
    start: i64,
    end: i64,
) -> (BTreeSet<String>, BTreeMap<(String, String), u32>) {
    let mut authors = BTreeSet::new();
    let mut edges = BTreeMap::new();
    for rec in records
        .iter()
        .filter(|r| start <= r.year() && r.year() < end)
    {
        let names = rec.authors();
        authors.extend(names.iter().cloned());
        for a in names {
            for b in names {
                if a < b {
                    *edges.entry((a.clone(), b.clone())).or_insert(0) += 1;
                }
            }
        }
    }
    (authors, edges)
}

pub fn graph_view(
    g: &mindmap::CoauthorGraph,
) -> (BTreeSet<String>, BTreeMap<(String, String), u32>) {
    (
        g.authors().map(str::to_string).collect(),
        g.edges()
            .map(|(p, m)| ((p.first().to_string(), p.second().to_string()), m))
            .collect(),
    )
}

/// Trend label straight from a presence vector.
pub fn oracle_label(presence: &[bool]) -> &'static str {
    let hits: Vec<usize> = (0..presence.len()).filter(|&i| presence[i]).collect();
    match hits.len() {
        0 => "absent",
        n if n == presence.len() => "constant",
        1 => "visiting",
        n if hits[n - 1] - hits[0] + 1 != n => "recurring",
        _ => "constant",
    }
}

pub fn synthetic_records(
    rng: &mut impl Rng,
    count: usize,
    years: std::ops::Range<i64>,
    authors: usize,
) -> Vec<PubRecord> {
    (0..count)
        .map(|i| {
            let n = rng.gen_range(1..=4);
            let names: Vec<String> = (0..n)
                .map(|_| format!("author{:03}", rng.gen_range(0..authors)))
                .collect();
            PubRecord::new(format!("rec{i}"), names, rng.gen_range(years.clone()), None).unwrap()
        })
        .collect()
}
