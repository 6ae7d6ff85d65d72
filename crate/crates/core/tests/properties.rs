mod common;

use std::collections::BTreeSet;

use mindmap::anima::{SigStore, SUM_TOLERANCE};
use mindmap::{
    communities, scan_stream, BiblioState, CoauthorGraph, EngineParams, MindMap, PubRecord,
    Signature, Transaction, WindowConfig,
};
use proptest::collection::vec;
use proptest::prelude::*;

use common::*;

fn item() -> impl Strategy<Value = String> {
    (0u8..12).prop_map(|i| format!("i{i}"))
}

fn transactions(max: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    vec(vec(item(), 1..5), 1..max)
}

fn ingest_all(params: EngineParams, txns: &[Vec<String>]) -> MindMap {
    let mut map = MindMap::new(params).unwrap();
    for (i, items) in txns.iter().enumerate() {
        map.ingest_transaction(&Transaction::from_tokens(format!("t{i}"), items).unwrap());
    }
    map
}

fn signatures() -> impl Strategy<Value = Vec<Vec<u8>>> {
    vec(vec(prop::sample::select(b"abcdefg".to_vec()), 1..8), 1..20)
}

fn store_from(sigs: &[Vec<u8>]) -> SigStore {
    let mut store = SigStore::new();
    for s in sigs {
        store.insert_signature(Signature::new(s.clone()).unwrap());
    }
    store
}

fn records() -> impl Strategy<Value = Vec<PubRecord>> {
    vec((vec(0u8..15, 1..4), 2000i64..2015), 0..60).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (authors, year))| {
                let names: Vec<String> = authors.iter().map(|a| format!("a{a:02}")).collect();
                PubRecord::new(format!("r{i}"), names, year, None).unwrap()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_matches_full_sort(txns in transactions(80), k in 0usize..40) {
        let map = ingest_all(EngineParams::default(), &txns);
        let sorted = sorted_connections(&map);
        prop_assert_eq!(top_k_as_bits(&map, k), &sorted[..k.min(sorted.len())]);
    }

    #[test]
    fn item_order_within_transactions_is_irrelevant(txns in transactions(40)) {
        let reversed: Vec<Vec<String>> =
            txns.iter().map(|t| t.iter().rev().cloned().collect()).collect();
        let a = ingest_all(EngineParams::default(), &txns);
        let b = ingest_all(EngineParams::default(), &reversed);
        prop_assert_eq!(fingerprint(&a).edges, fingerprint(&b).edges);
        prop_assert_eq!(fingerprint(&a).graves, fingerprint(&b).graves);
    }

    #[test]
    fn reinforcement_never_lowers_a_pair(txns in transactions(40), pick in 0usize..100) {
        let mut map = ingest_all(EngineParams::default(), &txns);
        let items = &txns[pick % txns.len()];
        let before: Vec<Option<f64>> = items
            .iter()
            .flat_map(|a| items.iter().map(move |b| (a, b)))
            .filter(|(a, b)| a < b)
            .map(|(a, b)| map.weight(a, b))
            .collect();
        map.ingest_transaction(&Transaction::from_tokens("again", items).unwrap());
        let pairs = items
            .iter()
            .flat_map(|a| items.iter().map(move |b| (a, b)))
            .filter(|(a, b)| a < b);
        for ((a, b), old) in pairs.zip(before) {
            let new = map.weight(a, b).expect("co-occurring pair is connected");
            prop_assert!(new >= old.unwrap_or(0.0), "{a}-{b}: {old:?} -> {new}");
        }
    }

    #[test]
    fn steady_reinforcement_converges(lambda in 0.01f64..0.5, n in 1usize..200) {
        let params = EngineParams { lambda, ..EngineParams::default() };
        let mut map = MindMap::new(params).unwrap();
        let t = Transaction::from_tokens("t", &["a", "b"]).unwrap();
        for _ in 0..n {
            map.ingest_transaction(&t);
        }
        // w_n = (1 - (1-lambda)^n) / lambda
        let closed = (1.0 - (1.0 - lambda).powi(n as i32)) / lambda;
        let got = map.weight("a", "b").unwrap();
        prop_assert!((got - closed).abs() <= 1e-9 * closed, "{got} vs {closed}");
        prop_assert!(got <= 1.0 / lambda + 1e-9);
    }

    #[test]
    fn idle_pair_dies_on_the_closed_form_tick(lambda in 0.01f64..0.5) {
        let params = EngineParams { lambda, ..EngineParams::default() };
        // smallest n with (1-lambda)^n < theta
        let exact = params.theta_death.ln() / (1.0 - lambda).ln();
        prop_assume!((exact - exact.round()).abs() > 1e-6);
        let expected = exact.floor() as u64 + 1;
        let mut map = MindMap::new(params).unwrap();
        map.ingest_transaction(&Transaction::from_tokens("t", &["a", "b"]).unwrap());
        let born = map.tick();
        while map.cell("a").is_some() {
            map.decay_tick();
        }
        prop_assert_eq!(map.tick() - born, expected);
    }

    #[test]
    fn connections_only_join_live_cells(
        txns in transactions(60),
        idle in vec(0usize..30, 1..60),
        lambda in 0.05f64..0.6,
    ) {
        let params = EngineParams { lambda, graveyard_ticks: 10, ..EngineParams::default() };
        let mut map = MindMap::new(params).unwrap();
        for (i, items) in txns.iter().enumerate() {
            map.ingest_transaction(&Transaction::from_tokens(format!("t{i}"), items).unwrap());
            for _ in 0..idle[i % idle.len()] {
                map.decay_tick();
            }
            for c in map.connections() {
                prop_assert!(map.cell(c.endpoints.low().as_str()).is_some());
                prop_assert!(map.cell(c.endpoints.high().as_str()).is_some());
            }
            for g in map.graveyard() {
                prop_assert!(map.cell(g.cell.id.as_str()).is_none());
                prop_assert!(map.tick() - g.died_at <= params.graveyard_ticks);
            }
            for c in map.cells() {
                prop_assert!(c.weight >= params.theta_death);
            }
        }
    }

    #[test]
    fn revival_respects_the_horizon(horizon in 1u64..40, wait in 0u64..60) {
        let params = EngineParams { graveyard_ticks: horizon, ..EngineParams::default() };
        let mut map = MindMap::new(params).unwrap();
        map.ingest_transaction(&Transaction::from_tokens("t", &["a"]).unwrap());
        while map.cell("a").is_some() {
            map.decay_tick();
        }
        let died = map.tick();
        for _ in 1..wait {
            map.decay_tick();
        }
        map.ingest_transaction(&Transaction::from_tokens("u", &["a"]).unwrap());
        let since = map.tick() - died;
        let cell = map.cell("a").unwrap();
        prop_assert_eq!(cell.weight, params.w0);
        if since <= horizon {
            prop_assert_eq!(cell.created_at, 1);
        } else {
            prop_assert_eq!(cell.created_at, map.tick());
        }
    }

    #[test]
    fn snapshot_roundtrip_is_bit_exact(txns in transactions(60), idle in 0usize..120) {
        let mut map = ingest_all(EngineParams { graveyard_ticks: 50, ..EngineParams::default() }, &txns);
        for _ in 0..idle {
            map.decay_tick();
        }
        let back = MindMap::from_snapshot(&map.to_snapshot()).unwrap();
        prop_assert_eq!(fingerprint(&back), fingerprint(&map));
        prop_assert_eq!(back.export_dot(), map.export_dot());
    }

    #[test]
    fn every_unflagged_signature_alerts(sigs in signatures(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order = sigs.clone();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let store = store_from(&order);
        for rec in store.records() {
            let sum = store.activation_sum(rec.path());
            if rec.over_unity() {
                prop_assert!(sum > 1.0 + SUM_TOLERANCE);
            } else {
                prop_assert!((sum - 1.0).abs() <= SUM_TOLERANCE, "{} sums to {sum}", rec.signature());
            }
        }
    }

    #[test]
    fn known_weights_never_change(sigs in signatures(), extra in vec(prop::sample::select(b"abcdefgxyz".to_vec()), 1..10)) {
        let mut store = store_from(&sigs);
        let before: Vec<Option<f64>> = (0..=255u8).map(|s| store.weight(s)).collect();
        store.insert_signature(Signature::new(extra).unwrap());
        for s in 0..=255u8 {
            if let Some(w) = before[s as usize] {
                prop_assert_eq!(store.weight(s), Some(w));
            }
        }
    }

    #[test]
    fn unknown_first_symbol_is_no_alert(sigs in signatures(), tail in vec(any::<u8>(), 0..6)) {
        let store = store_from(&sigs);
        let mut q = vec![b'z'];
        q.extend(tail);
        prop_assert_eq!(store.activation_sum(&q), 0.0);
    }

    #[test]
    fn store_is_compressed(sigs in signatures()) {
        let store = store_from(&sigs);
        let distinct: BTreeSet<&Vec<u8>> = sigs.iter().collect();
        let symbols: BTreeSet<u8> = sigs.iter().flatten().copied().collect();
        prop_assert_eq!(store.cell_count(), symbols.len());
        prop_assert!(store.edge_count() <= distinct.iter().map(|s| s.len() - 1).sum::<usize>());
        prop_assert_eq!(store.record_count(), distinct.len());
    }

    #[test]
    fn scan_matches_window_enumeration(
        sigs in signatures(),
        data in vec(prop::sample::select(b"abcdefgz".to_vec()), 0..200),
        p_min in prop::sample::select(vec![0.0, 0.2, 0.7, 1.0]),
    ) {
        let store = store_from(&sigs);
        let got = hits_view(&scan_stream(&store, &data, p_min).unwrap());
        prop_assert_eq!(&got, &oracle_scan(&store, &data, p_min));
        let parallel = store.scanner().scan_parallel(&data, p_min, 3).unwrap();
        prop_assert_eq!(hits_view(&parallel), got);
    }

    #[test]
    fn sliding_windows_equal_rebuilds(recs in records(), width in 1u32..6, step in 1u32..6) {
        let mut state = BiblioState::new();
        for r in &recs {
            state.ingest_record(r.clone());
        }
        let cfg = WindowConfig::new(width, step).unwrap();
        for (start, graph) in state.windows(1998, 2016, cfg) {
            prop_assert_eq!(graph_view(&graph), oracle_window(&recs, start, start + width as i64));
        }
    }

    #[test]
    fn window_is_order_independent(recs in records(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let cfg = WindowConfig::new(4, 1).unwrap();
        let build = |rs: &[PubRecord]| {
            let mut s = BiblioState::new();
            for r in rs {
                s.ingest_record(r.clone());
            }
            s.snapshot_window(2004, cfg)
        };
        prop_assert_eq!(build(&recs), build(&shuffled));
    }

    #[test]
    fn communities_partition_the_strong_authors(recs in records(), min in 1u32..4) {
        let graph = CoauthorGraph::from_records(&recs);
        let found = communities(&graph, min);
        let mut seen = BTreeSet::new();
        for group in &found {
            prop_assert!(group.len() >= 2);
            for a in group {
                prop_assert!(seen.insert(a.clone()), "{a} in two communities");
            }
        }
        let strong: BTreeSet<String> = graph
            .edges()
            .filter(|(_, m)| *m >= min)
            .flat_map(|(p, _)| [p.first().to_string(), p.second().to_string()])
            .collect();
        prop_assert_eq!(seen, strong);
        for (p, m) in graph.edges().filter(|(_, m)| *m >= min) {
            let home = found.iter().position(|g| g.iter().any(|a| a == p.first()));
            let away = found.iter().position(|g| g.iter().any(|a| a == p.second()));
            prop_assert_eq!(home, away, "multiplicity {} edge split", m);
        }
    }

    #[test]
    fn trend_labels_match_presence_oracle(recs in records(), a in 0u8..15, b in 0u8..15, width in 1u32..4, step in 1u32..4) {
        prop_assume!(a != b);
        let (a, b) = (format!("a{a:02}"), format!("a{b:02}"));
        let mut state = BiblioState::new();
        for r in &recs {
            state.ingest_record(r.clone());
        }
        let cfg = WindowConfig::new(width, step).unwrap();
        let starts: Vec<i64> = (2000..=2014).step_by(step as usize).collect();
        let presence: Vec<bool> = starts
            .iter()
            .map(|&s| {
                recs.iter().any(|r| {
                    s <= r.year() && r.year() < s + width as i64
                        && r.authors().contains(&a) && r.authors().contains(&b)
                })
            })
            .collect();
        let pair = mindmap::AuthorPair::new(a, b).unwrap();
        let got = state.trend(&pair, cfg, 2000, 2014).unwrap();
        prop_assert_eq!(got.as_ref().map_or("absent", |r| r.label.as_str()), oracle_label(&presence));
        if let Some(r) = got {
            prop_assert_eq!(r.presence, presence);
        }
    }
}
