use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use mindmap::{EngineParams, MindMap, SigStore, Signature, Transaction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TXNS: usize = 10_000;

fn five_item_stream(vocab: usize) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..TXNS)
        .map(|i| {
            let toks: Vec<String> = (0..5)
                .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                .collect();
            Transaction::from_tokens(format!("t{i}"), &toks).unwrap()
        })
        .collect()
}

fn ingest(c: &mut Criterion) {
    let mut group = c.benchmark_group("ingest");
    group.sample_size(10);
    for vocab in [200, 2_000, 20_000] {
        let txns = five_item_stream(vocab);
        let items: usize = txns.iter().map(|t| t.items().len()).sum();
        group.throughput(Throughput::Elements(items as u64));
        group.bench_function(format!("5-item/vocab {vocab}"), |b| {
            b.iter_batched(
                || MindMap::new(EngineParams::default()).unwrap(),
                |mut map| {
                    for t in &txns {
                        map.ingest_transaction(t);
                    }
                    map
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = SigStore::new();
    for _ in 0..200 {
        let len = rng.gen_range(3..=12);
        let sig: Vec<u8> = (0..len).map(|_| rng.gen_range(b'a'..=b'h')).collect();
        store.insert_signature(Signature::new(sig).unwrap());
    }
    let data: Vec<u8> = (0..64 * 1024).map(|_| rng.gen_range(b'a'..=b'p')).collect();
    let scanner = store.scanner();
    let mut group = c.benchmark_group("scan");
    group.throughput(Throughput::Bytes(data.len() as u64));
    group.bench_function("64KiB", |b| {
        b.iter(|| scanner.scan(&data, 0.5).unwrap().len())
    });
    group.finish();
}

criterion_group!(benches, ingest, scan);
criterion_main!(benches);
