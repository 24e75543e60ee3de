use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fedmon_core::store::{KeyFields, QueryFilter, Store};
use fedmon_core::Document;
use rand::{Rng, SeedableRng};

fn populated_store(records: usize) -> Store {
    let store = Store::new();
    let mut rng = rand_pcg::Pcg64::seed_from_u64(1);
    for i in 0..records {
        let node = format!("node{:04}", rng.gen_range(0..600));
        let keys = KeyFields::new("ganglia", "metrics")
            .site(format!("site{:02}", i % 5))
            .resource(&node);
        let doc = Document::new(serde_json::json!({"host": {"@name": node, "v": i}}));
        store.append_series(doc, keys);
    }
    store
}

fn bench_store(c: &mut Criterion) {
    let store = populated_store(20_000);
    let by_source = QueryFilter::new().source("ganglia").limit(100);
    let by_resource = QueryFilter::new().source("ganglia").resource("node0042").limit(100);
    let latest = QueryFilter::new().source("ganglia").latest_only();

    c.bench_function("upsert latest", |b| {
        let keys = KeyFields::new("glue2", "partition").site("site00").resource("part00");
        let doc = Document::new(serde_json::json!({"partition": {"@name": "part00"}}));
        b.iter(|| store.upsert_latest(black_box(doc.clone()), black_box(keys.clone())))
    });
    c.bench_function("query by source limit 100", |b| {
        b.iter(|| black_box(store.query(&by_source).unwrap()))
    });
    c.bench_function("query by resource", |b| {
        b.iter(|| black_box(store.query(&by_resource).unwrap()))
    });
    c.bench_function("query latest per node", |b| {
        b.iter(|| black_box(store.query(&latest).unwrap()))
    });
}

criterion_group!(benches, bench_store);
criterion_main!(benches);
