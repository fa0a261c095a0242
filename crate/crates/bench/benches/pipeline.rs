//! Benchmarks for the hot paths: KNN queries (tree vs scan), Shapley
//! aggregation from a coalition table, frame codec, and the federated
//! request loop over the in-process channel.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fedshap_core::dataset::{encode_and_normalize, load_census_csv, split_indices};
use fedshap_core::explain::{explain_federated, CoalitionCache, ExplainConfig};
use fedshap_core::federation::channel::InProcChannel;
use fedshap_core::federation::codec::{decode_frame, encode_frame, MessageBody, ProtocolMessage};
use fedshap_core::federation::guest::GuestParty;
use fedshap_core::federation::host::{federated_predict, FederatedSession, HostParty};
use fedshap_core::rng::SplitMix64;
use fedshap_core::synth::{generate_census_csv, SynthConfig};
use fedshap_core::{
    FeaturePartition, FeatureSchema, KnnModel, NumericDataset, ShapleyGame, WeightingMode,
};

struct Fixture {
    data: NumericDataset,
    train_idx: Vec<usize>,
    model: KnnModel,
    query: Vec<f64>,
}

fn fixture() -> Fixture {
    let schema = FeatureSchema::census();
    let csv = generate_census_csv(&SynthConfig {
        rows: 2000,
        missing_every: 0,
        seed: 9,
    });
    let dir = std::env::temp_dir().join("fedshap-bench");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("corpus.csv");
    std::fs::write(&path, csv).unwrap();
    let raw = load_census_csv(&path, &schema).unwrap();
    let data = encode_and_normalize(&raw).unwrap();
    let (train_idx, test_idx) = split_indices(data.n_rows(), 0.8, 42).unwrap();
    let model = KnnModel::fit(&data.subset(&train_idx), 5).unwrap();
    let query = data.matrix.row(test_idx[0]).to_vec();
    Fixture {
        data,
        train_idx,
        model,
        query,
    }
}

fn bench_knn(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("knn_query");
    group.bench_function("tree", |b| {
        b.iter(|| fx.model.predict_proba(&fx.query).unwrap())
    });
    group.bench_function("scan", |b| {
        b.iter(|| fx.model.predict_proba_scan(&fx.query).unwrap())
    });
    group.finish();
}

fn bench_shapley(c: &mut Criterion) {
    let players = 12;
    let game = ShapleyGame::new(players, WeightingMode::Shapley).unwrap();
    let mut rng = SplitMix64::new(3);
    let table: Vec<f64> = (0..1usize << players).map(|_| rng.next_f64()).collect();
    c.bench_function("shapley_from_table_p12", |b| {
        b.iter(|| game.from_table(&table).unwrap())
    });
}

fn bench_codec(c: &mut Criterion) {
    let mut rng = SplitMix64::new(4);
    let partials: Vec<f64> = (0..2000).map(|_| rng.next_f64()).collect();
    let msg = ProtocolMessage {
        session_id: 0xB0B,
        body: MessageBody::PartialResp { partials },
    };
    let frame = encode_frame(&msg);
    let mut group = c.benchmark_group("codec");
    group.bench_function("encode_resp_2k", |b| b.iter(|| encode_frame(&msg)));
    group.bench_function("decode_resp_2k", |b| {
        b.iter(|| decode_frame(&frame).unwrap())
    });
    group.finish();
}

fn bench_federated(c: &mut Criterion) {
    let fx = fixture();
    let schema = FeatureSchema::census();
    let partition = FeaturePartition::from_guest_names(&schema, &FeatureSchema::GUEST3).unwrap();
    let key = b"bench-key";
    let host = HostParty::new(&fx.data, &fx.train_idx, &partition.host_indices, 5, key).unwrap();
    let guest =
        Arc::new(GuestParty::new(&fx.data, &fx.train_idx, &partition.guest_indices, key).unwrap());
    let instance_id = fx.data.ids[0];
    let token = host.token_for(&instance_id.to_string()).unwrap();
    let reference = {
        let train = fx.data.subset(&fx.train_idx);
        fedshap_core::dataset::compute_reference(&train).unwrap()
    };
    let config = ExplainConfig::new(
        &schema,
        partition.clone(),
        reference,
        WeightingMode::Shapley,
    )
    .unwrap();
    let x_host = host.host_values(instance_id).unwrap().to_vec();

    let mut group = c.benchmark_group("federated");
    group.bench_function("predict", |b| {
        let channel = InProcChannel::new(Arc::clone(&guest));
        let mut session = FederatedSession::open(channel, 1, host.n_train()).unwrap();
        b.iter(|| federated_predict(&host, &mut session, &x_host, token.clone()).unwrap());
    });
    group.sample_size(10);
    group.bench_function("explain_instance", |b| {
        let channel = InProcChannel::new(Arc::clone(&guest));
        let mut session = FederatedSession::open(channel, 2, host.n_train()).unwrap();
        b.iter_batched(
            || CoalitionCache::new(config.n_players()),
            |mut cache| {
                explain_federated(&host, &mut session, instance_id, &config, &mut cache).unwrap()
            },
            BatchSize::PerIteration,
        );
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_knn,
    bench_shapley,
    bench_codec,
    bench_federated
);
criterion_main!(benches);
