//! Data-parallel kernels against their sequential fallback.
//!
//! ```text
//! cargo bench -p docrel-core --bench parallel_vs_sequential
//! ```
//!
//! Built with `--no-default-features` both arms run sequentially.

use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use docrel_core::corpus::{load_split, Document, Split};
use docrel_core::icl::knn_graph;
use docrel_core::llm::{Embedder, HashMockEmbedder, ReplayBackend};
use docrel_core::par::Parallelism;
use docrel_core::pipeline::{run_pipeline, PipelineInputs, RunConfig};
use docrel_core::relmeta::RelationRegistry;
use docrel_core::verifier::lof::lof_scores;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn modes() -> [(&'static str, Parallelism); 2] {
    [("sequential", Parallelism::Sequential), ("parallel", Parallelism::default())]
}

fn lof(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("lof");
    for n in [100usize, 400] {
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        for (name, par) in modes() {
            group.bench_with_input(BenchmarkId::new(name, n), &points, |b, pts| {
                b.iter(|| lof_scores(black_box(pts), 5, par).unwrap())
            });
        }
    }
    group.finish();
}

fn knn(c: &mut Criterion) {
    let embedder = HashMockEmbedder::new(0);
    let texts: Vec<String> = (0..1500).map(|i| format!("document {i} about topic {}", i % 37)).collect();
    let vectors = embedder.embed(&texts).unwrap();
    let mut group = c.benchmark_group("knn_graph");
    group.sample_size(10);
    for (name, par) in modes() {
        group.bench_function(name, |b| b.iter(|| knn_graph(black_box(&vectors), 10, par)));
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e");
    let train = load_split(&fixtures.join("train.json"), Split::Train).unwrap();
    let test = load_split(&fixtures.join("test.json"), Split::Test).unwrap();
    let replay = ReplayBackend::load(&fixtures.join("replay.jsonl")).unwrap();
    let registry = RelationRegistry::builtin();
    let embedder = HashMockEmbedder::new(0);
    let docs: Vec<&Document> = test.iter().collect();
    let pool: Vec<&Document> = train.iter().collect();
    let inputs = PipelineInputs {
        docs: &docs,
        pool: &pool,
        registry: &registry,
        generator: &replay,
        embedder: &embedder,
    };
    let mut group = c.benchmark_group("pipeline_replay");
    group.sample_size(10);
    for (name, concurrency) in [("sequential", 1usize), ("parallel", 8)] {
        let config = RunConfig {
            concurrency,
            ..RunConfig::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| {
                let dir = tempfile::tempdir().unwrap();
                run_pipeline(&config, &inputs, dir.path(), serde_json::Value::Null).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, lof, knn, pipeline);
criterion_main!(benches);
