//! Data-parallel hot paths under a single-thread rayon pool and under the
//! default pool. Build with `--no-default-features --features onnx` to time
//! the sequential fallback instead; both groups then run the same code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use modguard_core::classifiers::{predict_batch, train_logistic, TrainConfig};
use modguard_core::embedding::{embed_texts, EmbeddingStore, MockBackend};
use modguard_core::projection::{knn_graph, pca, trustworthiness};
use modguard_core::textprep::clean_text;

fn store(n: usize, dim: usize) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data: Vec<f32> = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    for row in data.chunks_mut(dim) {
        let norm = row.iter().map(|x| x * x).sum::<f32>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingStore::from_rows(dim, data).unwrap()
}

fn pools() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().ok();
    vec![("one_thread", one), ("default_pool", None)]
}

fn run<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn bench(c: &mut Criterion) {
    let backend = MockBackend::new(256);
    let texts: Vec<_> = (0..512).map(|i| clean_text(&format!("sample comment number {i} with some words"))).collect();
    let s = store(600, 64);
    let labels: Vec<u8> = (0..s.count()).map(|i| (i % 2) as u8).collect();
    let model = train_logistic(&s, &labels, &TrainConfig { epochs: 5, ..Default::default() }).unwrap();
    let proj = pca(&s, 3).unwrap();

    let mut g = c.benchmark_group("parallel");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("embed_texts_512", name), &(), |b, _| {
            b.iter(|| run(&pool, || embed_texts(&backend, &texts, 32).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("knn_graph_600", name), &(), |b, _| {
            b.iter(|| run(&pool, || knn_graph(&s, 15).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("trustworthiness_600", name), &(), |b, _| {
            b.iter(|| run(&pool, || trustworthiness(&s, &proj, 10).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("predict_batch_600", name), &(), |b, _| {
            b.iter(|| run(&pool, || predict_batch(&model, &s).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
