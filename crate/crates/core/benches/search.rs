use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use recallfeed::dense::{QueryVector, VectorStore};
use recallfeed::par::Execution;

fn store(n: usize, dim: usize) -> VectorStore {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = VectorStore::new(dim);
    for i in 0..n {
        let v: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        s.insert(&format!("u{i}"), &format!("d{}", i / 3), &v).unwrap();
    }
    s
}

fn exact_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_search");
    for n in [10_000, 100_000] {
        let s = store(n, 64);
        let q = QueryVector::from(s.vector(0));
        let mask = s.full_mask();
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| s.exact_search_masked(&q, &mask, 200, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, exact_search);
criterion_main!(benches);
