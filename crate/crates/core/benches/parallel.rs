//! Sequential against data-parallel execution on the hot loops: the transfer
//! average, grid image estimates and the shrink check.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use noacim::escape::{grid_image_measure, kb_average};
use noacim::exec::Exec;
use noacim::geometry::IntervalSet;
use noacim::maps::{CircleMap, PatchedMap};
use noacim::scalar::q;
use noacim::slicing::{normalize_sequence, plan, random_sequence, verify_shrink};
use rand::SeedableRng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn averaging(c: &mut Criterion) {
    let f = PatchedMap::unpatched(CircleMap::doubling_with_sine_surrogate(q(1, 10)));
    let mut g = c.benchmark_group("kb_average");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 1 << 14), &exec, |b, &exec| b.iter(|| black_box(kb_average(&f, 8, 1 << 14, 32, exec))));
    }
    g.finish();
}

fn grid_images(c: &mut Criterion) {
    let f = PatchedMap::unpatched(CircleMap::tripling());
    let k = IntervalSet::interval(q(1, 10), q(7, 10));
    let mut g = c.benchmark_group("grid_image_measure");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 1 << 14), &exec, |b, &exec| b.iter(|| black_box(grid_image_measure(&f, &k, 4, 1 << 14, exec))));
    }
    g.finish();
}

fn shrink(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let ls = random_sequence(&mut rng, 3, 20, 2, 10.0);
    let seq = normalize_sequence(&ls).unwrap();
    let p = plan(&seq, &q(3, 10), &q(2, 5)).unwrap();
    let mut g = c.benchmark_group("verify_shrink");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 20_000), &exec, |b, &exec| b.iter(|| black_box(verify_shrink(&seq, &p, 20, 20_000, 1, exec).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, averaging, grid_images, shrink);
criterion_main!(benches);
