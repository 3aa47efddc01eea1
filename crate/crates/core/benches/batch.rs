use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use algrand::algotests::{TestKind, TestParams, TestSuite};
use algrand::bitstream::BitString;
use algrand::generators::{derive_seed, generate, SourceSpec};
use algrand::numtheory::enumerate_carmichael;
use algrand::par;

fn batch(c: &mut Criterion) {
    let suite = TestSuite::new(enumerate_carmichael(1_000_000).unwrap(), TestParams::default());
    let strings: Vec<BitString> = (0..8)
        .map(|i| generate(&SourceSpec::Pcg32 { seed: derive_seed(11, i) }, 1 << 16).unwrap())
        .collect();
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for test in TestKind::ALL {
        let eval = |x: &BitString| suite.evaluate(test, x).ok();
        group.bench_with_input(BenchmarkId::new("sequential", test), &strings, |b, s| {
            b.iter(|| par::map_sequential(s, eval))
        });
        group.bench_with_input(BenchmarkId::new("parallel", test), &strings, |b, s| {
            b.iter(|| par::map(s, eval))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
