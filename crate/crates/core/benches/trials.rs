use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lcakp::experiment::{evaluate_pair, trial_seed, InstanceContext};
use lcakp::generate::{generate, GeneratorSpec, Profile};
use lcakp::instance::{partition, SmallOrder};
use lcakp::par;
use lcakp::rational::Epsilon;
use lcakp::LcaConfig;

fn lca_trials(c: &mut Criterion) {
    let inst = generate(&GeneratorSpec::new(Profile::Mixed, 1000, b"bench".to_vec())).unwrap();
    let ctx = InstanceContext::new("mixed-1000", &inst);
    let eps = Epsilon::parse("1/4").unwrap();
    let cfg = LcaConfig::new(eps.clone());
    let part = partition(&inst, &eps);
    let order = SmallOrder::new(&inst, &part);
    let pair = |t: u64| evaluate_pair(&ctx, &part, &order, &cfg, &trial_seed(b"bench", t)).unwrap().consistent;

    let mut group = c.benchmark_group("lca_pairs");
    group.sample_size(10);
    for trials in [16u64, 64] {
        group.bench_with_input(BenchmarkId::new("sequential", trials), &trials, |b, &n| {
            b.iter(|| black_box(par::map_trials_sequential(n, pair)))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", trials), &trials, |b, &n| {
            b.iter(|| black_box(par::map_trials_parallel(n, pair)))
        });
    }
    group.finish();
}

criterion_group!(benches, lca_trials);
criterion_main!(benches);
