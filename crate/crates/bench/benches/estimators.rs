use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zoh_bench::{probe, quadratic};
use zoh_core::{
    cge_full, cge_sampled, rge, sample_coordinate_set, sparsification_probabilities, CgeConfig,
    Counted, RgeConfig,
};

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("probabilities");
    for d in [64, 1024, 16384] {
        let g = probe(d, 1);
        group.bench_with_input(BenchmarkId::from_parameter(d), &g, |b, g| {
            b.iter(|| sparsification_probabilities(black_box(g), d / 8).unwrap())
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let d = 256;
    let obj = quadratic(d, 0.1);
    let x = vec![1.0; d];
    let rcfg = RgeConfig::new(16, 1e-3, 2).unwrap();
    let ccfg = CgeConfig::uniform(d, 1e-3, 2).unwrap();
    let p = sparsification_probabilities(&probe(d, 2), 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    c.bench_function("rge_d256_nr16", |b| {
        b.iter(|| {
            let mut counted = Counted::new(&obj);
            rge(&mut counted, black_box(&x), &rcfg, &mut rng).unwrap()
        })
    });
    c.bench_function("cge_full_d256", |b| {
        b.iter(|| {
            let mut counted = Counted::new(&obj);
            cge_full(&mut counted, black_box(&x), &ccfg, &mut rng).unwrap()
        })
    });
    c.bench_function("cge_sampled_d256_nc16", |b| {
        b.iter(|| {
            let coords = sample_coordinate_set(&p, &mut rng);
            let mut counted = Counted::new(&obj);
            cge_sampled(&mut counted, black_box(&x), &ccfg, &coords, &p, &mut rng).unwrap()
        })
    });
}

criterion_group!(benches, solver, estimators);
criterion_main!(benches);
