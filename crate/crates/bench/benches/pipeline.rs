use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use siv_bench::Fixture;
use siv_core::directions::{train_hyperplane, Space, TrainConfig};
use siv_core::dissect::{dissect_generator, DEFAULT_FRACTION};
use siv_core::intervene::{optimize, InterventionCoeffs, Schedule};
use siv_core::numgrad::UpsampleMode;
use siv_core::pipeline::sample_latent;
use siv_core::stylegen::{build_random_generator, generate, synthesize, ArchSpec};

fn synthesis(c: &mut Criterion) {
    let random = build_random_generator(7, &ArchSpec::default()).unwrap();
    let g = generate(&random, &sample_latent(1, 0, random.arch.d_z)).unwrap();
    c.bench_function("synthesize/random_f32", |b| {
        b.iter(|| synthesize(&random, black_box(&g.s)).unwrap())
    });
    let w64 = random.cast::<f64>();
    c.bench_function("synthesize/random_f64", |b| {
        b.iter(|| synthesize(&w64, black_box(&g.s)).unwrap())
    });
}

fn intervention(c: &mut Criterion) {
    let fx = Fixture::new();
    let problem = fx.problem(0);
    let half = InterventionCoeffs::filled(problem.layout(), 0.5).unwrap();
    c.bench_function("intervene/loss_and_grad", |b| {
        b.iter(|| problem.loss_and_grad(black_box(&half)).unwrap())
    });
    let schedule = Schedule {
        steps: 5,
        ..Schedule::default()
    };
    let mut g = c.benchmark_group("intervene");
    g.sample_size(10);
    g.bench_function("optimize_5_steps_per_layer", |b| {
        b.iter(|| optimize(&problem, &schedule).unwrap())
    });
    g.finish();

    let y = fx.dataset.labels_for(fx.planted.attributes[0].id).unwrap();
    let mut g = c.benchmark_group("directions");
    g.sample_size(10);
    g.bench_function("train_s_600", |b| {
        b.iter(|| train_hyperplane(Space::S, &fx.dataset.s, &y, &TrainConfig::default()).unwrap())
    });
    g.finish();

    let samples: Vec<_> = (0..20)
        .map(|i| sample_latent(7, i, fx.planted.weights.arch.d_z))
        .collect();
    let mut g = c.benchmark_group("dissect");
    g.sample_size(10);
    g.bench_function("planted_20", |b| {
        b.iter(|| {
            dissect_generator(
                &fx.planted.weights,
                &samples,
                &fx.planted.partitions,
                DEFAULT_FRACTION,
                UpsampleMode::Bilinear,
                1,
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, synthesis, intervention);
criterion_main!(benches);
