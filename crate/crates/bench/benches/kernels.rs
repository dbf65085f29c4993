use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qml_core::embed::{self, EmbeddingModel, GramMode};
use qml_core::maze::generate_perfect_maze;
use qml_core::qsw::{build_model, evolve, initial_state};
use qml_core::rl::{self, Action, EnvConfig, MazeEnv, Policy};
use qml_core::QswParams;

fn walk(c: &mut Criterion) {
    let maze = generate_perfect_maze(6, 6, 0).unwrap();
    let model = build_model(&maze, QswParams::with_p(0.8).unwrap());
    let rho = evolve(&initial_state(&model), &model, 100).unwrap().states[2].clone();
    c.bench_function("rhs_structured_6x6", |b| b.iter(|| model.rhs(black_box(&rho)).unwrap()));
    c.bench_function("rhs_dense_6x6", |b| b.iter(|| model.rhs_dense(black_box(&rho)).unwrap()));
    c.bench_function("evolve_6x6_t10", |b| {
        b.iter(|| evolve(&initial_state(&model), &model, 2000).unwrap().final_p_sink())
    });
}

fn episode(c: &mut Criterion) {
    let maze = generate_perfect_maze(6, 6, 0).unwrap();
    let config = EnvConfig::new(QswParams::with_p(0.8).unwrap(), 1.0, 8).unwrap();
    let mut env = MazeEnv::new(maze, config);
    c.bench_function("noop_episode_6x6", |b| b.iter(|| env.run_episode(0, |_| Action::NoOp).unwrap()));
    let mut cached = env.clone().with_cache(64);
    c.bench_function("noop_episode_6x6_cached", |b| b.iter(|| rl::rollout(&mut cached, &Policy::noop()).unwrap()));
}

fn embedding(c: &mut Criterion) {
    let data = embed::synth_dataset(20, 0).unwrap();
    let model = EmbeddingModel::random(0);
    c.bench_function("loss_gradient_40pts", |b| {
        b.iter(|| embed::gradient(black_box(&model), data.points()).unwrap())
    });
    c.bench_function("gram_exact_40pts", |b| b.iter(|| embed::gram(&data.xs(), &model, GramMode::Exact).unwrap()));
    c.bench_function("gram_sampled_40pts_1000shots", |b| {
        b.iter(|| embed::gram(&data.xs(), &model, GramMode::Sampled { shots: 1000, seed: 1 }).unwrap())
    });
}

criterion_group!(benches, walk, episode, embedding);
criterion_main!(benches);
