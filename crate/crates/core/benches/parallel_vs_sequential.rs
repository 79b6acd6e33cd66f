use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hispo::envs::{expert_episode, make_env, ExpertConfig, MazeLayout, TaskTransform};
use hispo::exec::{map_indices_par, map_indices_seq};
use hispo::gcrl::{init_hbc, HbcShapes, TrainConfig};
use hispo::metrics::{eval_start, rollout};
use hispo::nnet::{init_params, loss_and_grad, Batch, Mode};
use hispo::rng::child;
use hispo::subspace::sample_simplex;

type Mapper = fn(usize, &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64>;

fn seq(n: usize, f: &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64> {
    map_indices_seq(n, f)
}

fn par(n: usize, f: &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64> {
    map_indices_par(n, f)
}

const MODES: [(&str, Mapper); 2] = [("sequential", seq), ("parallel", par)];

fn dataset_generation(c: &mut Criterion) {
    let env = make_env(MazeLayout::builtin("U").unwrap(), TaskTransform::N, 300, 0).unwrap();
    let expert = ExpertConfig::default();
    let job = |i: usize| expert_episode(&env, &expert, &mut child(0, &[i as u64])).map_or(0.0, |e| e.len() as f64);
    let mut g = c.benchmark_group("dataset_generation");
    for (name, map) in MODES {
        g.bench_function(BenchmarkId::new(name, 32), |b| b.iter(|| map(32, &job)));
    }
    g.finish();
}

fn candidate_evaluation(c: &mut Criterion) {
    let shapes = HbcShapes::with_widths(32, 64, 0.0);
    let shape = &shapes.low;
    let anchors: Vec<Vec<f64>> = (0..3).map(|k| init_params(shape, k).values).collect();
    let mut batch = Batch::new(shape.input_dim, shape.output_dim);
    for i in 0..512 {
        let x: Vec<f64> = (0..shape.input_dim).map(|d| ((i * 7 + d) % 13) as f64 / 13.0 - 0.5).collect();
        batch.push(&x, &vec![0.1; shape.output_dim]);
    }
    let job = |i: usize| {
        let alpha = sample_simplex(anchors.len(), &mut child(1, &[i as u64]));
        let mut p = vec![0.0; anchors[0].len()];
        for (w, a) in alpha.as_slice().iter().zip(&anchors) {
            for (q, v) in p.iter_mut().zip(a) {
                *q += w * v;
            }
        }
        loss_and_grad(shape, &p, &batch, Mode::Eval, None).unwrap().0
    };
    let mut g = c.benchmark_group("candidate_evaluation");
    for (name, map) in MODES {
        g.bench_function(BenchmarkId::new(name, 64), |b| b.iter(|| map(64, &job)));
    }
    g.finish();
}

fn rollouts(c: &mut Criterion) {
    let env = make_env(MazeLayout::builtin("U").unwrap(), TaskTransform::N, 300, 0).unwrap();
    let shapes = HbcShapes::with_widths(32, 64, 0.0);
    let policy = init_hbc(&shapes, &TrainConfig::default());
    let job = |i: usize| rollout(&mut policy.actor(), &env, eval_start(&env, 2, i)).map_or(0.0, |s| s as u8 as f64);
    let mut g = c.benchmark_group("rollouts");
    for (name, map) in MODES {
        g.bench_function(BenchmarkId::new(name, 16), |b| b.iter(|| map(16, &job)));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = dataset_generation, candidate_evaluation, rollouts
}
criterion_main!(benches);
