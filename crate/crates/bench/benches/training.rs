use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rqn_core::envs::{EnvConfig, PredatorPreyConfig};
use rqn_core::training::{run_episode, EpisodeRecord, Learner, LearnerConfig, TrainBatch};
use rqn_core::MixerKind;

fn pp(n_predators: usize) -> EnvConfig {
    EnvConfig::PredatorPrey(PredatorPreyConfig {
        n_predators,
        ..PredatorPreyConfig::default()
    })
}

fn learner(kind: MixerKind, env: &EnvConfig) -> Learner {
    let spec = env.build().unwrap().spec().clone();
    Learner::new(kind, spec, LearnerConfig::with_gamma(0.99), 0).unwrap()
}

fn random_episodes(l: &Learner, env: &EnvConfig, n: usize) -> Vec<EpisodeRecord> {
    let mut e = env.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|k| run_episode(l, e.as_mut(), k as u64, 1.0, &mut rng).unwrap().episode)
        .collect()
}

fn rollouts(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_episode");
    for n in [2, 4] {
        let env = pp(n);
        let l = learner(MixerKind::Rqn, &env);
        let mut e = env.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seed = 0u64;
        group.bench_function(format!("pp{n}_greedy"), |b| {
            b.iter(|| {
                seed += 1;
                black_box(run_episode(&l, e.as_mut(), seed, 0.0, &mut rng).unwrap().episode.len())
            })
        });
    }
    group.finish();
}

fn train_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step_pp2_batch32");
    group.sample_size(10);
    let env = pp(2);
    for kind in MixerKind::ALL {
        let l = learner(kind, &env);
        let batch = TrainBatch::new(random_episodes(&l, &env, 32), None).unwrap();
        group.bench_function(kind.to_string(), |b| {
            b.iter_batched(|| l.clone(), |mut l| black_box(l.train_step(&batch).unwrap()), BatchSize::LargeInput)
        });
    }
    group.finish();
}

criterion_group!(benches, rollouts, train_steps);
criterion_main!(benches);
