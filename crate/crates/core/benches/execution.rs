use acllft_core::approx::DenseNet;
use acllft_core::envs::{EnvSpec, SpreadConfig};
use acllft_core::marl::{evaluate, init_models, value_gradient, AgentMode, TrainerConfig, ValueSample};
use acllft_core::central::DecideMode;
use acllft_core::par::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn critic_gradient(c: &mut Criterion) {
    let critic = DenseNet::new(&[128, 256, 64, 16, 4], 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch: Vec<ValueSample> = (0..500)
        .map(|_| ValueSample {
            input: (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            targets: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut g = c.benchmark_group("critic_gradient_500");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| value_gradient(&critic, &batch, exec, 32).unwrap())
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let env = EnvSpec::Spread(SpreadConfig::default());
    let mut g = c.benchmark_group("spread_evaluation_8_episodes");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = TrainerConfig { exec, eval_episodes: 8, ..TrainerConfig::default() };
        let models = init_models(&cfg, &env).unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(&cfg, &env, &models, DecideMode::Greedy, AgentMode::Greedy).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, critic_gradient, evaluation);
criterion_main!(benches);
