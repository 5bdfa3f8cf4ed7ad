use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use avgrl_core::envs::{self, GarnetSpec};
use avgrl_core::features::{make_features, FeatureKind};
use avgrl_core::learner::{step, Algorithm, LearnerState, Problem, StepContext, StepSchedule};

fn problem(mdp: avgrl_core::FiniteMdp) -> Problem {
    let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
    Problem::tabular_actor(mdp, critic).unwrap()
}

fn bench_steps(c: &mut Criterion) {
    const BATCH: u64 = 1000;
    let mut group = c.benchmark_group("step");
    group.throughput(Throughput::Elements(BATCH));
    let cases = [
        ("easy4", problem(envs::easy4())),
        ("garnet_50x5", problem(envs::build_garnet(&GarnetSpec::new(50, 5, 5, 0.05, 0)).unwrap())),
    ];
    for (name, p) in &cases {
        let ctx = StepContext {
            mdp: &p.mdp,
            critic: &p.critic,
            actor: &p.actor,
            critic_radius: 10.0,
            actor_radius: None,
            reward_noise: 0.0,
        };
        for algo in [Algorithm::CriticActor, Algorithm::ActorCritic] {
            let sched = StepSchedule::default_for(algo);
            group.bench_function(format!("{}/{name}", algo.name()), |b| {
                b.iter_batched_ref(
                    || LearnerState::initial(p.mdp.n_states(), p.critic.dim(), p.actor.dim(), 7),
                    |state| {
                        for _ in 0..BATCH {
                            black_box(step(state, &ctx, &sched, algo));
                        }
                    },
                    BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_steps);
criterion_main!(benches);
