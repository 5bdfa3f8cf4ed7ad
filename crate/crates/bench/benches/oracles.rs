use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use std::sync::Arc;

use avgrl_core::envs::{self, GarnetSpec};
use avgrl_core::exact::{grad_stationary, policy_gradient, PolicyEvaluation};
use avgrl_core::features::{make_features, FeatureKind};
use avgrl_core::oracles::{actor_field_from, brute_force_optimum, critic_fixed_point_from, estimate_mixing};
use avgrl_core::{ActionFeatures, SoftmaxLinearPolicy};
use rand::SeedableRng;

fn bench_oracles(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracles");
    for n in [5usize, 20, 80] {
        let mdp = envs::build_garnet(&GarnetSpec::new(n, 3, 3, 0.05, 1)).unwrap();
        let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        let actor = Arc::new(ActionFeatures::tabular(n, 3));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let policy = SoftmaxLinearPolicy::gaussian(actor, 1.0, &mut rng);
        group.bench_with_input(BenchmarkId::new("evaluate", n), &n, |b, _| {
            b.iter(|| PolicyEvaluation::new(black_box(&mdp), &policy).unwrap())
        });
        let eval = PolicyEvaluation::new(&mdp, &policy).unwrap();
        group.bench_with_input(BenchmarkId::new("v_star_and_field", n), &n, |b, _| {
            b.iter(|| {
                let v = critic_fixed_point_from(&eval, &critic).unwrap();
                actor_field_from(&eval, &mdp, &policy, &v, &critic)
            })
        });
        group.bench_with_input(BenchmarkId::new("policy_gradient", n), &n, |b, _| {
            b.iter(|| policy_gradient(&mdp, &policy).unwrap())
        });
        if n <= 20 {
            group.bench_with_input(BenchmarkId::new("grad_stationary", n), &n, |b, _| {
                b.iter(|| grad_stationary(&mdp, &policy).unwrap())
            });
        }
        group.bench_with_input(BenchmarkId::new("mixing_200", n), &n, |b, _| {
            b.iter(|| estimate_mixing(&eval.chain, 200))
        });
    }
    let mdp = envs::build_garnet(&GarnetSpec::new(8, 3, 3, 0.05, 2)).unwrap();
    group.bench_function("brute_force_3^8", |b| b.iter(|| brute_force_optimum(black_box(&mdp)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_oracles);
criterion_main!(benches);
