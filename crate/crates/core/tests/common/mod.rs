#![allow(dead_code)]

use std::sync::Arc;

use avgrl_core::envs::{build_garnet, GarnetSpec};
use avgrl_core::features::{make_features, FeatureKind, FeatureMap};
use avgrl_core::{ActionFeatures, FiniteMdp, SoftmaxLinearPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub mdp: FiniteMdp,
    pub critic: FeatureMap,
    pub policy: SoftmaxLinearPolicy,
}

/// Garnet(5 states, 3 actions, ε = 0.05) with reduced one-hot features and a Gaussian θ.
pub fn garnet_instance(seed: u64) -> Instance {
    let mdp = build_garnet(&GarnetSpec::new(5, 3, 3, 0.05, seed)).unwrap();
    let critic = make_features(FeatureKind::OneHotReduced, &mdp, seed).unwrap();
    let actor = Arc::new(ActionFeatures::tabular(5, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let policy = SoftmaxLinearPolicy::gaussian(actor, 1.0, &mut rng);
    Instance { mdp, critic, policy }
}
