//! Seeded random instance generators used by tests, benchmarks and the CLI.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::TabularMdp;
use crate::scalar::Scalar;

/// Dense random MDP: every row is a normalised vector of `U(0.05, 1)` weights,
/// rewards are `U(0, 1)`.
pub fn random_mdp<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    gamma: T,
    reward_noise: T,
    seed: u64,
) -> TabularMdp<T> {
    garnet(num_states, num_actions, num_states, gamma, reward_noise, seed)
}

/// Garnet-style instance: each `(x, u)` row puts random mass on `branching`
/// distinct next states chosen uniformly.
pub fn garnet<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    gamma: T,
    reward_noise: T,
    seed: u64,
) -> TabularMdp<T> {
    assert!(branching >= 1 && branching <= num_states, "branching out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = num_states;
    let mut transitions = vec![T::zero(); num_actions * s * s];
    for row in transitions.chunks_mut(s) {
        let support = sample(&mut rng, s, branching);
        let weights: Vec<f64> = (0..branching).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (idx, w) in support.iter().zip(weights) {
            row[idx] = T::of(w / total);
        }
    }
    let rewards = (0..s * num_actions)
        .map(|_| T::of(rng.random_range(0.0..1.0)))
        .collect();
    TabularMdp::from_flat(num_states, num_actions, gamma, reward_noise, transitions, rewards)
        .expect("generated rows are valid distributions")
}

/// Every row is a point mass on a uniformly chosen next state.
pub fn deterministic_mdp<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    gamma: T,
    seed: u64,
) -> TabularMdp<T> {
    garnet(num_states, num_actions, 1, gamma, T::zero(), seed)
}
