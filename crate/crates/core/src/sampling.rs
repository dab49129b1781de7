//! The generative observation model.
//!
//! One draw yields a next state for every state-action pair plus a noisy
//! reward table. Transitions and rewards come from two separate ChaCha
//! streams of the same seed, so conditioning on one never perturbs the other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Policy, QFunction, TabularMdp};
use crate::scalar::Scalar;

const TRANSITION_STREAM: u64 = 0;
const REWARD_STREAM: u64 = 1;

/// One draw `(Z_k, R_k)` from the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample<T> {
    num_states: usize,
    num_actions: usize,
    next_state: Vec<usize>,
    reward: Vec<T>,
}

impl<T: Scalar> TransitionSample<T> {
    /// Builds a sample from explicit tables laid out as `[x * num_actions + u]`.
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        next_state: Vec<usize>,
        reward: Vec<T>,
    ) -> Result<Self> {
        let d = num_states * num_actions;
        if next_state.len() != d || reward.len() != d {
            return Err(Error::dims(d, next_state.len().max(reward.len())));
        }
        if let Some(&bad) = next_state.iter().find(|&&x| x >= num_states) {
            return Err(Error::InvalidArgument(format!(
                "next state {bad} out of range"
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            next_state,
            reward,
        })
    }

    pub(crate) fn empty(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            next_state: vec![0; num_states * num_actions],
            reward: vec![T::zero(); num_states * num_actions],
        }
    }

    pub fn next_state(&self, x: usize, u: usize) -> usize {
        self.next_state[x * self.num_actions + u]
    }

    pub fn reward(&self, x: usize, u: usize) -> T {
        self.reward[x * self.num_actions + u]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    /// Next states on the flattened index `x * num_actions + u`.
    pub fn next_states(&self) -> &[usize] {
        &self.next_state
    }

    fn check_table(&self, q: &QFunction<T>) -> Result<()> {
        if q.shape() != self.shape() {
            return Err(Error::dims(
                format!("{}x{}", self.num_states, self.num_actions),
                format!("{}x{}", q.num_states(), q.num_actions()),
            ));
        }
        Ok(())
    }

    /// Writes `R + γ v(Z)` into `out`, where `v` holds `max_u' Q(x', u')`.
    pub(crate) fn bellman_into(&self, gamma: T, state_values: &[T], out: &mut [T]) {
        for ((o, &xn), &r) in out.iter_mut().zip(&self.next_state).zip(&self.reward) {
            *o = r + gamma * state_values[xn];
        }
    }
}

/// Mixes `(seed, index)` into an independent seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateful draw source bound to one MDP.
#[derive(Debug, Clone)]
pub struct SeededSampler<'a, T> {
    mdp: &'a TabularMdp<T>,
    seed: u64,
    draws: u64,
    budget: Option<u64>,
    transitions_rng: ChaCha8Rng,
    rewards_rng: ChaCha8Rng,
    // cumulative rows in (x, u) order, plus the last index with positive mass
    cumulative: Vec<T>,
    last_support: Vec<usize>,
}

impl<'a, T: Scalar> SeededSampler<'a, T> {
    pub fn new(mdp: &'a TabularMdp<T>, seed: u64) -> Self {
        let s = mdp.num_states();
        let mut cumulative = Vec::with_capacity(mdp.dim() * s);
        let mut last_support = Vec::with_capacity(mdp.dim());
        for x in 0..s {
            for u in 0..mdp.num_actions() {
                let row = mdp.transition_row(x, u);
                let mut acc = T::zero();
                for &p in row {
                    acc = acc + p;
                    cumulative.push(acc);
                }
                last_support.push(row.iter().rposition(|&p| p > T::zero()).unwrap_or(s - 1));
            }
        }
        let mut transitions_rng = ChaCha8Rng::seed_from_u64(seed);
        transitions_rng.set_stream(TRANSITION_STREAM);
        let mut rewards_rng = ChaCha8Rng::seed_from_u64(seed);
        rewards_rng.set_stream(REWARD_STREAM);
        Self {
            mdp,
            seed,
            draws: 0,
            budget: None,
            transitions_rng,
            rewards_rng,
            cumulative,
            last_support,
        }
    }

    /// Caps the number of draws [`SeededSampler::reserve`] will grant.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn mdp(&self) -> &'a TabularMdp<T> {
        self.mdp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.draws))
    }

    /// Fails if fewer than `n` draws remain in the budget.
    pub fn reserve(&self, n: u64) -> Result<()> {
        match self.remaining() {
            Some(available) if available < n => Err(Error::BudgetExhausted {
                requested: n,
                available,
            }),
            _ => Ok(()),
        }
    }

    pub fn draw_sample(&mut self) -> TransitionSample<T> {
        let mut sample = TransitionSample::empty(self.mdp.num_states(), self.mdp.num_actions());
        self.draw_into(&mut sample);
        sample
    }

    /// Overwrites `sample` with a fresh draw.
    pub fn draw_into(&mut self, sample: &mut TransitionSample<T>) {
        let s = self.mdp.num_states();
        let a = self.mdp.num_actions();
        debug_assert_eq!(sample.shape(), (s, a));
        for z in 0..s * a {
            let cum = &self.cumulative[z * s..(z + 1) * s];
            let u = T::sample_unit(&mut self.transitions_rng);
            sample.next_state[z] = cum
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.last_support[z])
                .min(self.last_support[z]);
        }
        let sigma = self.mdp.reward_noise();
        for x in 0..s {
            for u in 0..a {
                let mean = self.mdp.reward(x, u);
                sample.reward[x * a + u] = if sigma > T::zero() {
                    mean + sigma * T::sample_standard_normal(&mut self.rewards_rng)
                } else {
                    mean
                };
            }
        }
        self.draws += 1;
    }
}

/// `T̂(Q)(x,u) = R(x,u) + γ max_u' Q(Z(x,u), u')`.
pub fn empirical_bellman<T: Scalar>(
    sample: &TransitionSample<T>,
    mdp: &TabularMdp<T>,
    q: &QFunction<T>,
) -> Result<QFunction<T>> {
    q.check_shape(mdp)?;
    sample.check_table(q)?;
    let v = q.max_per_state();
    let mut out = vec![T::zero(); mdp.dim()];
    sample.bellman_into(mdp.gamma(), &v, &mut out);
    QFunction::from_flat(mdp.num_states(), mdp.num_actions(), out)
}

/// Average of `n` fresh empirical Bellman applications at `q`.
pub fn monte_carlo_bellman<T: Scalar>(
    sampler: &mut SeededSampler<'_, T>,
    q: &QFunction<T>,
    n: u64,
) -> Result<QFunction<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("Monte Carlo batch size must be positive".into()));
    }
    let mdp = sampler.mdp();
    q.check_shape(mdp)?;
    let v = q.max_per_state();
    let d = mdp.dim();
    let mut acc = vec![T::zero(); d];
    let mut one = vec![T::zero(); d];
    let mut sample = TransitionSample::empty(mdp.num_states(), mdp.num_actions());
    for _ in 0..n {
        sampler.draw_into(&mut sample);
        sample.bellman_into(mdp.gamma(), &v, &mut one);
        acc.iter_mut().zip(&one).for_each(|(a, &b)| *a = *a + b);
    }
    let scale = T::one() / T::from_u64(n).expect("batch size representable");
    acc.iter_mut().for_each(|a| *a = *a * scale);
    QFunction::from_flat(mdp.num_states(), mdp.num_actions(), acc)
}

/// `(Z^π Q)(x,u) = Q(Z(x,u), π(Z(x,u)))`.
pub fn apply_sampled_policy_transition<T: Scalar>(
    sample: &TransitionSample<T>,
    pi: &Policy,
    q: &QFunction<T>,
) -> Result<QFunction<T>> {
    sample.check_table(q)?;
    if pi.num_states() != q.num_states() || pi.actions().iter().any(|&u| u >= q.num_actions()) {
        return Err(Error::InvalidArgument("policy does not match table".into()));
    }
    Ok(QFunction::from_fn(q.num_states(), q.num_actions(), |x, u| {
        let xn = sample.next_state(x, u);
        q.get(xn, pi.action(xn))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{apply_policy_transition, bellman_optimality, linf_distance, span_seminorm};
    use crate::random::{deterministic_mdp, random_mdp};

    fn two_state() -> TabularMdp<f64> {
        TabularMdp::new(
            2,
            2,
            0.5,
            0.0,
            vec![
                vec![vec![0.3, 0.7], vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            ],
            vec![vec![1.0, 0.0], vec![0.5, 2.0]],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_rows_always_hit_their_target() {
        let mdp = deterministic_mdp::<f64>(5, 3, 0.9, 4);
        let mut sampler = SeededSampler::new(&mdp, 1);
        for _ in 0..50 {
            let sample = sampler.draw_sample();
            for x in 0..5 {
                for u in 0..3 {
                    assert_eq!(mdp.transition_row(x, u)[sample.next_state(x, u)], 1.0);
                    assert_eq!(sample.reward(x, u), mdp.reward(x, u));
                }
            }
        }
        assert_eq!(sampler.draws(), 50);
    }

    #[test]
    fn empirical_frequency_matches_probability() {
        let gamma = 0.9;
        let p = (4.0 * gamma - 1.0) / (3.0 * gamma);
        let mdp = TabularMdp::new(
            2,
            1,
            gamma,
            0.0,
            vec![vec![vec![p, 1.0 - p], vec![0.0, 1.0]]],
            vec![vec![1.0], vec![0.0]],
        )
        .unwrap();
        let mut sampler = SeededSampler::new(&mdp, 2024);
        let n = 100_000;
        let hits = (0..n).filter(|_| sampler.draw_sample().next_state(0, 0) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn equal_seeds_reproduce_streams() {
        let mdp = random_mdp::<f64>(4, 3, 0.9, 0.5, 8);
        let mut a = SeededSampler::new(&mdp, 77);
        let mut b = SeededSampler::new(&mdp, 77);
        let mut c = SeededSampler::new(&mdp, 78);
        let mut differs = false;
        for _ in 0..100 {
            let (sa, sb, sc) = (a.draw_sample(), b.draw_sample(), c.draw_sample());
            assert_eq!(sa, sb);
            differs |= sa != sc;
        }
        assert!(differs);
    }

    #[test]
    fn reward_stream_is_independent_of_transitions() {
        // Same seed, same rewards, different kernels: reward draws must agree
        // exactly because they come from their own stream.
        let a = random_mdp::<f64>(3, 2, 0.9, 0.7, 1);
        let b = random_mdp::<f64>(3, 2, 0.9, 0.7, 2).with_rewards(&a.reward_table()).unwrap();
        let mut sa = SeededSampler::new(&a, 5);
        let mut sb = SeededSampler::new(&b, 5);
        for _ in 0..20 {
            let (x, y) = (sa.draw_sample(), sb.draw_sample());
            for s in 0..3 {
                for u in 0..2 {
                    assert_eq!(x.reward(s, u), y.reward(s, u));
                }
            }
        }
    }

    #[test]
    fn empirical_bellman_hand_trace() {
        let mdp = two_state();
        let sample = TransitionSample::from_parts(2, 2, vec![1, 0, 0, 1], vec![1.5, -0.5, 0.0, 2.0]).unwrap();
        let q = QFunction::from_rows(vec![vec![3.0, 1.0], vec![-2.0, 4.0]]).unwrap();
        let t = empirical_bellman(&sample, &mdp, &q).unwrap();
        // rowmax = [3, 4]; R + 0.5 * rowmax[Z]
        assert_eq!(t.to_rows(), vec![vec![3.5, 1.0], vec![1.5, 4.0]]);
    }

    #[test]
    fn noiseless_deterministic_empirical_equals_population() {
        let mdp = deterministic_mdp::<f64>(4, 2, 0.8, 3);
        let q = QFunction::from_fn(4, 2, |x, u| (x * 2 + u) as f64 * 0.3 - 1.0);
        let mut sampler = SeededSampler::new(&mdp, 9);
        let tq = bellman_optimality(&mdp, &q).unwrap();
        let s = sampler.draw_sample();
        assert_eq!(empirical_bellman(&s, &mdp, &q).unwrap(), tq);
        let mc = monte_carlo_bellman(&mut sampler, &q, 17).unwrap();
        assert!(linf_distance(&mc, &tq).unwrap() < 1e-14);
        let pi = Policy::new(vec![1, 0, 0, 1], 2).unwrap();
        assert_eq!(
            apply_sampled_policy_transition(&s, &pi, &q).unwrap(),
            apply_policy_transition(&mdp, &pi, &q).unwrap()
        );
    }

    #[test]
    fn single_draw_monte_carlo_equals_empirical_operator() {
        let mdp = random_mdp::<f64>(3, 2, 0.9, 0.4, 10);
        let q = QFunction::from_fn(3, 2, |x, u| (x + u) as f64);
        let mut a = SeededSampler::new(&mdp, 3);
        let mut b = SeededSampler::new(&mdp, 3);
        let mc = monte_carlo_bellman(&mut a, &q, 1).unwrap();
        let single = empirical_bellman(&b.draw_sample(), &mdp, &q).unwrap();
        assert_eq!(mc, single);
        assert_eq!(a.draws(), 1);
        assert!(monte_carlo_bellman(&mut a, &q, 0).is_err());
    }

    #[test]
    fn empirical_operator_is_unbiased() {
        let mdp = random_mdp::<f64>(3, 2, 0.9, 0.5, 12);
        let q = QFunction::from_fn(3, 2, |x, u| ((x * 7 + u * 3) % 5) as f64);
        let mut sampler = SeededSampler::new(&mdp, 99);
        let n = 100_000u64;
        let mean = monte_carlo_bellman(&mut sampler, &q, n).unwrap();
        let tq = bellman_optimality(&mdp, &q).unwrap();
        let tol = 4.0 * (span_seminorm(&q) + mdp.reward_noise()) / (n as f64).sqrt();
        assert!(linf_distance(&mean, &tq).unwrap() <= tol);
        assert_eq!(sampler.draws(), n);
    }

    #[test]
    fn sampled_policy_transition_hand_trace_and_mean() {
        let mdp = two_state();
        let sample = TransitionSample::from_parts(2, 2, vec![1, 1, 0, 0], vec![0.0; 4]).unwrap();
        let q = QFunction::from_rows(vec![vec![3.0, 1.0], vec![-2.0, 4.0]]).unwrap();
        let pi = Policy::new(vec![1, 0], 2).unwrap();
        // π(1) = 0 -> Q(1,0) = -2; π(0) = 1 -> Q(0,1) = 1
        let zq = apply_sampled_policy_transition(&sample, &pi, &q).unwrap();
        assert_eq!(zq.to_rows(), vec![vec![-2.0, -2.0], vec![1.0, 1.0]]);

        let mut sampler = SeededSampler::new(&mdp, 4);
        let n = 100_000;
        let mut acc = QFunction::zeros(2, 2);
        let mut sq = QFunction::zeros(2, 2);
        for _ in 0..n {
            let z = apply_sampled_policy_transition(&sampler.draw_sample(), &pi, &q).unwrap();
            acc = acc.zip_map(&z, |a, b| a + b);
            sq = sq.zip_map(&z, |a, b| a + b * b);
        }
        let nf = n as f64;
        let mean = acc.map(|v| v / nf);
        let pq = apply_policy_transition(&mdp, &pi, &q).unwrap();
        for x in 0..2 {
            for u in 0..2 {
                let var = sq.get(x, u) / nf - mean.get(x, u).powi(2);
                let se = (var / nf).sqrt();
                assert!((mean.get(x, u) - pq.get(x, u)).abs() <= 5.0 * se + 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_variance_shrinks_like_one_over_n() {
        let mdp = random_mdp::<f64>(2, 2, 0.9, 1.0, 13);
        let q = QFunction::from_fn(2, 2, |x, u| (x * 2 + u) as f64);
        let mut sampler = SeededSampler::new(&mdp, 21);
        let reps = 200;
        let mut points = Vec::new();
        for n in [100u64, 1_000, 10_000] {
            let vals: Vec<f64> = (0..reps)
                .map(|_| monte_carlo_bellman(&mut sampler, &q, n).unwrap().get(0, 0))
                .collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            points.push(((n as f64).ln(), var.ln()));
        }
        let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((-1.1..=-0.9).contains(&slope), "slope {slope}");
    }

    #[test]
    fn budget_reservation() {
        let mdp = random_mdp::<f64>(2, 2, 0.9, 0.0, 1);
        let mut sampler = SeededSampler::new(&mdp, 1).with_budget(3);
        assert!(sampler.reserve(3).is_ok());
        sampler.draw_sample();
        assert!(matches!(
            sampler.reserve(3),
            Err(Error::BudgetExhausted { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
