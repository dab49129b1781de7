//! Instance-dependent complexity: the functional `ν(π)` and its transition and
//! reward components, the optimal policy set, the optimality gap and the
//! minimum sample size for the lower bound.
//!
//! Everything here is computed in closed form from rows of the resolvent
//! `U = (I - γP^π)^{-1}`: for an optimal policy the noise
//! `T̂(Q*) - T(Q*)` is independent across state-action pairs with variance
//! `σ_r² + γ²φ²(z)`, so `Var(U ε)(z̄) = Σ_z U(z̄,z)² Var ε(z)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mdp::{
    apply_policy_transition, greedy_policy, resolvent_matrix, solve_optimal_q, span_seminorm,
    Policy, QFunction, TabularMdp,
};
use crate::scalar::Scalar;

/// Tolerance on `Q*` used to decide membership in the optimal policy set.
pub const DEFAULT_OPT_TOL: f64 = 1e-9;
/// Largest optimal policy set that will be enumerated.
pub const DEFAULT_POLICY_CAP: usize = 4096;
/// Fixed-point tolerance used whenever `Q*` is computed internally.
pub const QSTAR_TOL: f64 = 1e-12;

/// The variance components of one policy.
#[derive(Debug, Clone)]
pub struct PolicyComponents<T> {
    pub policy: Policy,
    pub resolvent: DenseMatrix<T>,
    pub phi_sq: QFunction<T>,
    pub rho: QFunction<T>,
    pub sigma: QFunction<T>,
    pub nu: QFunction<T>,
}

/// `N₀` and the two terms it is the maximum of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MinSampleSize<T> {
    /// `2γ²/(1-γ)²`.
    pub discount_branch: T,
    /// `2 span(Q*)² / ((1-γ)² ‖ρ²(π*)‖∞)`; infinite when `ρ ≡ 0`.
    pub transition_branch: T,
    pub value: T,
}

impl<T: Scalar> MinSampleSize<T> {
    /// True when the transition branch is infinite (deterministic kernels).
    pub fn is_degenerate(&self) -> bool {
        !self.transition_branch.is_finite()
    }
}

/// Summary of the complexity quantities for one instance.
///
/// Non-finite scalars (an infinite gap or `N₀`) serialise as JSON `null`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ComplexityReport<T> {
    pub nu: QFunction<T>,
    pub rho: QFunction<T>,
    pub sigma_term: QFunction<T>,
    pub phi_sq: QFunction<T>,
    pub max_nu_inf: T,
    pub argmax_policy: Policy,
    pub gap: T,
    pub n_zero: T,
    pub optimal_policy_count: usize,
}

impl<T: Scalar> ComplexityReport<T> {
    /// One row per state-action pair: `x,u,nu,rho,sigma,phi_sq`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "u", "nu", "rho", "sigma", "phi_sq"])?;
        for x in 0..self.nu.num_states() {
            for u in 0..self.nu.num_actions() {
                w.write_record([
                    x.to_string(),
                    u.to_string(),
                    self.nu.get(x, u).to_string(),
                    self.rho.get(x, u).to_string(),
                    self.sigma_term.get(x, u).to_string(),
                    self.phi_sq.get(x, u).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// An MDP together with its optimal Q-function, caching nothing else.
#[derive(Debug, Clone)]
pub struct InstanceAnalysis<'a, T> {
    mdp: &'a TabularMdp<T>,
    qstar: QFunction<T>,
    opt_tol: T,
    policy_cap: usize,
}

impl<'a, T: Scalar> InstanceAnalysis<'a, T> {
    pub fn new(mdp: &'a TabularMdp<T>) -> Result<Self> {
        let qstar = solve_optimal_q(mdp, T::of(QSTAR_TOL).max(T::epsilon() * T::of(64.0)))?;
        Ok(Self::with_qstar(mdp, qstar))
    }

    /// Uses a caller-supplied `Q*` (e.g. a closed form).
    pub fn with_qstar(mdp: &'a TabularMdp<T>, qstar: QFunction<T>) -> Self {
        Self {
            mdp,
            qstar,
            opt_tol: T::of(DEFAULT_OPT_TOL),
            policy_cap: DEFAULT_POLICY_CAP,
        }
    }

    pub fn opt_tol(mut self, opt_tol: T) -> Self {
        self.opt_tol = opt_tol;
        self
    }

    pub fn policy_cap(mut self, cap: usize) -> Self {
        self.policy_cap = cap;
        self
    }

    pub fn mdp(&self) -> &'a TabularMdp<T> {
        self.mdp
    }

    pub fn qstar(&self) -> &QFunction<T> {
        &self.qstar
    }

    /// Per-state sets of actions within `opt_tol` of the best.
    pub fn optimal_actions(&self) -> Vec<Vec<usize>> {
        let best = self.qstar.max_per_state();
        (0..self.mdp.num_states())
            .map(|x| {
                (0..self.mdp.num_actions())
                    .filter(|&u| self.qstar.get(x, u) >= best[x] - self.opt_tol)
                    .collect()
            })
            .collect()
    }

    /// All optimal deterministic policies, in lexicographic order.
    pub fn optimal_policies(&self) -> Result<Vec<Policy>> {
        let per_state = self.optimal_actions();
        let count = per_state
            .iter()
            .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
            .unwrap_or(u128::MAX);
        if count > self.policy_cap as u128 {
            return Err(Error::EnumerationOverflow {
                count,
                cap: self.policy_cap,
            });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut cursor = vec![0usize; per_state.len()];
        loop {
            let actions = cursor.iter().zip(&per_state).map(|(&i, s)| s[i]).collect();
            out.push(Policy::new(actions, self.mdp.num_actions())?);
            // odometer increment, last state fastest
            let mut k = per_state.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < per_state[k].len() {
                    break;
                }
                cursor[k] = 0;
            }
        }
    }

    /// `φ²(z) = Σ_x' P(x'|z) (Q*(x', π(x')) - (P^π Q*)(z))²`.
    pub fn phi_squared(&self, pi: &Policy) -> Result<QFunction<T>> {
        let pq = apply_policy_transition(self.mdp, pi, &self.qstar)?;
        Ok(QFunction::from_fn(
            self.mdp.num_states(),
            self.mdp.num_actions(),
            |x, u| {
                let mean = pq.get(x, u);
                self.mdp
                    .transition_row(x, u)
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (xn, &p)| {
                        let dev = self.qstar.get(xn, pi.action(xn)) - mean;
                        acc + p * dev * dev
                    })
            },
        ))
    }

    /// Resolvent, `φ²`, `ρ`, `σ` and `ν` for one policy.
    pub fn components(&self, pi: &Policy) -> Result<PolicyComponents<T>> {
        let (s, a) = (self.mdp.num_states(), self.mdp.num_actions());
        let resolvent = resolvent_matrix(self.mdp, pi)?;
        let phi_sq = self.phi_squared(pi)?;
        let noise_var = self.mdp.reward_noise() * self.mdp.reward_noise();
        let gamma = self.mdp.gamma();
        let mut rho_sq = Vec::with_capacity(s * a);
        let mut sigma_sq = Vec::with_capacity(s * a);
        for zbar in 0..s * a {
            let row = resolvent.row(zbar);
            let (r2, u2) = row
                .iter()
                .zip(phi_sq.values())
                .fold((T::zero(), T::zero()), |(r2, u2), (&w, &phi)| {
                    (r2 + w * w * phi, u2 + w * w)
                });
            rho_sq.push(r2);
            sigma_sq.push(noise_var * u2);
        }
        let nu = rho_sq
            .iter()
            .zip(&sigma_sq)
            .map(|(&r2, &s2)| (gamma * gamma * r2 + s2).sqrt())
            .collect();
        Ok(PolicyComponents {
            policy: pi.clone(),
            resolvent,
            phi_sq,
            rho: QFunction::from_flat(s, a, rho_sq.into_iter().map(T::sqrt).collect())?,
            sigma: QFunction::from_flat(s, a, sigma_sq.into_iter().map(T::sqrt).collect())?,
            nu: QFunction::from_flat(s, a, nu)?,
        })
    }

    /// Maximises `score(components)` over the optimal set; the
    /// lexicographically smallest policy wins ties.
    fn argmax_over_optimal(
        &self,
        score: impl Fn(&PolicyComponents<T>) -> T,
    ) -> Result<PolicyComponents<T>> {
        let mut best: Option<(T, PolicyComponents<T>)> = None;
        for pi in self.optimal_policies()? {
            let comp = self.components(&pi)?;
            let value = score(&comp);
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, comp));
            }
        }
        Ok(best.expect("optimal policy set is never empty").1)
    }

    /// `max_{π ∈ Π*} ‖ν(π)‖∞` and its components.
    pub fn max_nu(&self) -> Result<PolicyComponents<T>> {
        self.argmax_over_optimal(|c| c.nu.linf_norm())
    }

    /// Optimal policy maximising `‖ρ(π)‖∞`.
    pub fn max_rho(&self) -> Result<PolicyComponents<T>> {
        self.argmax_over_optimal(|c| c.rho.linf_norm())
    }

    /// Optimal policy maximising `‖σ(π)‖∞`.
    pub fn max_sigma(&self) -> Result<PolicyComponents<T>> {
        self.argmax_over_optimal(|c| c.sigma.linf_norm())
    }

    /// Gap `V*(x) - Q*(x,u)` for every pair; zero on optimal actions.
    pub fn action_gaps(&self) -> QFunction<T> {
        let best = self.qstar.max_per_state();
        QFunction::from_fn(self.mdp.num_states(), self.mdp.num_actions(), |x, u| {
            best[x] - self.qstar.get(x, u)
        })
    }

    /// `Δ = min_{π ∉ Π*} ‖Q* - (r + γP^π Q*)‖∞`, or `+∞` if every policy is optimal.
    ///
    /// `Q* - (r + γP^π Q*)` at `z` equals `γ Σ_x' P(x'|z) g(x', π(x'))` with
    /// `g ≥ 0` the action gaps, so the minimum is attained by a policy that
    /// deviates from an optimal one at a single state `x₀`:
    /// `Δ = γ min_{(x₀,u₀) suboptimal} g(x₀,u₀) · max_z P(x₀|z)`.
    pub fn optimality_gap(&self) -> T {
        let gaps = self.action_gaps();
        let (s, a) = (self.mdp.num_states(), self.mdp.num_actions());
        let reach: Vec<T> = (0..s)
            .map(|target| {
                (0..s)
                    .flat_map(|x| (0..a).map(move |u| (x, u)))
                    .map(|(x, u)| self.mdp.transition_row(x, u)[target])
                    .fold(T::zero(), T::max)
            })
            .collect();
        let mut delta = T::infinity();
        for x in 0..s {
            for u in 0..a {
                let g = gaps.get(x, u);
                if g > self.opt_tol {
                    delta = delta.min(self.mdp.gamma() * g * reach[x]);
                }
            }
        }
        delta
    }

    /// `N₀` evaluated at the `‖ν‖∞`-maximising optimal policy.
    pub fn min_sample_size(&self) -> Result<MinSampleSize<T>> {
        let comp = self.max_nu()?;
        Ok(self.min_sample_size_for(&comp))
    }

    pub(crate) fn min_sample_size_for(&self, comp: &PolicyComponents<T>) -> MinSampleSize<T> {
        let gamma = self.mdp.gamma();
        let one_minus = T::one() - gamma;
        let two = T::of(2.0);
        let discount_branch = two * gamma * gamma / (one_minus * one_minus);
        let rho_sq_inf = comp.rho.linf_norm().powi(2);
        let span = span_seminorm(&self.qstar);
        let transition_branch = if rho_sq_inf > T::zero() {
            two * span * span / (one_minus * one_minus * rho_sq_inf)
        } else {
            T::infinity()
        };
        MinSampleSize {
            discount_branch,
            transition_branch,
            value: discount_branch.max(transition_branch),
        }
    }

    /// `‖(P^{greedy(θ)} - P^{π*})(θ - Q*)‖∞ / ‖θ - Q*‖∞²` for one probe.
    pub fn lipschitz_ratio(&self, theta: &QFunction<T>) -> Result<T> {
        let diff = theta.zip_map(&self.qstar, |a, b| a - b);
        let norm = diff.linf_norm();
        if norm == T::zero() {
            return Ok(T::zero());
        }
        let pi_star = greedy_policy(&self.qstar, T::zero());
        let pi = greedy_policy(theta, T::zero());
        if pi == pi_star {
            return Ok(T::zero());
        }
        let a = apply_policy_transition(self.mdp, &pi, &diff)?;
        let b = apply_policy_transition(self.mdp, &pi_star, &diff)?;
        Ok(a.zip_map(&b, |x, y| x - y).linf_norm() / (norm * norm))
    }

    /// Empirical lower estimate of the Lipschitz constant from
    /// `num_probes` uniform perturbations of `Q*` with sup-norm at most `radius`.
    pub fn lipschitz_check(&self, num_probes: usize, radius: T, seed: u64) -> Result<T> {
        if num_probes == 0 {
            return Err(Error::InvalidArgument("need at least one probe".into()));
        }
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument("probe radius must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut estimate = T::zero();
        for _ in 0..num_probes {
            let theta = QFunction::from_fn(self.qstar.num_states(), self.qstar.num_actions(), |x, u| {
                let unit = T::of(rng.random_range(-1.0..=1.0));
                self.qstar.get(x, u) + radius * unit
            });
            estimate = estimate.max(self.lipschitz_ratio(&theta)?);
        }
        Ok(estimate)
    }

    pub fn report(&self) -> Result<ComplexityReport<T>> {
        let comp = self.max_nu()?;
        let n_zero = self.min_sample_size_for(&comp).value;
        Ok(ComplexityReport {
            max_nu_inf: comp.nu.linf_norm(),
            argmax_policy: comp.policy,
            nu: comp.nu,
            rho: comp.rho,
            sigma_term: comp.sigma,
            phi_sq: comp.phi_sq,
            gap: self.optimality_gap(),
            n_zero,
            optimal_policy_count: self.optimal_policies()?.len(),
        })
    }
}

/// `φ²` for a policy, given `Q*`.
pub fn phi_squared<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy,
    qstar: &QFunction<T>,
) -> Result<QFunction<T>> {
    qstar.check_shape(mdp)?;
    InstanceAnalysis::with_qstar(mdp, qstar.clone()).phi_squared(pi)
}

/// `ρ(π)`: elementwise standard deviation of `(I-γP^π)^{-1}(Z^π - P^π)Q*`.
pub fn rho_matrix<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<QFunction<T>> {
    Ok(InstanceAnalysis::new(mdp)?.components(pi)?.rho)
}

/// `σ(π)`: elementwise standard deviation of `(I-γP^π)^{-1}(R - r)`.
pub fn sigma_matrix<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<QFunction<T>> {
    Ok(InstanceAnalysis::new(mdp)?.components(pi)?.sigma)
}

/// `ν(π) = sqrt(γ²ρ² + σ²)`.
pub fn nu_matrix<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<QFunction<T>> {
    Ok(InstanceAnalysis::new(mdp)?.components(pi)?.nu)
}

pub fn optimal_policy_set<T: Scalar>(mdp: &TabularMdp<T>, opt_tol: T) -> Result<Vec<Policy>> {
    InstanceAnalysis::new(mdp)?.opt_tol(opt_tol).optimal_policies()
}

pub fn max_nu_over_optimal<T: Scalar>(mdp: &TabularMdp<T>) -> Result<(T, Policy)> {
    let comp = InstanceAnalysis::new(mdp)?.max_nu()?;
    Ok((comp.nu.linf_norm(), comp.policy))
}

pub fn optimality_gap<T: Scalar>(mdp: &TabularMdp<T>) -> Result<T> {
    Ok(InstanceAnalysis::new(mdp)?.optimality_gap())
}

pub fn min_sample_size<T: Scalar>(mdp: &TabularMdp<T>) -> Result<MinSampleSize<T>> {
    InstanceAnalysis::new(mdp)?.min_sample_size()
}

pub fn lipschitz_check<T: Scalar>(
    mdp: &TabularMdp<T>,
    num_probes: usize,
    radius: T,
    seed: u64,
) -> Result<T> {
    InstanceAnalysis::new(mdp)?.lipschitz_check(num_probes, radius, seed)
}

pub fn complexity_report<T: Scalar>(mdp: &TabularMdp<T>) -> Result<ComplexityReport<T>> {
    InstanceAnalysis::new(mdp)?.report()
}
