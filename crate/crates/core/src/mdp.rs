//! Finite discounted MDPs and their exact operators.
//!
//! State-action pairs are flattened as `z = x * num_actions + u` whenever a
//! linear-algebra view is needed. Transition rows are stored as
//! `P[u][x][x'] = P_u(x' | x)`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LuDecomposition};
use crate::scalar::Scalar;

/// On-disk layout of an MDP: nested arrays `transitions[u][x][x']` and
/// `rewards[x][u]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MdpFile<T> {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: T,
    pub reward_noise: T,
    pub transitions: Vec<Vec<Vec<T>>>,
    pub rewards: Vec<Vec<T>>,
}

/// A finite MDP `(P, r, γ, σ_r)` observed through the generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "MdpFile<T>", into = "MdpFile<T>")]
pub struct TabularMdp<T> {
    num_states: usize,
    num_actions: usize,
    gamma: T,
    reward_noise: T,
    transitions: Vec<T>,
    rewards: Vec<T>,
}

impl<T: Scalar> TryFrom<MdpFile<T>> for TabularMdp<T> {
    type Error = Error;

    fn try_from(file: MdpFile<T>) -> Result<Self> {
        TabularMdp::new(
            file.num_states,
            file.num_actions,
            file.gamma,
            file.reward_noise,
            file.transitions,
            file.rewards,
        )
    }
}

impl<T: Scalar> From<TabularMdp<T>> for MdpFile<T> {
    fn from(mdp: TabularMdp<T>) -> Self {
        let (s, a) = (mdp.num_states, mdp.num_actions);
        MdpFile {
            num_states: s,
            num_actions: a,
            gamma: mdp.gamma,
            reward_noise: mdp.reward_noise,
            transitions: (0..a)
                .map(|u| (0..s).map(|x| mdp.transition_row(x, u).to_vec()).collect())
                .collect(),
            rewards: (0..s)
                .map(|x| (0..a).map(|u| mdp.reward(x, u)).collect())
                .collect(),
        }
    }
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds and validates an MDP from nested arrays.
    ///
    /// Rows must be non-negative and sum to one within
    /// [`Scalar::probability_tolerance`]; accepted rows are then renormalised
    /// so that downstream sums are exact up to rounding.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        gamma: T,
        reward_noise: T,
        transitions: Vec<Vec<Vec<T>>>,
        rewards: Vec<Vec<T>>,
    ) -> Result<Self> {
        if transitions.len() != num_actions {
            return Err(Error::dims(
                format!("{num_actions} transition matrices"),
                transitions.len(),
            ));
        }
        let mut flat = Vec::with_capacity(num_actions * num_states * num_states);
        for (u, matrix) in transitions.into_iter().enumerate() {
            if matrix.len() != num_states {
                return Err(Error::dims(
                    format!("{num_states} rows for action {u}"),
                    matrix.len(),
                ));
            }
            for (x, row) in matrix.into_iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::dims(
                        format!("{num_states} entries in row ({x}, {u})"),
                        row.len(),
                    ));
                }
                flat.extend(row);
            }
        }
        if rewards.len() != num_states || rewards.iter().any(|r| r.len() != num_actions) {
            return Err(Error::dims(
                format!("{num_states}x{num_actions} reward table"),
                format!(
                    "{}x{}",
                    rewards.len(),
                    rewards.first().map_or(0, |r| r.len())
                ),
            ));
        }
        let rewards = rewards.into_iter().flatten().collect();
        Self::from_flat(num_states, num_actions, gamma, reward_noise, flat, rewards)
    }

    /// Builds an MDP from flat buffers: `transitions[(u * S + x) * S + x']`
    /// and `rewards[x * A + u]`.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        gamma: T,
        reward_noise: T,
        mut transitions: Vec<T>,
        rewards: Vec<T>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp(
                "state and action spaces must be non-empty".into(),
            ));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::InvalidMdp(format!(
                "discount factor {gamma} outside (0, 1)"
            )));
        }
        if !(reward_noise >= T::zero()) || !reward_noise.is_finite() {
            return Err(Error::InvalidMdp(format!(
                "reward noise {reward_noise} must be finite and non-negative"
            )));
        }
        let s = num_states;
        if transitions.len() != num_actions * s * s {
            return Err(Error::dims(num_actions * s * s, transitions.len()));
        }
        if rewards.len() != s * num_actions {
            return Err(Error::dims(s * num_actions, rewards.len()));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite reward {r}")));
        }
        let tol = T::probability_tolerance();
        for (row_index, row) in transitions.chunks_mut(s).enumerate() {
            let (u, x) = (row_index / s, row_index % s);
            if let Some(p) = row.iter().find(|p| !(**p >= T::zero()) || !p.is_finite()) {
                return Err(Error::InvalidMdp(format!(
                    "transition probability {p} in row (x={x}, u={u}) is not a finite non-negative number"
                )));
            }
            let total: T = row.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidMdp(format!(
                    "transition row (x={x}, u={u}) sums to {total}"
                )));
            }
            // leave rows alone when the discrepancy is pure rounding, so that
            // renormalisation is idempotent across save and load
            if (total - T::one()).abs() > T::epsilon() * T::of_usize(s) {
                row.iter_mut().for_each(|p| *p = *p / total);
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            gamma,
            reward_noise,
            transitions,
            rewards,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `D = |X|·|U|`.
    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn reward_noise(&self) -> T {
        self.reward_noise
    }

    /// `P_u(· | x)`.
    pub fn transition_row(&self, x: usize, u: usize) -> &[T] {
        let s = self.num_states;
        let start = (u * s + x) * s;
        &self.transitions[start..start + s]
    }

    pub fn reward(&self, x: usize, u: usize) -> T {
        self.rewards[x * self.num_actions + u]
    }

    /// Mean rewards as a state-action table.
    pub fn reward_table(&self) -> QFunction<T> {
        QFunction {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.rewards.clone(),
        }
    }

    /// Same kernel, new mean rewards.
    pub fn with_rewards(&self, rewards: &QFunction<T>) -> Result<Self> {
        rewards.check_shape(self)?;
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.gamma,
            self.reward_noise,
            self.transitions.clone(),
            rewards.values.clone(),
        )
    }

    /// Same rewards, new flat kernel laid out as `[(u * S + x) * S + x']`.
    pub fn with_transitions(&self, transitions: Vec<T>) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.gamma,
            self.reward_noise,
            transitions,
            self.rewards.clone(),
        )
    }

    pub fn with_reward_noise(&self, reward_noise: T) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.gamma,
            reward_noise,
            self.transitions.clone(),
            self.rewards.clone(),
        )
    }

    /// Flat kernel buffer, `[(u * S + x) * S + x']`.
    pub fn transitions_flat(&self) -> &[T] {
        &self.transitions
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// A real-valued table over state-action pairs (`Q`, `Q*`, `θ`, `ν`, …).
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction<T> {
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> Serialize for QFunction<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for QFunction<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(deserializer)?;
        QFunction::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> QFunction<T> {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::constant(num_states, num_actions, T::zero())
    }

    pub fn constant(num_states: usize, num_actions: usize, value: T) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn zeros_like(mdp: &TabularMdp<T>) -> Self {
        Self::zeros(mdp.num_states, mdp.num_actions)
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for x in 0..num_states {
            for u in 0..num_actions {
                values.push(f(x, u));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument("empty state-action table".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != num_actions) {
            return Err(Error::dims(num_actions, bad.len()));
        }
        let values: Vec<T> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite table entry".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    /// Wraps a flat buffer laid out as `[x * num_actions + u]`.
    pub fn from_flat(num_states: usize, num_actions: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::dims(num_states * num_actions, values.len()));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn get(&self, x: usize, u: usize) -> T {
        self.values[x * self.num_actions + u]
    }

    pub fn set(&mut self, x: usize, u: usize, value: T) {
        self.values[x * self.num_actions + u] = value;
    }

    pub fn row(&self, x: usize) -> &[T] {
        &self.values[x * self.num_actions..(x + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.values
            .chunks(self.num_actions)
            .map(<[T]>::to_vec)
            .collect()
    }

    pub fn check_shape(&self, mdp: &TabularMdp<T>) -> Result<()> {
        self.check_same_shape_dims(mdp.num_states, mdp.num_actions)
    }

    pub fn check_same_shape(&self, other: &QFunction<T>) -> Result<()> {
        self.check_same_shape_dims(other.num_states, other.num_actions)
    }

    fn check_same_shape_dims(&self, s: usize, a: usize) -> Result<()> {
        if self.num_states != s || self.num_actions != a {
            return Err(Error::dims(
                format!("{s}x{a}"),
                format!("{}x{}", self.num_states, self.num_actions),
            ));
        }
        Ok(())
    }

    /// `max_u Q(x, u)` for every state.
    pub fn max_per_state(&self) -> Vec<T> {
        self.values
            .chunks(self.num_actions)
            .map(|row| row.iter().copied().fold(T::neg_infinity(), T::max))
            .collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Entrywise combination; panics on shape mismatch.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "table shapes differ");
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn linf_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_entry(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_entry(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Index and value of the largest entry; the first in row-major order wins ties.
    pub fn argmax_entry(&self) -> ((usize, usize), T) {
        let (idx, val) = self
            .values
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        ((idx / self.num_actions, idx % self.num_actions), val)
    }
}

/// A deterministic stationary policy `x ↦ π(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&u| u >= num_actions) {
            return Err(Error::InvalidArgument(format!(
                "action index {bad} out of range for {num_actions} actions"
            )));
        }
        Ok(Self { actions })
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![action; num_states],
        }
    }

    pub fn action(&self, x: usize) -> usize {
        self.actions[x]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn check<T: Scalar>(&self, mdp: &TabularMdp<T>) -> Result<()> {
        if self.actions.len() != mdp.num_states() {
            return Err(Error::dims(mdp.num_states(), self.actions.len()));
        }
        if let Some(&bad) = self.actions.iter().find(|&&u| u >= mdp.num_actions()) {
            return Err(Error::InvalidArgument(format!(
                "policy action {bad} out of range"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, u) in self.actions.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{u}")?;
        }
        write!(f, ")")
    }
}

/// Bellman optimality operator `T(Q)(x,u) = r(x,u) + γ Σ_x' P_u(x'|x) max_u' Q(x',u')`.
pub fn bellman_optimality<T: Scalar>(mdp: &TabularMdp<T>, q: &QFunction<T>) -> Result<QFunction<T>> {
    q.check_shape(mdp)?;
    let v = q.max_per_state();
    Ok(expected_next(mdp, &v, true))
}

/// `r + γ P v` where `v` is a state-value vector; `with_reward = false`
/// drops the `r` term and the discount.
fn expected_next<T: Scalar>(mdp: &TabularMdp<T>, v: &[T], with_reward: bool) -> QFunction<T> {
    let gamma = mdp.gamma();
    QFunction::from_fn(mdp.num_states(), mdp.num_actions(), |x, u| {
        let ev = mdp
            .transition_row(x, u)
            .iter()
            .zip(v)
            .fold(T::zero(), |acc, (&p, &w)| acc + p * w);
        if with_reward {
            mdp.reward(x, u) + gamma * ev
        } else {
            ev
        }
    })
}

/// `(P^π Q)(x,u) = Σ_x' P_u(x'|x) Q(x', π(x'))`.
pub fn apply_policy_transition<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy,
    q: &QFunction<T>,
) -> Result<QFunction<T>> {
    q.check_shape(mdp)?;
    pi.check(mdp)?;
    let v: Vec<T> = (0..mdp.num_states()).map(|x| q.get(x, pi.action(x))).collect();
    Ok(expected_next(mdp, &v, false))
}

/// Greedy policy with smallest-index tie-breaking: `π(x)` is the first action
/// whose value is within `tie_tol` of the row maximum.
pub fn greedy_policy<T: Scalar>(q: &QFunction<T>, tie_tol: T) -> Policy {
    let actions = (0..q.num_states())
        .map(|x| {
            let row = q.row(x);
            let best = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.iter()
                .position(|&v| v >= best - tie_tol)
                .unwrap_or(0)
        })
        .collect();
    Policy { actions }
}

/// `P^π` as a `D × D` matrix on flattened state-action indices.
pub fn policy_transition_matrix<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<DenseMatrix<T>> {
    pi.check(mdp)?;
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let mut m = DenseMatrix::zeros(s * a, s * a);
    for x in 0..s {
        for u in 0..a {
            for (xn, &p) in mdp.transition_row(x, u).iter().enumerate() {
                m[(x * a + u, xn * a + pi.action(xn))] = m[(x * a + u, xn * a + pi.action(xn))] + p;
            }
        }
    }
    Ok(m)
}

fn resolvent_lu<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<LuDecomposition<T>> {
    let mut m = policy_transition_matrix(mdp, pi)?;
    let d = mdp.dim();
    let gamma = mdp.gamma();
    for i in 0..d {
        for j in 0..d {
            let id = if i == j { T::one() } else { T::zero() };
            m[(i, j)] = id - gamma * m[(i, j)];
        }
    }
    LuDecomposition::new(&m)
}

/// Solves `(I - γP^π) u = m`.
pub fn resolvent_apply<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy,
    m: &QFunction<T>,
) -> Result<QFunction<T>> {
    m.check_shape(mdp)?;
    let lu = resolvent_lu(mdp, pi)?;
    let u = lu.solve(m.values())?;
    QFunction::from_flat(mdp.num_states(), mdp.num_actions(), u)
}

/// The full matrix `(I - γP^π)^{-1}` over flattened state-action indices.
pub fn resolvent_matrix<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<DenseMatrix<T>> {
    resolvent_lu(mdp, pi)?.inverse()
}

/// `Q^π = (I - γP^π)^{-1} r`.
pub fn evaluate_policy<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy) -> Result<QFunction<T>> {
    resolvent_apply(mdp, pi, &mdp.reward_table())
}

const POLICY_ITERATION_CAP: usize = 10_000;

/// Computes `Q*` by policy iteration with exact policy evaluation.
///
/// Falls back to value iteration from the last iterate if a policy repeats
/// (floating-point ties), and polishes with value iteration until
/// `‖T(Q) - Q‖∞ ≤ tol`.
pub fn solve_optimal_q<T: Scalar>(mdp: &TabularMdp<T>, tol: T) -> Result<QFunction<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut pi = greedy_policy(&mdp.reward_table(), T::zero());
    let mut seen = HashSet::new();
    let mut q = evaluate_policy(mdp, &pi)?;
    for _ in 0..POLICY_ITERATION_CAP {
        seen.insert(pi.clone());
        let scale = T::one() + q.linf_norm();
        let next = greedy_policy(&q, scale * T::epsilon() * T::of(16.0));
        if next == pi || seen.contains(&next) {
            break;
        }
        pi = next;
        q = evaluate_policy(mdp, &pi)?;
    }
    polish_with_value_iteration(mdp, q, tol)
}

fn polish_with_value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    mut q: QFunction<T>,
    tol: T,
) -> Result<QFunction<T>> {
    let mut next = bellman_optimality(mdp, &q)?;
    let mut residual = linf_distance(&next, &q)?;
    let initial = residual.to_f64_lossy();
    let rate = mdp.gamma().to_f64_lossy();
    let needed = if initial > 0.0 {
        ((tol.to_f64_lossy() / initial).ln() / rate.ln()).ceil().max(0.0) as usize
    } else {
        0
    };
    let cap = needed.saturating_mul(2).max(1000);
    let mut iterations = 0;
    while residual > tol {
        if iterations >= cap {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual.to_f64_lossy(),
            });
        }
        q = next;
        next = bellman_optimality(mdp, &q)?;
        residual = linf_distance(&next, &q)?;
        iterations += 1;
    }
    Ok(q)
}

/// `max |q1 - q2|` over all entries.
pub fn linf_distance<T: Scalar>(q1: &QFunction<T>, q2: &QFunction<T>) -> Result<T> {
    q1.check_same_shape(q2)?;
    Ok(q1
        .values
        .iter()
        .zip(&q2.values)
        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
}

/// `max q - min q`.
pub fn span_seminorm<T: Scalar>(q: &QFunction<T>) -> T {
    q.max_entry() - q.min_entry()
}
