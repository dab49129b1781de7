//! Two-state, two-action family whose local complexity is tunable by `λ`.
//!
//! Action `u₁` keeps state `x₁` with probability `p = (4γ-1)/(3γ)` and
//! otherwise moves to the absorbing state `x₂`; action `u₂` stays put.
//! Rewards are `r(x₁,u₁) = 1`, `r(x₂,u₁) = τ = 1 - (1-γ)^λ` and zero elsewhere.

use crate::error::{Error, Result};
use crate::mdp::{QFunction, TabularMdp};
use crate::scalar::Scalar;

fn check<T: Scalar>(gamma: T, lambda: T) -> Result<()> {
    if !(gamma > T::of(0.25) && gamma < T::one()) {
        return Err(Error::InvalidArgument(format!("discount {gamma} outside (1/4, 1)")));
    }
    if !(lambda >= T::zero() && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent {lambda} must be non-negative")));
    }
    Ok(())
}

fn tau<T: Scalar>(gamma: T, lambda: T) -> T {
    T::one() - (T::one() - gamma).powf(lambda)
}

pub fn example1_mdp<T: Scalar>(gamma: T, lambda: T) -> Result<TabularMdp<T>> {
    check(gamma, lambda)?;
    let (zero, one) = (T::zero(), T::one());
    let p = (T::of(4.0) * gamma - one) / (T::of(3.0) * gamma);
    TabularMdp::new(
        2,
        2,
        gamma,
        zero,
        vec![vec![vec![p, one - p], vec![zero, one]], vec![vec![one, zero], vec![zero, one]]],
        vec![vec![one, zero], vec![tau(gamma, lambda), zero]],
    )
}

/// Closed-form `Q*` of [`example1_mdp`].
pub fn example1_qstar<T: Scalar>(gamma: T, lambda: T) -> Result<QFunction<T>> {
    check(gamma, lambda)?;
    let t = tau(gamma, lambda);
    let one_minus = T::one() - gamma;
    let v1 = (T::of(3.0) + t) / (T::of(4.0) * one_minus);
    let v2 = t / one_minus;
    QFunction::from_rows(vec![vec![v1, gamma * v1], vec![v2, gamma * v2]])
}

/// `⌈(512/9) / (1-γ)³⌉` draws.
pub fn paper_budget(gamma: f64) -> u64 {
    ((512.0 / 9.0) / (1.0 - gamma).powi(3)).ceil() as u64
}
