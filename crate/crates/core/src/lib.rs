//! Instance-dependent analysis of Q-learning on tabular MDPs.
//!
//! The crate covers the synchronous generative model, the local complexity
//! functional `ν` with its transition and reward parts, variance-reduced
//! Q-learning, the perturbation constructions behind the matching lower
//! bound, and a small experiment harness around a two-state family.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod complexity;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lowerbound;
pub mod mdp;
pub mod random;
pub mod sampling;
pub mod scalar;
pub mod solver;

pub use complexity::{ComplexityReport, InstanceAnalysis, MinSampleSize};
pub use error::{Error, ErrorKind, Result};
pub use mdp::{Policy, QFunction, TabularMdp};
pub use scalar::Scalar;
pub use solver::{EpochSchedule, RunRecord, StepSize, TraceRow, VrqlConfig};

pub type Mdp = TabularMdp<f64>;
pub type QTable = QFunction<f64>;
pub type Sampler<'a> = sampling::SeededSampler<'a, f64>;
pub type Report = ComplexityReport<f64>;
pub type Run = RunRecord<f64>;
pub type Mdp32 = TabularMdp<f32>;
pub type QTable32 = QFunction<f32>;
