//! Two-layer deep inverse prior networks with computable convergence and
//! recovery certificates.
//!
//! A network `g(u, θ) = k^{-1/2} V φ(W u)` with a fixed random input `u` is
//! fitted by gradient descent so that `A g(u, θ)` matches an observation `y`.
//! The [`certificates`] module evaluates the closed-form quantities that say
//! when this is guaranteed to converge and how close the recovered signal is
//! to the truth. The [`experiments`] module reproduces the phase-transition,
//! noise and loss-exponent studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod operators;
pub mod trainer;

pub use certificates::{certify, Certificate, RecoveryBoundInputs, Variant};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SeededRng};
pub use losses::{Desingularizer, KLLoss};
pub use model::{ActivationKind, Layers, ParamVector, TwoLayerNet};
pub use operators::{ForwardOperator, LinearOperator, NoiseSpec};
pub use trainer::{train, GroundTruth, StepMode, TrainConfig, TrainTrace};
