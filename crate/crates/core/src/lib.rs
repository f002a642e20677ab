//! Core numerical machinery for COLA (Collaborative Operation of Linked
//! Analysis): inverse-probability-of-treatment-weighted (IPTW) estimation of
//! average treatment effects from binary-outcome data held at one or more
//! sites.
//!
//! The crate provides the building blocks shared by every analysis method:
//!
//! * [`data::SiteDataset`] — a site's private subject-level rows `(Y, A, X)`.
//! * [`params::ParameterVector`] — the stacked coefficients `θ = (γ, β)` of
//!   the logistic propensity model and the marginal structural model (MSM).
//! * [`estfun`] — the stacked estimating function `Ψ = (Ψ^ps, Ψ^Δ)`, its
//!   analytic Jacobian, and per-block score/sensitivity sums.
//! * [`solver`] — Newton–Raphson root finding (local, pooled, and with an
//!   additive prior term for incremental updating) plus the sandwich
//!   covariance.
//! * [`estimands`] — risk difference, log relative risk, and log odds ratio
//!   with delta-method standard errors.
//! * [`inference`] — the assembled end product: point estimates, covariance,
//!   estimands, and convergence diagnostics.
//!
//! All computation here is deterministic: summation order is fixed to row
//! order so that equal inputs produce bit-identical outputs regardless of
//! where or when they are evaluated.

pub mod data;
pub mod error;
pub mod estfun;
pub mod estimands;
pub mod inference;
pub mod params;
pub mod solver;

pub use data::SiteDataset;
pub use error::{Error, Result};
pub use estfun::{BlockEvaluation, EstimatingEvaluation, Link};
pub use estimands::{derive_estimands, EstimandReport, Z_95};
pub use inference::{ConvergenceDiagnostics, InferenceResult};
pub use params::ParameterVector;
pub use solver::{
    incremental_update, sandwich_covariance, solve_local, solve_oracle, BlockSelector,
    FailureReason, SolveOutcome, SolverConfig,
};
