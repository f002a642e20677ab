//! Incremental (prior-augmented) estimating-equation updates.
//!
//! A relay hop solves `Ψ_local(θ) + H_prior·(θ_prev − θ) = 0`, where
//! `H_prior` is the sensitivity accumulated at upstream sites and `θ_prev`
//! the carried-in estimate. The prior term acts as a quadratic anchor: with
//! `H_prior = 0` the update is exactly a local fit, and as `H_prior` grows
//! the root is pulled toward `θ_prev`, which is what lets a single
//! sequential pass approximate the pooled solution.
//!
//! The solve itself lives in the core solver next to the plain local and
//! pooled variants, since all three share one Newton kernel; it is
//! re-exported here as part of the engine's surface.

pub use cola_core::solver::incremental_update;
