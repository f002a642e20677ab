//! Causal estimands derived from the fitted marginal structural model:
//! risk difference `Δ_D = μ₁ − μ₀`, log relative risk `Δ_RR = log(μ₁/μ₀)`,
//! and log odds ratio `Δ_OR = β_A`, where `μ₁ = expit(β₀+β_A)` and
//! `μ₀ = expit(β₀)` are the marginal potential-outcome means under
//! treatment and control.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::estfun::expit;

/// Normal quantile for 95% confidence intervals.
pub const Z_95: f64 = 1.959964;

/// All three estimands with delta-method standard errors and 95% CIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandReport {
    pub mu1: f64,
    pub mu0: f64,
    pub delta_d: f64,
    pub log_rr: f64,
    pub log_or: f64,
    pub se_delta_d: f64,
    pub se_log_rr: f64,
    pub se_log_or: f64,
    pub ci95_delta_d: (f64, f64),
    pub ci95_log_rr: (f64, f64),
    pub ci95_log_or: (f64, f64),
    pub or_point: f64,
    pub ci95_or: (f64, f64),
}

fn gradient_se(grad: &Vector2<f64>, cov: &Matrix2<f64>) -> f64 {
    let v = grad.dot(&(cov * grad));
    v.sqrt()
}

fn ci(point: f64, se: f64) -> (f64, f64) {
    (point - Z_95 * se, point + Z_95 * se)
}

/// Maps `β = (β₀, β_A)` and the β-block of the sandwich covariance to the
/// estimand scale (logistic outcome link). Standard errors for `Δ_D` and
/// `Δ_RR` use analytic delta-method gradients; `Δ_OR = β_A` directly.
pub fn derive_estimands(
    beta: &Vector2<f64>,
    covariance_beta_block: &Matrix2<f64>,
) -> EstimandReport {
    let mu1 = expit(beta[0] + beta[1]);
    let mu0 = expit(beta[0]);
    let delta_d = mu1 - mu0;
    let log_rr = (mu1 / mu0).ln();
    let log_or = beta[1];

    let d1 = mu1 * (1.0 - mu1);
    let d0 = mu0 * (1.0 - mu0);
    // ∂Δ_D/∂β = (d1 − d0, d1); ∂Δ_RR/∂β = (μ₀ − μ₁, 1 − μ₁); ∂Δ_OR/∂β = (0, 1).
    let grad_d = Vector2::new(d1 - d0, d1);
    let grad_rr = Vector2::new(mu0 - mu1, 1.0 - mu1);
    let se_delta_d = gradient_se(&grad_d, covariance_beta_block);
    let se_log_rr = gradient_se(&grad_rr, covariance_beta_block);
    let se_log_or = covariance_beta_block[(1, 1)].sqrt();

    let ci95_log_or = ci(log_or, se_log_or);
    EstimandReport {
        mu1,
        mu0,
        delta_d,
        log_rr,
        log_or,
        se_delta_d,
        se_log_rr,
        se_log_or,
        ci95_delta_d: ci(delta_d, se_delta_d),
        ci95_log_rr: ci(log_rr, se_log_rr),
        ci95_log_or,
        or_point: log_or.exp(),
        ci95_or: (ci95_log_or.0.exp(), ci95_log_or.1.exp()),
    }
}
