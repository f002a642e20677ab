//! The assembled end product of any analysis method: point estimates, the
//! sandwich covariance, derived estimands with confidence intervals, and
//! convergence diagnostics.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::{derive_estimands, EstimandReport};
use crate::params::ParameterVector;
use crate::solver::{sandwich_covariance, FailureReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    pub converged: bool,
    pub failure_reason: FailureReason,
    /// Total Newton iterations across all solves that produced the estimate.
    pub iterations: usize,
    /// Propensity-clamp events observed while accumulating the cumulants.
    pub clamp_events: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceResult {
    pub theta: ParameterVector,
    /// Finite-sample sandwich covariance of the stacked `θ̂`.
    pub covariance: DMatrix<f64>,
    pub estimands: EstimandReport,
    pub n_total: usize,
    pub diagnostics: ConvergenceDiagnostics,
}

impl InferenceResult {
    /// Builds the result from sensitivity/variability totals via the
    /// sandwich formula, deriving estimands from the β block.
    pub fn from_sandwich(
        theta: ParameterVector,
        h_total: &DMatrix<f64>,
        v_total: &DMatrix<f64>,
        n_total: usize,
        diagnostics: ConvergenceDiagnostics,
    ) -> Result<Self> {
        let covariance = sandwich_covariance(h_total, v_total, n_total)?;
        Self::from_covariance(theta, covariance, n_total, diagnostics)
    }

    pub fn from_covariance(
        theta: ParameterVector,
        covariance: DMatrix<f64>,
        n_total: usize,
        diagnostics: ConvergenceDiagnostics,
    ) -> Result<Self> {
        let p = theta.p();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "InferenceResult covariance",
                expected: p,
                actual: covariance.nrows(),
            });
        }
        let estimands = derive_estimands(
            theta.beta(),
            &Self::beta_block_of(&covariance, theta.p_gamma()),
        );
        Ok(Self {
            theta,
            covariance,
            estimands,
            n_total,
            diagnostics,
        })
    }

    fn beta_block_of(covariance: &DMatrix<f64>, p_gamma: usize) -> Matrix2<f64> {
        Matrix2::new(
            covariance[(p_gamma, p_gamma)],
            covariance[(p_gamma, p_gamma + 1)],
            covariance[(p_gamma + 1, p_gamma)],
            covariance[(p_gamma + 1, p_gamma + 1)],
        )
    }

    /// β-block of the covariance.
    pub fn beta_covariance(&self) -> Matrix2<f64> {
        Self::beta_block_of(&self.covariance, self.theta.p_gamma())
    }

    pub fn beta_a(&self) -> f64 {
        self.theta.beta_a()
    }

    pub fn se_beta_a(&self) -> f64 {
        self.estimands.se_log_or
    }

    pub fn ci95_beta_a(&self) -> (f64, f64) {
        self.estimands.ci95_log_or
    }
}
