use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stacked model coefficients `θ = (γ, β)`.
///
/// `gamma` holds the propensity-model coefficients (intercept first, length
/// `p_γ`); `beta = (β₀, β_A)` holds the marginal structural model
/// coefficients. The stacked length is `p = p_γ + 2`, and block boundaries
/// are fixed at construction — every site participating in a run must agree
/// on `p_γ`. All entries are finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    gamma: DVector<f64>,
    beta: Vector2<f64>,
}

impl ParameterVector {
    pub fn new(gamma: DVector<f64>, beta: Vector2<f64>) -> Result<Self> {
        if !(gamma.iter().all(|v| v.is_finite()) && beta.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite {
                context: "ParameterVector",
            });
        }
        Ok(Self { gamma, beta })
    }

    /// The zero vector with `p_gamma` propensity coefficients.
    pub fn zeros(p_gamma: usize) -> Self {
        Self {
            gamma: DVector::zeros(p_gamma),
            beta: Vector2::zeros(),
        }
    }

    pub fn p_gamma(&self) -> usize {
        self.gamma.len()
    }

    /// Stacked length `p = p_γ + 2`.
    pub fn p(&self) -> usize {
        self.gamma.len() + 2
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn beta(&self) -> &Vector2<f64> {
        &self.beta
    }

    pub fn beta0(&self) -> f64 {
        self.beta[0]
    }

    pub fn beta_a(&self) -> f64 {
        self.beta[1]
    }

    /// A copy with the γ block replaced.
    pub fn with_gamma(&self, gamma: DVector<f64>) -> Result<Self> {
        Self::new(gamma, self.beta)
    }

    /// A copy with the β block replaced.
    pub fn with_beta(&self, beta: Vector2<f64>) -> Result<Self> {
        Self::new(self.gamma.clone(), beta)
    }

    /// The concatenation `(γ, β₀, β_A)` as a dense vector of length `p`.
    pub fn stacked(&self) -> DVector<f64> {
        let p_gamma = self.gamma.len();
        let mut out = DVector::zeros(p_gamma + 2);
        out.rows_mut(0, p_gamma).copy_from(&self.gamma);
        out[p_gamma] = self.beta[0];
        out[p_gamma + 1] = self.beta[1];
        out
    }

    /// Splits a stacked vector of length `p_gamma + 2` back into blocks.
    pub fn from_stacked(stacked: &DVector<f64>, p_gamma: usize) -> Result<Self> {
        if stacked.len() != p_gamma + 2 {
            return Err(Error::DimensionMismatch {
                context: "ParameterVector::from_stacked",
                expected: p_gamma + 2,
                actual: stacked.len(),
            });
        }
        Self::new(
            stacked.rows(0, p_gamma).into_owned(),
            Vector2::new(stacked[p_gamma], stacked[p_gamma + 1]),
        )
    }

    /// Max-norm of the stacked vector.
    pub fn max_norm(&self) -> f64 {
        self.gamma
            .iter()
            .chain(self.beta.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}
