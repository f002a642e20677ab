//! The frozen data-generating process.
//!
//! Every simulated individual carries five covariates, a treatment
//! indicator, and a binary outcome:
//!
//! * covariates: `X1, X2, X3 ~ N(0, 1)` independently,
//!   `X4 ~ Bernoulli(0.5)`, `X5 ~ Bernoulli(0.6)`;
//! * treatment: `A ~ Bernoulli(expit(0.5 + 0.3 X1 + 0.3 X2 + 0.5 X3 +
//!   0.5 X4 + 0.3 X5))`;
//! * outcome: `Y ~ Bernoulli(expit(c + 0.4 A + 0.3 X1 + 0.5 X2 +
//!   0.3 X3 + 0.3 X4 + 0.5 X5))` with intercept `c = -1.69`, calibrated
//!   so the marginal event rate is 0.30.
//!
//! The three passes draw from separate RNG streams of the same seed
//! (see [`crate::rng`]), so the covariate block of a population can be
//! reproduced, or a single pass redrawn, without disturbing the others.
//! Within a pass, draws proceed row by row; the covariate pass consumes
//! `X1..X5` in order for each row before moving to the next.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{make_rng, STREAM_COVARIATES, STREAM_OUTCOME, STREAM_TREATMENT};

/// Number of covariates in the process (and columns of [`Population::covariates`]).
pub const N_COVARIATES: usize = 5;

/// Propensity-model coefficients `(intercept, X1..X5)`.
pub const TREATMENT_COEFFS: [f64; 6] = [0.5, 0.3, 0.3, 0.5, 0.5, 0.3];

/// Outcome-model intercept, calibrated to a 0.30 marginal event rate.
pub const OUTCOME_INTERCEPT: f64 = -1.69;

/// Conditional log odds ratio of treatment in the outcome model.
pub const OUTCOME_TREATMENT: f64 = 0.4;

/// Outcome-model covariate coefficients `(X1..X5)`.
pub const OUTCOME_COVARIATE_COEFFS: [f64; 5] = [0.3, 0.5, 0.3, 0.3, 0.5];

/// Marginal success probability of `X4`.
pub const X4_PROBABILITY: f64 = 0.5;

/// Marginal success probability of `X5`.
pub const X5_PROBABILITY: f64 = 0.6;

#[inline]
pub(crate) fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A fully realized population: one row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    /// `n x 5` covariate matrix, columns `X1..X5`.
    pub covariates: DMatrix<f64>,
    /// Treatment indicators, one per row.
    pub treatment: Vec<u8>,
    /// Outcome indicators, one per row.
    pub outcome: Vec<u8>,
}

impl Population {
    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// True propensity score of row `i`.
    pub fn propensity(&self, i: usize) -> f64 {
        expit(treatment_linear_predictor(&row(&self.covariates, i)))
    }

    /// True outcome probability of row `i` under its realized treatment.
    pub fn outcome_probability(&self, i: usize) -> f64 {
        expit(outcome_linear_predictor(
            &row(&self.covariates, i),
            self.treatment[i],
        ))
    }
}

fn row(covariates: &DMatrix<f64>, i: usize) -> [f64; N_COVARIATES] {
    let mut x = [0.0; N_COVARIATES];
    for (j, slot) in x.iter_mut().enumerate() {
        *slot = covariates[(i, j)];
    }
    x
}

/// Linear predictor of the treatment model at covariate row `x`.
pub fn treatment_linear_predictor(x: &[f64; N_COVARIATES]) -> f64 {
    let mut lp = TREATMENT_COEFFS[0];
    for j in 0..N_COVARIATES {
        lp += TREATMENT_COEFFS[j + 1] * x[j];
    }
    lp
}

/// Linear predictor of the outcome model at covariate row `x` under treatment `a`.
pub fn outcome_linear_predictor(x: &[f64; N_COVARIATES], a: u8) -> f64 {
    let mut lp = OUTCOME_INTERCEPT + OUTCOME_TREATMENT * f64::from(a);
    for j in 0..N_COVARIATES {
        lp += OUTCOME_COVARIATE_COEFFS[j] * x[j];
    }
    lp
}

/// Draw one covariate row from the marginal covariate distribution.
pub(crate) fn draw_covariate_row<R: Rng>(rng: &mut R) -> [f64; N_COVARIATES] {
    let x1: f64 = StandardNormal.sample(rng);
    let x2: f64 = StandardNormal.sample(rng);
    let x3: f64 = StandardNormal.sample(rng);
    let x4 = f64::from(rng.gen::<f64>() < X4_PROBABILITY);
    let x5 = f64::from(rng.gen::<f64>() < X5_PROBABILITY);
    [x1, x2, x3, x4, x5]
}

/// Generate `n` individuals from the process with the given seed.
pub fn generate_population(n: usize, seed: u64) -> Population {
    let mut covariates = DMatrix::zeros(n, N_COVARIATES);
    let mut rng = make_rng(seed, STREAM_COVARIATES);
    for i in 0..n {
        let x = draw_covariate_row(&mut rng);
        for (j, &value) in x.iter().enumerate() {
            covariates[(i, j)] = value;
        }
    }

    let mut rng = make_rng(seed, STREAM_TREATMENT);
    let treatment: Vec<u8> = (0..n)
        .map(|i| {
            let p = expit(treatment_linear_predictor(&row(&covariates, i)));
            u8::from(rng.gen::<f64>() < p)
        })
        .collect();

    let mut rng = make_rng(seed, STREAM_OUTCOME);
    let outcome: Vec<u8> = (0..n)
        .map(|i| {
            let p = expit(outcome_linear_predictor(&row(&covariates, i), treatment[i]));
            u8::from(rng.gen::<f64>() < p)
        })
        .collect();

    Population {
        covariates,
        treatment,
        outcome,
    }
}
