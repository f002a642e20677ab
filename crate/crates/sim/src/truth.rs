//! The estimand: the true marginal log odds ratio.
//!
//! The designs target the *marginal* (population-averaged) odds ratio
//! of treatment, not the conditional coefficient 0.4 that sits in the
//! outcome model — with a nonlinear link the two differ (the marginal
//! effect is attenuated). The marginal value has no closed form under
//! this covariate mix, so it is pinned by Monte Carlo over potential
//! outcomes: draw covariates, evaluate both counterfactual outcome
//! probabilities, realize `Y(1)` and `Y(0)` for every row, and contrast
//! the two arms on the logit scale.
//!
//! [`TRUE_LOG_OR`] freezes one ten-million-row evaluation with a
//! recorded seed; a regression test regenerates it bit-for-bit so the
//! constant can never drift away from the generator that defined it.

use rand::Rng;

use crate::population::{draw_covariate_row, expit, outcome_linear_predictor};
use crate::rng::{make_rng, STREAM_COVARIATES, STREAM_OUTCOME};

/// Seed of the frozen Monte-Carlo evaluation behind [`TRUE_LOG_OR`].
pub const TRUTH_SEED: u64 = 271_828_182;

/// Number of rows in the frozen evaluation.
pub const TRUTH_DRAWS: usize = 10_000_000;

/// True marginal log odds ratio of treatment under the data-generating
/// process: `monte_carlo_log_or(TRUTH_DRAWS, TRUTH_SEED)`, frozen.
pub const TRUE_LOG_OR: f64 = 0.364_931_596_873_345_86;

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Monte-Carlo estimate of the marginal log odds ratio from `n`
/// potential-outcome rows.
///
/// Covariates come from the covariate stream and both counterfactual
/// outcomes from the outcome stream, mirroring the stream discipline of
/// [`crate::population::generate_population`]; no treatment draw is
/// involved because both arms are realized for every row.
pub fn monte_carlo_log_or(n: usize, seed: u64) -> f64 {
    let mut covariate_rng = make_rng(seed, STREAM_COVARIATES);
    let mut outcome_rng = make_rng(seed, STREAM_OUTCOME);
    let mut events_treated = 0u64;
    let mut events_control = 0u64;
    for _ in 0..n {
        let x = draw_covariate_row(&mut covariate_rng);
        let p_treated = expit(outcome_linear_predictor(&x, 1));
        let p_control = expit(outcome_linear_predictor(&x, 0));
        events_treated += u64::from(outcome_rng.gen::<f64>() < p_treated);
        events_control += u64::from(outcome_rng.gen::<f64>() < p_control);
    }
    let rate_treated = events_treated as f64 / n as f64;
    let rate_control = events_control as f64 / n as f64;
    logit(rate_treated) - logit(rate_control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::OUTCOME_TREATMENT;

    #[test]
    fn evaluation_is_deterministic() {
        let a = monte_carlo_log_or(50_000, 9);
        let b = monte_carlo_log_or(50_000, 9);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, monte_carlo_log_or(50_000, 10));
    }

    #[test]
    fn frozen_constant_regenerates_exactly() {
        let value = monte_carlo_log_or(TRUTH_DRAWS, TRUTH_SEED);
        assert_eq!(
            value.to_bits(),
            TRUE_LOG_OR.to_bits(),
            "regenerated {value:.17} != frozen {TRUE_LOG_OR:.17}"
        );
    }

    #[test]
    fn marginal_effect_is_attenuated_but_close() {
        // Averaging over covariates attenuates the conditional log-OR of
        // 0.4 toward the marginal 0.364; check both facts on a fresh seed
        // with bounds several Monte-Carlo standard errors wide.
        let estimate = monte_carlo_log_or(400_000, 777);
        assert!(estimate > 0.0);
        assert!(estimate < OUTCOME_TREATMENT, "{estimate} not attenuated");
        assert!((estimate - 0.364).abs() < 2e-2, "{estimate} far from 0.364");
    }

    #[test]
    fn independent_seeds_agree_within_monte_carlo_error() {
        // The logit contrast at one million rows has a standard error
        // near 3e-3; four of those is a comfortable deterministic bound.
        let other = monte_carlo_log_or(1_000_000, 4_242);
        assert!(
            (other - TRUE_LOG_OR).abs() < 1.2e-2,
            "{other} vs {TRUE_LOG_OR}"
        );
    }

    #[test]
    #[ignore = "prints the frozen value; run when recalibrating"]
    fn print_frozen_value() {
        let value = monte_carlo_log_or(TRUTH_DRAWS, TRUTH_SEED);
        println!(
            "TRUE_LOG_OR = {value:.17e} (bits {:#018x})",
            value.to_bits()
        );
    }
}
