//! Outcome-dependent site membership.
//!
//! Several designs need one site whose case mix differs from the
//! population: a registry that sees almost no events, or one that is
//! case-enriched. Rows are routed there by a logistic membership model
//! `Pr(site | Y) = expit(a + b Y)` whose two parameters are pinned by
//! two moments — the expected site size and the expected case rate
//! within the site:
//!
//! ```text
//! E[n_s]           = n * ((1 - pi) * expit(a) + pi * expit(a + b))
//! E[cases] / E[n_s] = n * pi * expit(a + b) / E[n_s]
//! ```
//!
//! where `pi` is the overall case rate. The system inverts in closed
//! form: the target case composition fixes the membership probability
//! within each outcome stratum separately,
//!
//! ```text
//! expit(a + b) = rate * n_s / (n * pi)          (cases)
//! expit(a)     = (1 - rate) * n_s / (n * (1 - pi))   (controls)
//! ```
//!
//! and `(a, b)` follow by logit. Targets that push either stratum
//! probability outside `(0, 1)` are structurally impossible and are
//! reported as [`Error::Infeasible`].

use crate::{Error, Result};

#[inline]
fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Solve the membership model for a site of expected size `target_n`
/// and expected case rate `target_case_rate`, drawn from a population
/// of `n_total` rows with overall case rate `overall_case_rate`.
///
/// Returns `(a, b)` of `Pr(site | Y) = expit(a + b Y)`. When the target
/// case rate equals the overall rate the outcome carries no membership
/// information and `b` is exactly zero.
pub fn solve_assignment_params(
    target_n: usize,
    target_case_rate: f64,
    overall_case_rate: f64,
    n_total: usize,
) -> Result<(f64, f64)> {
    if target_n == 0 || target_n >= n_total {
        return Err(Error::Infeasible(format!(
            "target site size {target_n} must lie strictly between 0 and {n_total}"
        )));
    }
    for (name, rate) in [
        ("target case rate", target_case_rate),
        ("overall case rate", overall_case_rate),
    ] {
        if !(rate > 0.0 && rate < 1.0) || !rate.is_finite() {
            return Err(Error::Infeasible(format!(
                "{name} {rate} must lie strictly inside (0, 1)"
            )));
        }
    }

    let n = n_total as f64;
    let size = target_n as f64;
    // Membership probabilities within the case and control strata. When
    // the two rates coincide the algebra collapses to the common value
    // size / n; taking that branch explicitly keeps b = 0 exact instead
    // of leaving a rounding-level residue.
    let (p_case, p_control) = if target_case_rate == overall_case_rate {
        let p = size / n;
        (p, p)
    } else {
        (
            target_case_rate * size / (n * overall_case_rate),
            (1.0 - target_case_rate) * size / (n * (1.0 - overall_case_rate)),
        )
    };
    for (stratum, p) in [("case", p_case), ("control", p_control)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Infeasible(format!(
                "targets require membership probability {p:.6} in the {stratum} stratum"
            )));
        }
    }

    let a = logit(p_control);
    let b = logit(p_case) - a;
    Ok((a, b))
}

/// Membership probability of a row with outcome `y` under `(a, b)`.
pub fn membership_probability(a: f64, b: f64, y: u8) -> f64 {
    expit(a + b * f64::from(y))
}

/// Expected site size and case rate implied by `(a, b)`; the inverse of
/// [`solve_assignment_params`], used to round-trip the moment equations.
pub fn implied_moments(a: f64, b: f64, overall_case_rate: f64, n_total: usize) -> (f64, f64) {
    let n = n_total as f64;
    let pi = overall_case_rate;
    let cases = n * pi * expit(a + b);
    let size = cases + n * (1.0 - pi) * expit(a);
    (size, cases / size)
}
