//! Newton–Raphson root finding for the estimating equations, in local,
//! pooled (oracle), and prior-augmented (incremental) forms, plus the
//! sandwich covariance.
//!
//! Convergence is declared when the max-norm of the applied update step
//! falls to `tolerance` or below; the step is applied first, so a converged
//! solve has already absorbed its final correction and re-evaluating the
//! selected block at `θ̂` yields a residual within `tolerance·(1+‖θ̂‖)`.
//! Non-convergence is an outcome, not an error: separated or zero-cell
//! logistic fits surface as `max_iterations`, `singular_system`, or
//! `diverged`, and those labels feed failure accounting downstream.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::data::SiteDataset;
use crate::error::{Error, Result};
use crate::estfun;
use crate::params::ParameterVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the max-norm of the Newton update step.
    pub tolerance: f64,
    /// Max-norm bound on `θ`; exceeding it is declared divergence.
    pub divergence_bound: f64,
    /// Minimum acceptable reciprocal condition number of the Newton system.
    pub regularization_floor: f64,
    /// Optional step-halving (up to 10 halvings while the residual norm
    /// increases). Off by default to mirror plain Newton–Raphson.
    pub damped: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-8,
            divergence_bound: 1e4,
            regularization_floor: 1e-12,
            damped: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    MaxIterations,
    SingularSystem,
    Diverged,
    PositivityViolation,
}

impl FailureReason {
    pub fn is_failure(self) -> bool {
        self != FailureReason::None
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// The final iterate; on failure, the last finite iterate reached.
    pub theta_hat: ParameterVector,
    pub iterations: usize,
    pub converged: bool,
    pub failure_reason: FailureReason,
}

/// Which block of the stacked system to solve.
#[derive(Debug, Clone)]
pub enum BlockSelector {
    /// Both blocks, staged: the γ root first, then the β root at fixed `γ̂`.
    /// Because `Ψ^ps` does not depend on β, the staged solution is a root of
    /// the full stacked system.
    Joint,
    /// The propensity block alone.
    PsOnly,
    /// The MSM block alone, holding γ fixed at the given value.
    MsmOnly { gamma: DVector<f64> },
}

pub(crate) struct NewtonResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub failure: FailureReason,
}

impl NewtonResult {
    fn failed(x: DVector<f64>, iterations: usize, failure: FailureReason) -> Self {
        Self {
            x,
            iterations,
            converged: false,
            failure,
        }
    }
}

/// Core Newton iteration on `residual(x) = 0` where `eval` returns the
/// residual and the sensitivity matrix `H(x)` (negated Jacobian), so the
/// update solves `H δ = residual` and applies `x ← x + δ`.
pub(crate) fn newton<F>(init: DVector<f64>, mut eval: F, config: &SolverConfig) -> NewtonResult
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut x = init;
    for it in 1..=config.max_iterations {
        let (residual, h) = match eval(&x) {
            Ok(v) => v,
            Err(Error::Positivity { .. }) | Err(Error::DegenerateWeight { .. }) => {
                return NewtonResult::failed(x, it, FailureReason::PositivityViolation)
            }
            Err(_) => return NewtonResult::failed(x, it, FailureReason::Diverged),
        };
        if !(residual.iter().all(|v| v.is_finite()) && h.iter().all(|v| v.is_finite())) {
            return NewtonResult::failed(x, it, FailureReason::Diverged);
        }

        let svd = h.svd(true, true);
        let (mut smin, mut smax) = (f64::INFINITY, 0.0_f64);
        for &s in svd.singular_values.iter() {
            smin = smin.min(s);
            smax = smax.max(s);
        }
        let rcond = smin / smax;
        if !rcond.is_finite() || rcond < config.regularization_floor {
            return NewtonResult::failed(x, it, FailureReason::SingularSystem);
        }
        let mut step = match svd.solve(&residual, 0.0) {
            Ok(step) => step,
            Err(_) => return NewtonResult::failed(x, it, FailureReason::SingularSystem),
        };

        if config.damped {
            let base_norm = residual.amax();
            for _ in 0..10 {
                let trial = &x + &step;
                let worse = match eval(&trial) {
                    Ok((r, _)) => !r.amax().is_finite() || r.amax() > base_norm,
                    Err(_) => true,
                };
                if !worse {
                    break;
                }
                step *= 0.5;
            }
        }

        let x_new = &x + &step;
        if !x_new.iter().all(|v| v.is_finite()) {
            return NewtonResult::failed(x, it, FailureReason::Diverged);
        }
        x = x_new;
        if x.amax() > config.divergence_bound {
            return NewtonResult::failed(x, it, FailureReason::Diverged);
        }
        if step.amax() <= config.tolerance {
            return NewtonResult {
                x,
                iterations: it,
                converged: true,
                failure: FailureReason::None,
            };
        }
    }
    NewtonResult::failed(x, config.max_iterations, FailureReason::MaxIterations)
}

fn beta_from(x: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(x[0], x[1])
}

fn finite_or_zeros(x: DVector<f64>) -> DVector<f64> {
    if x.iter().all(|v| v.is_finite()) {
        x
    } else {
        DVector::zeros(x.len())
    }
}

/// Solves the selected block of `Σᵢ Ψᵢ(θ) = 0` on one dataset.
pub fn solve_local(
    dataset: &SiteDataset,
    objective: BlockSelector,
    init: &ParameterVector,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    if dataset.p_gamma() != init.p_gamma() {
        return Err(Error::DimensionMismatch {
            context: "solve_local: init vs dataset design",
            expected: dataset.p_gamma(),
            actual: init.p_gamma(),
        });
    }
    match objective {
        BlockSelector::PsOnly => {
            let res = newton(
                init.gamma().clone(),
                |g| estfun::evaluate_ps(dataset, g).map(|b| (b.psi_sum, b.h_sum)),
                config,
            );
            Ok(SolveOutcome {
                theta_hat: ParameterVector::new(finite_or_zeros(res.x), *init.beta())?,
                iterations: res.iterations,
                converged: res.converged,
                failure_reason: res.failure,
            })
        }
        BlockSelector::MsmOnly { gamma } => {
            let res = newton(
                DVector::from_vec(vec![init.beta()[0], init.beta()[1]]),
                |b| {
                    estfun::evaluate_msm(dataset, &gamma, &beta_from(b))
                        .map(|e| (e.psi_sum, e.h_sum))
                },
                config,
            );
            let beta = beta_from(&finite_or_zeros(res.x));
            Ok(SolveOutcome {
                theta_hat: ParameterVector::new(gamma, beta)?,
                iterations: res.iterations,
                converged: res.converged,
                failure_reason: res.failure,
            })
        }
        BlockSelector::Joint => {
            let ps = solve_local(dataset, BlockSelector::PsOnly, init, config)?;
            if !ps.converged {
                return Ok(ps);
            }
            let msm = solve_local(
                dataset,
                BlockSelector::MsmOnly {
                    gamma: ps.theta_hat.gamma().clone(),
                },
                &ps.theta_hat,
                config,
            )?;
            Ok(SolveOutcome {
                theta_hat: msm.theta_hat,
                iterations: ps.iterations + msm.iterations,
                converged: msm.converged,
                failure_reason: msm.failure_reason,
            })
        }
    }
}

/// Solves the pooled two-stage system over all datasets: the centralized
/// (oracle) estimator. With a single dataset this is exactly `solve_local`
/// with the joint selector.
pub fn solve_oracle(datasets: &[SiteDataset], config: &SolverConfig) -> Result<SolveOutcome> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::EmptyDataset("solve_oracle".into()))?;
    let p_gamma = first.p_gamma();
    for ds in datasets {
        if ds.p_gamma() != p_gamma {
            return Err(Error::DimensionMismatch {
                context: "solve_oracle: covariate dimension across sites",
                expected: p_gamma,
                actual: ds.p_gamma(),
            });
        }
    }
    let init = ParameterVector::zeros(p_gamma);
    if datasets.len() == 1 {
        return solve_local(first, BlockSelector::Joint, &init, config);
    }

    let ps = newton(
        init.gamma().clone(),
        |g| {
            let mut psi = DVector::zeros(p_gamma);
            let mut h = DMatrix::zeros(p_gamma, p_gamma);
            for ds in datasets {
                let b = estfun::evaluate_ps(ds, g)?;
                psi += b.psi_sum;
                h += b.h_sum;
            }
            Ok((psi, h))
        },
        config,
    );
    if !ps.converged {
        return Ok(SolveOutcome {
            theta_hat: ParameterVector::new(finite_or_zeros(ps.x), Vector2::zeros())?,
            iterations: ps.iterations,
            converged: false,
            failure_reason: ps.failure,
        });
    }
    let gamma_hat = ps.x;
    let msm = newton(
        DVector::zeros(2),
        |b| {
            let beta = beta_from(b);
            let mut psi = DVector::zeros(2);
            let mut h = DMatrix::zeros(2, 2);
            for ds in datasets {
                let e = estfun::evaluate_msm(ds, &gamma_hat, &beta)?;
                psi += e.psi_sum;
                h += e.h_sum;
            }
            Ok((psi, h))
        },
        config,
    );
    let beta = beta_from(&finite_or_zeros(msm.x));
    Ok(SolveOutcome {
        theta_hat: ParameterVector::new(gamma_hat, beta)?,
        iterations: ps.iterations + msm.iterations,
        converged: msm.converged,
        failure_reason: msm.failure,
    })
}

/// Solves the incremental estimating equation on one dataset:
/// `Ψ_local(θ) + H_prior·(θ_prev − θ) = 0` for the selected block, where
/// `H_prior` is the cumulative sensitivity carried in from upstream sites.
/// Newton iterations use the sensitivity `H_local(θ) + H_prior` and start
/// from the warm start `θ_prev`. With `H_prior = 0` this reduces exactly to
/// [`solve_local`]; as `H_prior` grows the root is pulled toward `θ_prev`.
///
/// The joint selector applies the update per subsystem: the γ block is
/// solved against the γγ block of `H_prior`, then the β block at the fresh
/// `γ̂` against the ββ block. Cross-block prior terms are deliberately not
/// used in the updating equations; they enter only through the full
/// sensitivity cumulants that feed the sandwich covariance.
pub fn incremental_update(
    dataset: &SiteDataset,
    prev_theta: &ParameterVector,
    h_cum_prev: &DMatrix<f64>,
    objective: BlockSelector,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    if dataset.p_gamma() != prev_theta.p_gamma() {
        return Err(Error::DimensionMismatch {
            context: "incremental_update: prev_theta vs dataset design",
            expected: dataset.p_gamma(),
            actual: prev_theta.p_gamma(),
        });
    }
    let expect_dim = match &objective {
        BlockSelector::PsOnly => prev_theta.p_gamma(),
        BlockSelector::MsmOnly { .. } => 2,
        BlockSelector::Joint => prev_theta.p(),
    };
    if h_cum_prev.nrows() != expect_dim || h_cum_prev.ncols() != expect_dim {
        return Err(Error::DimensionMismatch {
            context: "incremental_update: H_prior vs selected block",
            expected: expect_dim,
            actual: h_cum_prev.nrows(),
        });
    }
    match objective {
        BlockSelector::PsOnly => {
            let prev = prev_theta.gamma().clone();
            let res = newton(
                prev.clone(),
                |g| {
                    let b = estfun::evaluate_ps(dataset, g)?;
                    let residual = &b.psi_sum + h_cum_prev * (&prev - g);
                    Ok((residual, &b.h_sum + h_cum_prev))
                },
                config,
            );
            Ok(SolveOutcome {
                theta_hat: ParameterVector::new(finite_or_zeros(res.x), *prev_theta.beta())?,
                iterations: res.iterations,
                converged: res.converged,
                failure_reason: res.failure,
            })
        }
        BlockSelector::MsmOnly { gamma } => {
            let prev = DVector::from_vec(vec![prev_theta.beta()[0], prev_theta.beta()[1]]);
            let res = newton(
                prev.clone(),
                |b| {
                    let e = estfun::evaluate_msm(dataset, &gamma, &beta_from(b))?;
                    let residual = &e.psi_sum + h_cum_prev * (&prev - b);
                    Ok((residual, &e.h_sum + h_cum_prev))
                },
                config,
            );
            let beta = beta_from(&finite_or_zeros(res.x));
            Ok(SolveOutcome {
                theta_hat: ParameterVector::new(gamma, beta)?,
                iterations: res.iterations,
                converged: res.converged,
                failure_reason: res.failure,
            })
        }
        BlockSelector::Joint => {
            let p_gamma = prev_theta.p_gamma();
            let gg = h_cum_prev.view((0, 0), (p_gamma, p_gamma)).into_owned();
            let bb = h_cum_prev.view((p_gamma, p_gamma), (2, 2)).into_owned();
            let ps = incremental_update(dataset, prev_theta, &gg, BlockSelector::PsOnly, config)?;
            if !ps.converged {
                return Ok(ps);
            }
            let msm = incremental_update(
                dataset,
                &ps.theta_hat,
                &bb,
                BlockSelector::MsmOnly {
                    gamma: ps.theta_hat.gamma().clone(),
                },
                config,
            )?;
            Ok(SolveOutcome {
                theta_hat: msm.theta_hat,
                iterations: ps.iterations + msm.iterations,
                converged: msm.converged,
                failure_reason: msm.failure_reason,
            })
        }
    }
}

const SANDWICH_RCOND_FLOOR: f64 = 1e-12;

/// Finite-sample sandwich covariance `H⁻¹ V H⁻ᵀ` of the estimator (standard
/// errors are square roots of its diagonal; no scaling by the sample count,
/// which is carried for provenance only). The result is symmetrized after
/// computation.
pub fn sandwich_covariance(
    h_total: &DMatrix<f64>,
    v_total: &DMatrix<f64>,
    n_total: usize,
) -> Result<DMatrix<f64>> {
    let _ = n_total;
    let p = h_total.nrows();
    if h_total.ncols() != p || v_total.nrows() != p || v_total.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "sandwich_covariance: H and V must be square and conformable",
            expected: p,
            actual: v_total.nrows(),
        });
    }
    let svd = h_total.clone().svd(true, true);
    let (mut smin, mut smax) = (f64::INFINITY, 0.0_f64);
    for &s in svd.singular_values.iter() {
        smin = smin.min(s);
        smax = smax.max(s);
    }
    let rcond = smin / smax;
    if !rcond.is_finite() || rcond < SANDWICH_RCOND_FLOOR {
        return Err(Error::SingularSystem {
            rcond,
            floor: SANDWICH_RCOND_FLOOR,
        });
    }
    let h_inv = svd
        .solve(&DMatrix::identity(p, p), 0.0)
        .map_err(|_| Error::SingularSystem {
            rcond,
            floor: SANDWICH_RCOND_FLOOR,
        })?;
    let cov = &h_inv * v_total * h_inv.transpose();
    let mut sym = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in 0..p {
            sym[(r, c)] = 0.5 * (cov[(r, c)] + cov[(c, r)]);
        }
    }
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// Exactly balanced design: every covariate row appears twice with a=1
    /// and once with a=0, so e ≡ 2/3 solves the propensity score equation
    /// exactly and γ̂ = (logit(2/3), 0, 0). Outcomes are balanced within
    /// each arm (both arm means are 1/2), so the MSM root is β̂ = (0, 0).
    fn balanced_dataset() -> SiteDataset {
        let base = [[0.5, -1.0], [1.5, 0.25], [-0.75, 2.0], [0.1, 0.3]];
        let mut outcome = Vec::new();
        let mut treatment = Vec::new();
        let mut rows = Vec::new();
        for (g, x) in base.iter().enumerate() {
            let y_odd = (g % 2) as u8;
            for (a, y) in [(1, y_odd), (1, 1 - y_odd), (0, y_odd)] {
                outcome.push(y);
                treatment.push(a);
                rows.extend_from_slice(x);
            }
        }
        SiteDataset::new(
            "balanced",
            outcome,
            treatment,
            DMatrix::from_row_slice(12, 2, &rows),
            false,
        )
        .unwrap()
    }

    #[test]
    fn balanced_design_recovers_logit_mean() {
        let ds = balanced_dataset();
        let out = solve_local(
            &ds,
            BlockSelector::PsOnly,
            &ParameterVector::zeros(3),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        let gamma = out.theta_hat.gamma();
        assert!((gamma[0] - estfun::logit(2.0 / 3.0)).abs() < 1e-8);
        assert!(gamma[1].abs() < 1e-8);
        assert!(gamma[2].abs() < 1e-8);
    }

    #[test]
    fn all_treated_design_fails() {
        let ds = SiteDataset::new(
            "sep",
            vec![0, 1, 1, 0, 1, 1, 0, 1],
            vec![1; 8],
            DMatrix::from_row_slice(
                8,
                2,
                &[
                    0.5, -1.0, 1.5, 0.25, -0.75, 2.0, 0.1, 0.3, -1.2, -0.4, 0.9, 1.1, 0.3, -0.2,
                    2.2, 0.8,
                ],
            ),
            false,
        )
        .unwrap();
        let out = solve_local(
            &ds,
            BlockSelector::PsOnly,
            &ParameterVector::zeros(3),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(!out.converged);
        assert!(out.failure_reason.is_failure());
    }

    /// With γ fixed at zero all weights are 2 and the MSM equations decouple
    /// into arm-wise means, so β̂ has a closed form.
    #[test]
    fn msm_only_matches_closed_form() {
        let outcome = vec![1, 0, 1, 1, 0, 0, 1, 0, 0, 0];
        let treatment = vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let n = outcome.len();
        let covs: Vec<f64> = (0..n).map(|i| (i as f64) / 10.0 - 0.5).collect();
        let ds = SiteDataset::new(
            "msm",
            outcome.clone(),
            treatment.clone(),
            DMatrix::from_column_slice(n, 1, &covs),
            false,
        )
        .unwrap();
        let out = solve_local(
            &ds,
            BlockSelector::MsmOnly {
                gamma: DVector::zeros(2),
            },
            &ParameterVector::zeros(2),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        let mean1 = 3.0 / 5.0;
        let mean0 = 1.0 / 5.0;
        assert!((out.theta_hat.beta0() - estfun::logit(mean0)).abs() < 1e-7);
        assert!(
            (out.theta_hat.beta_a() - (estfun::logit(mean1) - estfun::logit(mean0))).abs() < 1e-7
        );
    }

    #[test]
    fn single_site_oracle_is_bitwise_local() {
        let ds = balanced_dataset();
        let config = SolverConfig::default();
        let oracle = solve_oracle(std::slice::from_ref(&ds), &config).unwrap();
        let local = solve_local(
            &ds,
            BlockSelector::Joint,
            &ParameterVector::zeros(3),
            &config,
        )
        .unwrap();
        assert_eq!(oracle.converged, local.converged);
        for (o, l) in oracle
            .theta_hat
            .stacked()
            .iter()
            .zip(local.theta_hat.stacked().iter())
        {
            assert_eq!(o.to_bits(), l.to_bits());
        }
    }

    #[test]
    fn sandwich_trivials() {
        let identity = DMatrix::identity(3, 3);
        let cov = sandwich_covariance(&identity, &identity, 100).unwrap();
        assert_eq!(cov, identity);
        let cov = sandwich_covariance(&(2.0 * &identity), &identity, 100).unwrap();
        assert_eq!(cov, 0.25 * &identity);
        let singular = DMatrix::zeros(3, 3);
        assert!(matches!(
            sandwich_covariance(&singular, &identity, 100),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn converged_joint_solve_satisfies_residual_bound() {
        let ds = balanced_dataset();
        let config = SolverConfig::default();
        let out = solve_local(
            &ds,
            BlockSelector::Joint,
            &ParameterVector::zeros(3),
            &config,
        )
        .unwrap();
        assert!(out.converged);
        let eval = estfun::evaluate(&ds, &out.theta_hat).unwrap();
        let bound = config.tolerance * (1.0 + out.theta_hat.max_norm());
        assert!(eval.psi_sum.amax() <= bound);
    }
}
