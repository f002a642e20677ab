//! The two comparator baselines: the centralized oracle (pool everything,
//! fit once) and inverse-variance meta-analysis (each site fits alone,
//! effects are precision-weighted).
//!
//! Meta-analysis is where small sites break: a site with no outcome events,
//! one treatment arm, or a separated logistic fit cannot contribute a usable
//! `(β̂_A, SE)` pair. Each excluded site is recorded with a
//! [`SiteExclusion`] telling *why* — structural degeneracy is distinguished
//! from solver failure because downstream failure accounting attributes only
//! the latter to the estimation method.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use cola_core::estfun;
use cola_core::solver::{
    sandwich_covariance, solve_local, solve_oracle, BlockSelector, FailureReason, SolverConfig,
};
use cola_core::{
    ConvergenceDiagnostics, Error, InferenceResult, ParameterVector, Result, SiteDataset,
};

use crate::protocol::EngineError;

/// Why a site could not contribute to the meta-analysis pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteExclusion {
    /// All outcomes equal — nothing to regress.
    DegenerateOutcome,
    /// One treatment arm only — no contrast.
    DegenerateTreatment,
    /// The local propensity fit did not converge.
    PsFailure(FailureReason),
    /// The local effect fit did not converge.
    MsmFailure(FailureReason),
    /// The fit converged but its sandwich variance gave no usable standard
    /// error.
    InvalidSe,
}

impl SiteExclusion {
    /// Whether the exclusion is chargeable to the estimation method, as
    /// opposed to the site's data being structurally unable to support any
    /// local fit.
    pub fn is_solver_attributable(self) -> bool {
        matches!(
            self,
            SiteExclusion::PsFailure(_) | SiteExclusion::MsmFailure(_) | SiteExclusion::InvalidSe
        )
    }
}

/// Inverse-variance pooled effect over the sites that produced a usable
/// local `(β̂_A, SE)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaResult {
    /// `Σ wᵢ β̂ᵢ / Σ wᵢ` with `wᵢ = SEᵢ⁻²`; `None` when no site survived.
    pub pooled_effect: Option<f64>,
    /// `(Σ wᵢ)^{-1/2}`.
    pub pooled_se: Option<f64>,
    pub included_sites: Vec<String>,
    pub excluded_sites: Vec<(String, SiteExclusion)>,
    pub n_included: usize,
    /// Per-site `(site_id, β̂_A, SE)` for the included sites, in input order.
    pub site_estimates: Vec<(String, f64, f64)>,
}

impl MetaResult {
    /// A meta-analysis needs at least two surviving sites before "pooling"
    /// means anything; one survivor yields a pooled number but no
    /// replication.
    pub fn replication_converged(&self) -> bool {
        self.n_included >= 2
    }

    pub fn exclusion_of(&self, site_id: &str) -> Option<SiteExclusion> {
        self.excluded_sites
            .iter()
            .find(|(id, _)| id == site_id)
            .map(|(_, e)| *e)
    }
}

enum SiteFit {
    Included { beta_a: f64, se: f64 },
    Excluded(SiteExclusion),
}

fn fit_one_site(dataset: &SiteDataset, config: &SolverConfig) -> Result<SiteFit> {
    // Structural degeneracy first: these sites cannot support a local fit
    // regardless of solver settings, and must not be counted as solver
    // failures.
    let first_y = dataset.outcome()[0];
    if dataset.outcome().iter().all(|&y| y == first_y) {
        return Ok(SiteFit::Excluded(SiteExclusion::DegenerateOutcome));
    }
    let first_a = dataset.treatment()[0];
    if dataset.treatment().iter().all(|&a| a == first_a) {
        return Ok(SiteFit::Excluded(SiteExclusion::DegenerateTreatment));
    }

    let init = ParameterVector::zeros(dataset.p_gamma());
    let ps = solve_local(dataset, BlockSelector::PsOnly, &init, config)?;
    if !ps.converged {
        return Ok(SiteFit::Excluded(SiteExclusion::PsFailure(
            ps.failure_reason,
        )));
    }
    let msm = solve_local(
        dataset,
        BlockSelector::MsmOnly {
            gamma: ps.theta_hat.gamma().clone(),
        },
        &ps.theta_hat,
        config,
    )?;
    if !msm.converged {
        return Ok(SiteFit::Excluded(SiteExclusion::MsmFailure(
            msm.failure_reason,
        )));
    }

    let theta = msm.theta_hat;
    let eval = estfun::evaluate(dataset, &theta)?;
    let covariance = match sandwich_covariance(&eval.h_sum(), &eval.outer_sum, eval.n) {
        Ok(c) => c,
        Err(Error::SingularSystem { .. }) => {
            return Ok(SiteFit::Excluded(SiteExclusion::InvalidSe))
        }
        Err(e) => return Err(e),
    };
    let idx = dataset.p_gamma() + 1;
    let se = covariance[(idx, idx)].sqrt();
    if !(se.is_finite() && se > 0.0) {
        return Ok(SiteFit::Excluded(SiteExclusion::InvalidSe));
    }
    Ok(SiteFit::Included {
        beta_a: theta.beta_a(),
        se,
    })
}

/// Fits every site independently and pools the surviving effects by inverse
/// variance. Input errors (malformed data) propagate; per-site fit problems
/// become exclusions, never errors.
pub fn meta_analyze(sites: &[SiteDataset], config: &SolverConfig) -> Result<MetaResult> {
    if sites.is_empty() {
        return Err(Error::EmptyDataset("meta_analyze: no sites".into()));
    }
    let mut included_sites = Vec::new();
    let mut excluded_sites = Vec::new();
    let mut site_estimates = Vec::new();
    let mut sum_w = 0.0;
    let mut sum_wb = 0.0;
    for dataset in sites {
        match fit_one_site(dataset, config)? {
            SiteFit::Included { beta_a, se } => {
                let w = 1.0 / (se * se);
                sum_w += w;
                sum_wb += w * beta_a;
                included_sites.push(dataset.site_id().to_string());
                site_estimates.push((dataset.site_id().to_string(), beta_a, se));
            }
            SiteFit::Excluded(reason) => {
                excluded_sites.push((dataset.site_id().to_string(), reason));
            }
        }
    }
    let n_included = included_sites.len();
    let (pooled_effect, pooled_se) = if n_included > 0 {
        (Some(sum_wb / sum_w), Some(1.0 / sum_w.sqrt()))
    } else {
        (None, None)
    };
    Ok(MetaResult {
        pooled_effect,
        pooled_se,
        included_sites,
        excluded_sites,
        n_included,
        site_estimates,
    })
}

/// The centralized benchmark: fit the stacked equations on all rows pooled,
/// with the sandwich covariance from per-site sums at the pooled `θ̂`.
/// With a single site this is exactly the local fit, bit for bit.
pub fn oracle_analyze(
    sites: &[SiteDataset],
    config: &SolverConfig,
) -> std::result::Result<InferenceResult, EngineError> {
    let outcome = solve_oracle(sites, config).map_err(EngineError::Core)?;
    if !outcome.converged {
        return Err(EngineError::SiteFailure {
            site_id: "pooled".into(),
            round: 0,
            site_index: 0,
            reason: outcome.failure_reason,
        });
    }
    let p = outcome.theta_hat.p();
    let mut h_total: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut v_total: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut n_total = 0;
    let mut clamp_events = 0;
    for dataset in sites {
        let eval = estfun::evaluate(dataset, &outcome.theta_hat).map_err(EngineError::Core)?;
        h_total += eval.h_sum();
        v_total += &eval.outer_sum;
        n_total += eval.n;
        clamp_events += eval.clamp_events;
    }
    let diagnostics = ConvergenceDiagnostics {
        converged: true,
        failure_reason: FailureReason::None,
        iterations: outcome.iterations,
        clamp_events,
    };
    InferenceResult::from_sandwich(outcome.theta_hat, &h_total, &v_total, n_total, diagnostics)
        .map_err(EngineError::Core)
}
