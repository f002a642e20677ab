//! The site access boundary.
//!
//! [`SiteAccessor`] is the complete set of operations the relay may ask of a
//! site. Every method returns either coefficients or summed score/sensitivity
//! matrices — never subject-level rows — so the trait itself is the privacy
//! boundary: a protocol written against `&dyn SiteAccessor` cannot observe
//! individual data even in principle.
//!
//! [`LocalSite`] is the in-process implementation backed by a
//! [`SiteDataset`]. [`LoggingSite`] wraps any accessor and records which
//! operations were invoked, which lets tests assert that a protocol touched
//! each site only through the declared summary operations, the expected
//! number of times.

use std::cell::RefCell;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Vector2};

use cola_core::estfun::{self, BlockEvaluation, EstimatingEvaluation};
use cola_core::solver::{incremental_update, BlockSelector, SolveOutcome, SolverConfig};
use cola_core::{ParameterVector, Result, SiteDataset};

/// Summary-statistic operations a site exposes to the relay.
///
/// The update methods solve the site's incremental estimating equation with
/// the carried-in prior sensitivity `H_prior` and return the refreshed
/// coefficients; the paired [`BlockEvaluation`] (present only on
/// convergence) is the site's own sensitivity contribution at the refreshed
/// value, ready to be folded into the relay cumulants.
pub trait SiteAccessor {
    fn site_id(&self) -> &str;

    /// Number of subjects held at the site.
    fn n(&self) -> usize;

    /// Dimension of the propensity design (including the intercept).
    fn p_gamma(&self) -> usize;

    /// Incremental propensity update: solve
    /// `Ψ^ps(γ) + H_prior·(γ_prev − γ) = 0` starting from `γ_prev`.
    fn update_ps(
        &self,
        prev_gamma: &DVector<f64>,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<(SolveOutcome, Option<BlockEvaluation>)>;

    /// Incremental effect update at a frozen global `γ`: solve
    /// `Ψ^Δ(β; γ) + H_prior·(β_prev − β) = 0` starting from `β_prev`.
    fn update_msm(
        &self,
        gamma: &DVector<f64>,
        prev_beta: &Vector2<f64>,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<(SolveOutcome, Option<BlockEvaluation>)>;

    /// Incremental joint update of both blocks (γ staged before β), with the
    /// γγ and ββ blocks of the full `p×p` prior applied per subsystem.
    fn update_joint(
        &self,
        prev_theta: &ParameterVector,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<SolveOutcome>;

    /// Full stacked evaluation at a fixed `θ`: score sum, sensitivity sum,
    /// and variability (outer-product) sum for the covariance cumulants.
    fn evaluate_full(&self, theta: &ParameterVector) -> Result<EstimatingEvaluation>;
}

/// A site whose data lives in this process.
#[derive(Debug, Clone)]
pub struct LocalSite {
    dataset: SiteDataset,
}

impl LocalSite {
    pub fn new(dataset: SiteDataset) -> Self {
        Self { dataset }
    }

    /// The underlying rows. This is for the data's owner (simulation
    /// harness, file loader); the relay only ever sees the trait surface.
    pub fn dataset(&self) -> &SiteDataset {
        &self.dataset
    }
}

impl SiteAccessor for LocalSite {
    fn site_id(&self) -> &str {
        self.dataset.site_id()
    }

    fn n(&self) -> usize {
        self.dataset.n()
    }

    fn p_gamma(&self) -> usize {
        self.dataset.p_gamma()
    }

    fn update_ps(
        &self,
        prev_gamma: &DVector<f64>,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<(SolveOutcome, Option<BlockEvaluation>)> {
        let prev = ParameterVector::new(prev_gamma.clone(), Vector2::zeros())?;
        let outcome =
            incremental_update(&self.dataset, &prev, h_prior, BlockSelector::PsOnly, config)?;
        let eval = if outcome.converged {
            Some(estfun::evaluate_ps(
                &self.dataset,
                outcome.theta_hat.gamma(),
            )?)
        } else {
            None
        };
        Ok((outcome, eval))
    }

    fn update_msm(
        &self,
        gamma: &DVector<f64>,
        prev_beta: &Vector2<f64>,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<(SolveOutcome, Option<BlockEvaluation>)> {
        let prev = ParameterVector::new(gamma.clone(), *prev_beta)?;
        let selector = BlockSelector::MsmOnly {
            gamma: gamma.clone(),
        };
        let outcome = incremental_update(&self.dataset, &prev, h_prior, selector, config)?;
        let eval = if outcome.converged {
            Some(estfun::evaluate_msm(
                &self.dataset,
                gamma,
                outcome.theta_hat.beta(),
            )?)
        } else {
            None
        };
        Ok((outcome, eval))
    }

    fn update_joint(
        &self,
        prev_theta: &ParameterVector,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<SolveOutcome> {
        incremental_update(
            &self.dataset,
            prev_theta,
            h_prior,
            BlockSelector::Joint,
            config,
        )
    }

    fn evaluate_full(&self, theta: &ParameterVector) -> Result<EstimatingEvaluation> {
        estfun::evaluate(&self.dataset, theta)
    }
}

/// Which summary operation the relay invoked on a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    UpdatePs,
    UpdateMsm,
    UpdateJoint,
    EvaluateFull,
}

/// Shared, clonable record of `(site_id, operation)` events in invocation
/// order.
#[derive(Debug, Clone, Default)]
pub struct AccessLog {
    events: Rc<RefCell<Vec<(String, AccessKind)>>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, site_id: &str, kind: AccessKind) {
        self.events.borrow_mut().push((site_id.to_string(), kind));
    }

    pub fn events(&self) -> Vec<(String, AccessKind)> {
        self.events.borrow().clone()
    }

    pub fn count(&self, kind: AccessKind) -> usize {
        self.events
            .borrow()
            .iter()
            .filter(|(_, k)| *k == kind)
            .count()
    }
}

/// Decorator that records every summary operation invoked on the inner site.
pub struct LoggingSite<S> {
    inner: S,
    log: AccessLog,
}

impl<S: SiteAccessor> LoggingSite<S> {
    pub fn new(inner: S, log: AccessLog) -> Self {
        Self { inner, log }
    }
}

impl<S: SiteAccessor> SiteAccessor for LoggingSite<S> {
    fn site_id(&self) -> &str {
        self.inner.site_id()
    }

    fn n(&self) -> usize {
        self.inner.n()
    }

    fn p_gamma(&self) -> usize {
        self.inner.p_gamma()
    }

    fn update_ps(
        &self,
        prev_gamma: &DVector<f64>,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<(SolveOutcome, Option<BlockEvaluation>)> {
        self.log.record(self.inner.site_id(), AccessKind::UpdatePs);
        self.inner.update_ps(prev_gamma, h_prior, config)
    }

    fn update_msm(
        &self,
        gamma: &DVector<f64>,
        prev_beta: &Vector2<f64>,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<(SolveOutcome, Option<BlockEvaluation>)> {
        self.log.record(self.inner.site_id(), AccessKind::UpdateMsm);
        self.inner.update_msm(gamma, prev_beta, h_prior, config)
    }

    fn update_joint(
        &self,
        prev_theta: &ParameterVector,
        h_prior: &DMatrix<f64>,
        config: &SolverConfig,
    ) -> Result<SolveOutcome> {
        self.log
            .record(self.inner.site_id(), AccessKind::UpdateJoint);
        self.inner.update_joint(prev_theta, h_prior, config)
    }

    fn evaluate_full(&self, theta: &ParameterVector) -> Result<EstimatingEvaluation> {
        self.log
            .record(self.inner.site_id(), AccessKind::EvaluateFull);
        self.inner.evaluate_full(theta)
    }
}
