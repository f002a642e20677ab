//! The relay state machine: packet construction, per-site hops, round
//! transitions, and final assembly.
//!
//! The same four functions drive both the in-process runner
//! ([`run_protocol`]) and a step-at-a-time relay where each hop happens in a
//! different process and the packet travels as JSON:
//!
//! 1. [`initial_packet`] — the round-1 packet with zero coefficients and
//!    zero cumulants.
//! 2. [`relay_hop`] — one site visit: solve the incremental update for the
//!    round's block, fold the site's sensitivity/variability sums into the
//!    cumulants, and hand the refreshed packet onward.
//! 3. [`advance_round`] — freeze the block just relayed into its `*_global`
//!    field and reset the per-round state (cumulants, hop counter, subject
//!    count) for the next pass.
//! 4. [`finalize`] — extract the final coefficient vector and the cumulants
//!    that feed the sandwich covariance.
//!
//! A site that fails to converge never contaminates the relay: its hop
//! leaves coefficients and cumulants untouched, flips `converged_so_far`,
//! and the failure policy decides whether the relay aborts or carries on
//! without the site.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use cola_core::solver::{sandwich_covariance, FailureReason, SolveOutcome, SolverConfig};
use cola_core::{ConvergenceDiagnostics, InferenceResult, ParameterVector};

use crate::cumulant::CumulantPair;
use crate::packet::{MatrixPayload, RelayPacket, ThetaPayload, SCHEMA_VERSION};
use crate::site::SiteAccessor;

/// The four round-protocols, named by how many passes over the sites they
/// make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolKind {
    #[serde(rename = "1R")]
    OneR,
    #[serde(rename = "2R")]
    TwoR,
    #[serde(rename = "2R-INF")]
    TwoRInf,
    #[serde(rename = "3R")]
    ThreeR,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [
        ProtocolKind::OneR,
        ProtocolKind::TwoR,
        ProtocolKind::TwoRInf,
        ProtocolKind::ThreeR,
    ];

    pub fn rounds(self) -> u32 {
        match self {
            ProtocolKind::OneR => 1,
            ProtocolKind::TwoR | ProtocolKind::TwoRInf => 2,
            ProtocolKind::ThreeR => 3,
        }
    }

    /// The name used on the wire (packet `protocol` field).
    pub fn wire_name(self) -> &'static str {
        match self {
            ProtocolKind::OneR => "1R",
            ProtocolKind::TwoR => "2R",
            ProtocolKind::TwoRInf => "2R-INF",
            ProtocolKind::ThreeR => "3R",
        }
    }

    /// The lowercase name used on the command line and in method registries.
    pub fn cli_name(self) -> &'static str {
        match self {
            ProtocolKind::OneR => "1r",
            ProtocolKind::TwoR => "2r",
            ProtocolKind::TwoRInf => "2r-inf",
            ProtocolKind::ThreeR => "3r",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

impl FromStr for ProtocolKind {
    type Err = cola_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1r" => Ok(ProtocolKind::OneR),
            "2r" => Ok(ProtocolKind::TwoR),
            "2r-inf" => Ok(ProtocolKind::TwoRInf),
            "3r" => Ok(ProtocolKind::ThreeR),
            other => Err(cola_core::Error::Unsupported(format!(
                "unknown protocol '{other}' (expected 1r, 2r, 2r-inf, or 3r)"
            ))),
        }
    }
}

/// What to do when a site's incremental solve does not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Abort the relay at the first failing site.
    #[default]
    FailFast,
    /// Record the failure and continue as if the site had not been visited.
    Skip,
}

#[derive(Debug, Clone, Default)]
pub struct ProtocolConfig {
    pub solver: SolverConfig,
    pub failure_policy: FailurePolicy,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("site '{site_id}' (hop {site_index}, round {round}) failed to converge: {reason:?}")]
    SiteFailure {
        site_id: String,
        round: u32,
        site_index: u32,
        reason: FailureReason,
    },
    #[error("relay state error: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Core(#[from] cola_core::Error),
}

/// Everything produced by one relay hop.
#[derive(Debug, Clone)]
pub struct HopOutcome {
    /// The packet to forward to the next site.
    pub packet: RelayPacket,
    /// The site's incremental solve (or, in evaluation-only rounds, a
    /// trivially converged outcome at the frozen global coefficients).
    pub outcome: SolveOutcome,
    /// Propensity-clamp events the site observed during its evaluation.
    pub clamp_events: usize,
}

/// Completed relay: final coefficients, covariance, and provenance.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub protocol: ProtocolKind,
    pub theta_final: ParameterVector,
    /// Sandwich covariance from the final-round cumulants.
    pub covariance: DMatrix<f64>,
    /// Final-round cumulants exactly as relayed.
    pub cumulants: CumulantPair,
    pub site_order: Vec<String>,
    /// One entry per hop, in relay order across all rounds.
    pub per_site_outcomes: Vec<SolveOutcome>,
    pub n_total: usize,
    pub clamp_events: usize,
}

impl ProtocolResult {
    pub fn all_converged(&self) -> bool {
        self.per_site_outcomes.iter().all(|o| o.converged)
    }

    pub fn iterations(&self) -> usize {
        self.per_site_outcomes.iter().map(|o| o.iterations).sum()
    }

    pub fn first_failure(&self) -> FailureReason {
        self.per_site_outcomes
            .iter()
            .map(|o| o.failure_reason)
            .find(|r| r.is_failure())
            .unwrap_or(FailureReason::None)
    }
}

fn zeros_payload(dim: usize) -> MatrixPayload {
    MatrixPayload::from_matrix(&DMatrix::zeros(dim, dim))
}

/// The round-1 packet: zero coefficients for the block(s) the protocol
/// relays first, zero cumulants of the matching dimension.
pub fn initial_packet(protocol: ProtocolKind, p_gamma: usize) -> RelayPacket {
    let p = p_gamma + 2;
    let (theta, h_cum, v_cum) = match protocol {
        ProtocolKind::TwoR | ProtocolKind::ThreeR => (
            ThetaPayload {
                gamma: vec![0.0; p_gamma],
                beta: None,
            },
            zeros_payload(p_gamma),
            None,
        ),
        ProtocolKind::OneR => (
            ThetaPayload {
                gamma: vec![0.0; p_gamma],
                beta: Some([0.0, 0.0]),
            },
            zeros_payload(p),
            Some(zeros_payload(p)),
        ),
        ProtocolKind::TwoRInf => (
            ThetaPayload {
                gamma: vec![0.0; p_gamma],
                beta: Some([0.0, 0.0]),
            },
            zeros_payload(p),
            None,
        ),
    };
    RelayPacket {
        schema_version: SCHEMA_VERSION,
        protocol,
        round: 1,
        site_index: 0,
        site_trail: Vec::new(),
        n_cum: 0,
        theta,
        gamma_global: None,
        beta_global: None,
        h_cum,
        v_cum,
        converged_so_far: true,
    }
}

fn packet_p_gamma(packet: &RelayPacket) -> Result<usize, EngineError> {
    if let Some(g) = &packet.gamma_global {
        Ok(g.len())
    } else if !packet.theta.gamma.is_empty() {
        Ok(packet.theta.gamma.len())
    } else {
        Err(EngineError::InvalidState(
            "packet carries neither theta.gamma nor gamma_global".into(),
        ))
    }
}

fn absorb_into_packet(
    next: &mut RelayPacket,
    h_site: &DMatrix<f64>,
    v_site: Option<&DMatrix<f64>>,
    n_site: usize,
) -> Result<(), EngineError> {
    let mut h_cum = next.h_cum.to_matrix()?;
    if h_site.nrows() != h_cum.nrows() || h_site.ncols() != h_cum.ncols() {
        return Err(EngineError::Core(cola_core::Error::DimensionMismatch {
            context: "relay hop: site sensitivity vs H_cum",
            expected: h_cum.nrows(),
            actual: h_site.nrows(),
        }));
    }
    h_cum += h_site;
    next.h_cum = MatrixPayload::from_matrix(&h_cum);
    match (&mut next.v_cum, v_site) {
        (Some(payload), Some(v)) => {
            let mut v_cum = payload.to_matrix()?;
            v_cum += v;
            *payload = MatrixPayload::from_matrix(&v_cum);
        }
        (None, None) => {}
        (Some(_), None) => {
            return Err(EngineError::InvalidState(
                "round carries a variability cumulant but the hop produced none".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(EngineError::InvalidState(
                "hop produced a variability contribution but the round carries none".into(),
            ))
        }
    }
    next.n_cum += n_site;
    Ok(())
}

fn require_gamma_global(packet: &RelayPacket) -> Result<nalgebra::DVector<f64>, EngineError> {
    packet.gamma_global_vector().ok_or_else(|| {
        EngineError::InvalidState(format!(
            "protocol {} round {} requires gamma_global",
            packet.protocol, packet.round
        ))
    })
}

fn require_beta(packet: &RelayPacket) -> Result<nalgebra::Vector2<f64>, EngineError> {
    packet.theta.beta_vector().ok_or_else(|| {
        EngineError::InvalidState(format!(
            "protocol {} round {} requires theta.beta",
            packet.protocol, packet.round
        ))
    })
}

/// One site visit. On convergence the returned packet carries the refreshed
/// coefficients and augmented cumulants; on failure it is identical to the
/// input except for the hop bookkeeping (`site_index`, `site_trail`,
/// `converged_so_far`). Failure handling is the caller's decision — this
/// function never aborts on non-convergence.
pub fn relay_hop(
    packet: &RelayPacket,
    site: &dyn SiteAccessor,
    config: &SolverConfig,
) -> Result<HopOutcome, EngineError> {
    packet.validate()?;
    let p_gamma = packet_p_gamma(packet)?;
    if site.p_gamma() != p_gamma {
        return Err(EngineError::Core(cola_core::Error::DimensionMismatch {
            context: "relay hop: site design vs packet",
            expected: p_gamma,
            actual: site.p_gamma(),
        }));
    }

    let mut next = packet.clone();
    next.site_index += 1;
    next.site_trail.push(site.site_id().to_string());

    let failed = |mut next: RelayPacket, outcome: SolveOutcome| {
        next.converged_so_far = false;
        Ok(HopOutcome {
            packet: next,
            outcome,
            clamp_events: 0,
        })
    };

    match (packet.protocol, packet.round) {
        // Propensity pass: incremental γ update, absorb H^ps(γ̂).
        (ProtocolKind::TwoR | ProtocolKind::ThreeR, 1) => {
            let prev_gamma = packet.theta.gamma_vector();
            let h_prior = packet.h_cum.to_matrix()?;
            let (outcome, eval) = site.update_ps(&prev_gamma, &h_prior, config)?;
            match eval {
                Some(e) => {
                    absorb_into_packet(&mut next, &e.h_sum, None, e.n)?;
                    next.theta.gamma = outcome.theta_hat.gamma().iter().copied().collect();
                    Ok(HopOutcome {
                        packet: next,
                        outcome,
                        clamp_events: e.clamp_events,
                    })
                }
                None => failed(next, outcome),
            }
        }
        // Effect pass at the frozen global γ, relaying only the 2×2 block.
        (ProtocolKind::ThreeR, 2) => {
            let gamma_g = require_gamma_global(packet)?;
            let prev_beta = require_beta(packet)?;
            let h_prior = packet.h_cum.to_matrix()?;
            let (outcome, eval) = site.update_msm(&gamma_g, &prev_beta, &h_prior, config)?;
            match eval {
                Some(e) => {
                    absorb_into_packet(&mut next, &e.h_sum, None, e.n)?;
                    let beta = outcome.theta_hat.beta();
                    next.theta.beta = Some([beta[0], beta[1]]);
                    Ok(HopOutcome {
                        packet: next,
                        outcome,
                        clamp_events: e.clamp_events,
                    })
                }
                None => failed(next, outcome),
            }
        }
        // Effect pass that doubles as the covariance pass: the β update uses
        // the ββ block of the full cumulant (bit-identical to the 3R prior),
        // then the site contributes full H and V at its interim estimate.
        (ProtocolKind::TwoR, 2) => {
            let gamma_g = require_gamma_global(packet)?;
            let prev_beta = require_beta(packet)?;
            let h_full = packet.h_cum.to_matrix()?;
            let prior = h_full.view((p_gamma, p_gamma), (2, 2)).into_owned();
            let (outcome, _) = site.update_msm(&gamma_g, &prev_beta, &prior, config)?;
            if !outcome.converged {
                return failed(next, outcome);
            }
            let full = site.evaluate_full(&outcome.theta_hat)?;
            absorb_into_packet(&mut next, &full.h_sum(), Some(&full.outer_sum), full.n)?;
            let beta = outcome.theta_hat.beta();
            next.theta.beta = Some([beta[0], beta[1]]);
            Ok(HopOutcome {
                packet: next,
                outcome,
                clamp_events: full.clamp_events,
            })
        }
        // Joint pass: staged γ-then-β update, then full H (and V for 1R) at
        // the site's own refreshed estimate.
        (ProtocolKind::OneR | ProtocolKind::TwoRInf, 1) => {
            let prev_beta = require_beta(packet)?;
            let prev = ParameterVector::new(packet.theta.gamma_vector(), prev_beta)
                .map_err(EngineError::Core)?;
            let h_prior = packet.h_cum.to_matrix()?;
            let outcome = site.update_joint(&prev, &h_prior, config)?;
            if !outcome.converged {
                return failed(next, outcome);
            }
            let full = site.evaluate_full(&outcome.theta_hat)?;
            let v = (packet.protocol == ProtocolKind::OneR).then_some(&full.outer_sum);
            absorb_into_packet(&mut next, &full.h_sum(), v, full.n)?;
            next.theta.gamma = outcome.theta_hat.gamma().iter().copied().collect();
            let beta = outcome.theta_hat.beta();
            next.theta.beta = Some([beta[0], beta[1]]);
            Ok(HopOutcome {
                packet: next,
                outcome,
                clamp_events: full.clamp_events,
            })
        }
        // Covariance-only pass at the frozen global coefficients.
        (ProtocolKind::TwoRInf, 2) | (ProtocolKind::ThreeR, 3) => {
            let gamma_g = require_gamma_global(packet)?;
            let beta_g = packet.beta_global_vector().ok_or_else(|| {
                EngineError::InvalidState(format!(
                    "protocol {} round {} requires beta_global",
                    packet.protocol, packet.round
                ))
            })?;
            let theta = ParameterVector::new(gamma_g, beta_g).map_err(EngineError::Core)?;
            let full = site.evaluate_full(&theta)?;
            absorb_into_packet(&mut next, &full.h_sum(), Some(&full.outer_sum), full.n)?;
            Ok(HopOutcome {
                packet: next,
                outcome: SolveOutcome {
                    theta_hat: theta,
                    iterations: 0,
                    converged: true,
                    failure_reason: FailureReason::None,
                },
                clamp_events: full.clamp_events,
            })
        }
        (protocol, round) => Err(EngineError::InvalidState(format!(
            "protocol {protocol} has no round {round}"
        ))),
    }
}

/// Closes the current round after the last site: the block just relayed is
/// frozen into its `*_global` field and the per-round state (cumulants, hop
/// counter, subject count) is reset for the next pass. `site_trail` persists
/// across rounds.
pub fn advance_round(packet: &RelayPacket) -> Result<RelayPacket, EngineError> {
    packet.validate()?;
    if packet.site_index == 0 {
        return Err(EngineError::InvalidState(
            "cannot advance a round in which no site was visited".into(),
        ));
    }
    let p_gamma = packet_p_gamma(packet)?;
    let p = p_gamma + 2;
    let mut next = packet.clone();
    next.site_index = 0;
    next.n_cum = 0;
    match (packet.protocol, packet.round) {
        (ProtocolKind::TwoR | ProtocolKind::ThreeR, 1) => {
            next.gamma_global = Some(packet.theta.gamma.clone());
            next.theta = ThetaPayload {
                gamma: Vec::new(),
                beta: Some([0.0, 0.0]),
            };
            if packet.protocol == ProtocolKind::ThreeR {
                next.h_cum = zeros_payload(2);
                next.v_cum = None;
            } else {
                next.h_cum = zeros_payload(p);
                next.v_cum = Some(zeros_payload(p));
            }
            next.round = 2;
        }
        (ProtocolKind::ThreeR, 2) => {
            let beta = require_beta(packet)?;
            next.beta_global = Some([beta[0], beta[1]]);
            next.theta = ThetaPayload {
                gamma: Vec::new(),
                beta: None,
            };
            next.h_cum = zeros_payload(p);
            next.v_cum = Some(zeros_payload(p));
            next.round = 3;
        }
        (ProtocolKind::TwoRInf, 1) => {
            let beta = require_beta(packet)?;
            next.gamma_global = Some(packet.theta.gamma.clone());
            next.beta_global = Some([beta[0], beta[1]]);
            next.theta = ThetaPayload {
                gamma: Vec::new(),
                beta: None,
            };
            next.h_cum = zeros_payload(p);
            next.v_cum = Some(zeros_payload(p));
            next.round = 2;
        }
        (protocol, round) => {
            return Err(EngineError::InvalidState(format!(
                "protocol {protocol} has no round after {round}"
            )))
        }
    }
    Ok(next)
}

/// Extracts the final coefficients and the covariance cumulants after the
/// last hop of the last round.
pub fn finalize(packet: &RelayPacket) -> Result<(ParameterVector, CumulantPair), EngineError> {
    packet.validate()?;
    if packet.round != packet.protocol.rounds() {
        return Err(EngineError::InvalidState(format!(
            "finalize called in round {} of {}-round protocol {}",
            packet.round,
            packet.protocol.rounds(),
            packet.protocol
        )));
    }
    if packet.site_index == 0 {
        return Err(EngineError::InvalidState(
            "cannot finalize before any site was visited in the final round".into(),
        ));
    }
    let theta = match packet.protocol {
        ProtocolKind::OneR => {
            ParameterVector::new(packet.theta.gamma_vector(), require_beta(packet)?)
        }
        ProtocolKind::TwoR => {
            ParameterVector::new(require_gamma_global(packet)?, require_beta(packet)?)
        }
        ProtocolKind::TwoRInf | ProtocolKind::ThreeR => {
            let beta = packet
                .beta_global_vector()
                .ok_or_else(|| EngineError::InvalidState("finalize requires beta_global".into()))?;
            ParameterVector::new(require_gamma_global(packet)?, beta)
        }
    }
    .map_err(EngineError::Core)?;
    let cumulants = packet.cumulants()?;
    if cumulants.v_cum.is_none() {
        return Err(EngineError::InvalidState(
            "final round carries no variability cumulant".into(),
        ));
    }
    Ok((theta, cumulants))
}

/// Runs a complete relay over the sites in order, one pass per round, and
/// assembles the sandwich covariance from the final cumulants.
pub fn run_protocol(
    sites: &[&dyn SiteAccessor],
    protocol: ProtocolKind,
    config: &ProtocolConfig,
) -> Result<ProtocolResult, EngineError> {
    let first = sites
        .first()
        .ok_or_else(|| EngineError::InvalidState("no sites to relay over".into()))?;
    let mut packet = initial_packet(protocol, first.p_gamma());
    let mut per_site_outcomes = Vec::with_capacity(sites.len() * protocol.rounds() as usize);
    let mut clamp_events = 0;
    for round in 1..=protocol.rounds() {
        for site in sites {
            let hop = relay_hop(&packet, *site, &config.solver)?;
            clamp_events += hop.clamp_events;
            let converged = hop.outcome.converged;
            let reason = hop.outcome.failure_reason;
            packet = hop.packet;
            per_site_outcomes.push(hop.outcome);
            if !converged && config.failure_policy == FailurePolicy::FailFast {
                return Err(EngineError::SiteFailure {
                    site_id: site.site_id().to_string(),
                    round,
                    site_index: packet.site_index,
                    reason,
                });
            }
        }
        if round < protocol.rounds() {
            packet = advance_round(&packet)?;
        }
    }
    let (theta_final, cumulants) = finalize(&packet)?;
    let v_cum = cumulants
        .v_cum
        .as_ref()
        .expect("finalize guarantees a variability cumulant");
    let covariance = sandwich_covariance(&cumulants.h_cum, v_cum, cumulants.n_cum)?;
    Ok(ProtocolResult {
        protocol,
        theta_final,
        covariance,
        site_order: sites.iter().map(|s| s.site_id().to_string()).collect(),
        per_site_outcomes,
        n_total: cumulants.n_cum,
        clamp_events,
        cumulants,
    })
}

/// Packages a completed relay as an [`InferenceResult`] with derived
/// estimands and aggregate convergence diagnostics.
pub fn assemble_inference(result: &ProtocolResult) -> Result<InferenceResult, EngineError> {
    let diagnostics = ConvergenceDiagnostics {
        converged: result.all_converged(),
        failure_reason: result.first_failure(),
        iterations: result.iterations(),
        clamp_events: result.clamp_events,
    };
    InferenceResult::from_covariance(
        result.theta_final.clone(),
        result.covariance.clone(),
        result.n_total,
        diagnostics,
    )
    .map_err(EngineError::Core)
}
