//! Replicated experiments over the method registry.
//!
//! [`run_experiment`] repeats one design `n_reps` times, runs every
//! requested method on each replicate through
//! [`cola_engine::registry::MethodRegistry`], and reduces the results
//! to one [`MetricsRow`] per method:
//!
//! * **Fails%** is computed per method over *all* replicates. For the
//!   relay protocols and the oracle a failure is any unusable outcome.
//!   For meta-analysis it follows the attribution rule of the design:
//!   a replicate counts as failed when the configured attribution site
//!   (or, without one, any site) was excluded for a solver-attributable
//!   reason — degenerate sites that no method could fit are design
//!   features, not failures.
//! * **CP, Abias, MSE, ESE** are computed over the *intersection* of
//!   replicates on which every requested method produced a usable
//!   estimate, so the comparison always averages over the same data.
//!   Coverage is of the 95% Wald interval against the fixed true value
//!   [`crate::truth::TRUE_LOG_OR`]; Abias is mean absolute error; MSE
//!   is the median estimated standard error; ESE the empirical one.
//!
//! Replicates run in parallel, but seeds are derived per replicate
//! index and results are collected in index order, so a metrics table
//! is a pure function of `(config, methods, n_reps)` no matter how many
//! threads execute it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cola_core::Z_95;
use cola_engine::protocol::ProtocolConfig;
use cola_engine::registry::{MethodDetail, MethodOutcome, MethodRegistry};

use crate::rng::replicate_seed;
use crate::scenario::{generate_trial, ScenarioConfig};
use crate::truth::TRUE_LOG_OR;
use crate::{Error, Result};

/// Rare-probability grid of the rarity sweep.
pub const RARE_PROBABILITY_GRID: [f64; 4] = [0.01, 0.02, 0.05, 0.10];

/// The estimation methods the harness can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "3r")]
    ThreeR,
    #[serde(rename = "2r")]
    TwoR,
    #[serde(rename = "2r-inf")]
    TwoRInf,
    #[serde(rename = "1r")]
    OneR,
    #[serde(rename = "meta")]
    Meta,
}

impl MethodId {
    /// Every method, in the order tables are conventionally printed.
    pub const ALL: [MethodId; 6] = [
        MethodId::Oracle,
        MethodId::ThreeR,
        MethodId::TwoR,
        MethodId::TwoRInf,
        MethodId::OneR,
        MethodId::Meta,
    ];

    /// Name under which the method is registered (and rendered).
    pub fn registry_name(self) -> &'static str {
        match self {
            MethodId::Oracle => "oracle",
            MethodId::ThreeR => "3r",
            MethodId::TwoR => "2r",
            MethodId::TwoRInf => "2r-inf",
            MethodId::OneR => "1r",
            MethodId::Meta => "meta",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.registry_name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(MethodId::Oracle),
            "3r" => Ok(MethodId::ThreeR),
            "2r" => Ok(MethodId::TwoR),
            "2r-inf" => Ok(MethodId::TwoRInf),
            "1r" => Ok(MethodId::OneR),
            "meta" => Ok(MethodId::Meta),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected one of oracle, 3r, 2r, 2r-inf, 1r, meta)"
            ))),
        }
    }
}

/// Operating characteristics of one method over one experiment.
///
/// `cp_pct`, `abias`, `mse`, and `ese` are `None` when the intersection
/// pool is empty (or, for `ese`, has fewer than two replicates); reports
/// render those as `NA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: MethodId,
    /// Percentage of all replicates on which the method failed.
    pub fails_pct: f64,
    /// Coverage of the 95% interval, in percent.
    pub cp_pct: Option<f64>,
    /// Mean absolute error of the point estimate.
    pub abias: Option<f64>,
    /// Median estimated standard error.
    pub mse: Option<f64>,
    /// Empirical standard error of the point estimates.
    pub ese: Option<f64>,
    pub n_reps: usize,
    /// Replicates on which this method alone produced a usable estimate.
    pub n_converged: usize,
}

/// Per-replicate, per-method record before aggregation.
struct MethodRep {
    /// `(beta_a, se)` when usable for pooling.
    estimate: Option<(f64, f64)>,
    /// Whether the replicate counts against Fails%.
    table_failure: bool,
}

fn meta_table_failure(outcome: &MethodOutcome, attribution_site: Option<usize>) -> bool {
    match &outcome.detail {
        MethodDetail::Meta(meta) => match attribution_site {
            Some(site) => meta
                .exclusion_of(&format!("site{site}"))
                .is_some_and(|e| e.is_solver_attributable()),
            None => meta
                .excluded_sites
                .iter()
                .any(|(_, e)| e.is_solver_attributable()),
        },
        _ => true,
    }
}

fn evaluate_replicate(
    config: &ScenarioConfig,
    methods: &[MethodId],
    registry: &MethodRegistry,
    protocol_config: &ProtocolConfig,
    replicate: u64,
) -> Result<Vec<MethodRep>> {
    let mut rep_config = config.clone();
    rep_config.base_seed = replicate_seed(config.base_seed, replicate);
    let trial = generate_trial(&rep_config)?;
    methods
        .iter()
        .map(|&method| {
            let outcome = registry.run(method.registry_name(), &trial.sites, protocol_config)?;
            let estimate = match (outcome.converged, outcome.beta_a, outcome.se_beta_a) {
                (true, Some(beta), Some(se)) => Some((beta, se)),
                _ => None,
            };
            let table_failure = match method {
                MethodId::Meta => meta_table_failure(&outcome, rep_config.meta_attribution_site),
                _ => !outcome.converged,
            };
            Ok(MethodRep {
                estimate,
                table_failure,
            })
        })
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn reduce(
    method: MethodId,
    reps: &[Vec<MethodRep>],
    position: usize,
    intersection: &[usize],
) -> MetricsRow {
    let n_reps = reps.len();
    let failures = reps.iter().filter(|r| r[position].table_failure).count();
    let n_converged = reps
        .iter()
        .filter(|r| r[position].estimate.is_some())
        .count();

    let pool: Vec<(f64, f64)> = intersection
        .iter()
        .map(|&rep| reps[rep][position].estimate.expect("intersection member"))
        .collect();

    let (cp_pct, abias, mse, ese) = if pool.is_empty() {
        (None, None, None, None)
    } else {
        let m = pool.len() as f64;
        let covered = pool
            .iter()
            .filter(|&&(beta, se)| {
                (beta - Z_95 * se) <= TRUE_LOG_OR && TRUE_LOG_OR <= (beta + Z_95 * se)
            })
            .count();
        let abias = pool
            .iter()
            .map(|&(beta, _)| (beta - TRUE_LOG_OR).abs())
            .sum::<f64>()
            / m;
        let mut ses: Vec<f64> = pool.iter().map(|&(_, se)| se).collect();
        ses.sort_by(|a, b| a.total_cmp(b));
        let ese = if pool.len() < 2 {
            None
        } else {
            let mean = pool.iter().map(|&(beta, _)| beta).sum::<f64>() / m;
            let ss = pool
                .iter()
                .map(|&(beta, _)| (beta - mean).powi(2))
                .sum::<f64>();
            Some((ss / (m - 1.0)).sqrt())
        };
        (
            Some(100.0 * covered as f64 / m),
            Some(abias),
            Some(median(&ses)),
            ese,
        )
    };

    MetricsRow {
        method,
        fails_pct: 100.0 * failures as f64 / n_reps as f64,
        cp_pct,
        abias,
        mse,
        ese,
        n_reps,
        n_converged,
    }
}

/// Run `n_reps` replicates of a design and reduce to one row per method.
///
/// Methods are deduplicated but keep their given order, which is also
/// the row order of the result.
pub fn run_experiment(
    config: &ScenarioConfig,
    methods: &[MethodId],
    n_reps: usize,
) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be positive".into()));
    }
    let mut requested: Vec<MethodId> = Vec::new();
    for &m in methods {
        if !requested.contains(&m) {
            requested.push(m);
        }
    }
    if requested.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }

    let registry = MethodRegistry::with_defaults();
    let protocol_config = ProtocolConfig::default();
    let reps: Vec<Vec<MethodRep>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| evaluate_replicate(config, &requested, &registry, &protocol_config, rep))
        .collect::<Result<_>>()?;

    let intersection: Vec<usize> = (0..n_reps)
        .filter(|&rep| reps[rep].iter().all(|m| m.estimate.is_some()))
        .collect();

    Ok(requested
        .iter()
        .enumerate()
        .map(|(position, &method)| reduce(method, &reps, position, &intersection))
        .collect())
}

/// Re-run an experiment along [`RARE_PROBABILITY_GRID`], varying the
/// design's rare-covariate probability or rare-outcome case rate.
pub fn run_sweep(
    config: &ScenarioConfig,
    methods: &[MethodId],
    n_reps: usize,
) -> Result<Vec<(f64, Vec<MetricsRow>)>> {
    if config.rare_covariate_site.is_none() && config.rare_outcome_site.is_none() {
        return Err(Error::InvalidConfig(
            "sweep needs a design with a rare-covariate or rare-outcome site".into(),
        ));
    }
    RARE_PROBABILITY_GRID
        .iter()
        .map(|&probability| {
            let mut point = config.clone();
            if let Some((site, covariate, _)) = point.rare_covariate_site {
                point.rare_covariate_site = Some((site, covariate, probability));
            } else if let Some((site, _)) = point.rare_outcome_site {
                point.rare_outcome_site = Some((site, probability));
            }
            Ok((probability, run_experiment(&point, methods, n_reps)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in MethodId::ALL {
            assert_eq!(m.registry_name().parse::<MethodId>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.registry_name()));
            let back: MethodId = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
        assert!("4r".parse::<MethodId>().is_err());
    }

    #[test]
    fn experiments_are_deterministic_and_ordered() {
        let config = ScenarioConfig::preset(2, 11).unwrap();
        let methods = [MethodId::ThreeR, MethodId::Oracle, MethodId::Meta];
        let a = run_experiment(&config, &methods, 12).unwrap();
        let b = run_experiment(&config, &methods, 12).unwrap();
        assert_eq!(a, b);
        let order: Vec<MethodId> = a.iter().map(|r| r.method).collect();
        assert_eq!(order, methods.to_vec());
        for row in &a {
            assert_eq!(row.n_reps, 12);
            assert!(row.n_converged <= row.n_reps);
            assert!((0.0..=100.0).contains(&row.fails_pct));
        }
    }

    #[test]
    fn duplicate_methods_collapse() {
        let config = ScenarioConfig::preset(2, 3).unwrap();
        let rows = run_experiment(
            &config,
            &[MethodId::Oracle, MethodId::Oracle, MethodId::ThreeR],
            4,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn adding_a_clean_method_leaves_the_pool_alone() {
        // The intersection pool only shrinks when the added method
        // fails somewhere; a method that converges on every replicate
        // must leave the other rows' pooled metrics untouched.
        let config = ScenarioConfig::preset(2, 29).unwrap();
        let alone = run_experiment(&config, &[MethodId::Meta], 16).unwrap();
        let joined = run_experiment(&config, &[MethodId::Meta, MethodId::Oracle], 16).unwrap();
        let oracle = &joined[1];
        assert_eq!(
            oracle.n_converged, 16,
            "pick a seed where the oracle is clean"
        );
        assert_eq!(alone[0], joined[0]);
    }

    #[test]
    fn sweep_requires_and_varies_a_rare_mechanism() {
        let plain = ScenarioConfig::preset(2, 1).unwrap();
        assert!(matches!(
            run_sweep(&plain, &[MethodId::Oracle], 2),
            Err(Error::InvalidConfig(_))
        ));
        let rare = ScenarioConfig::preset(4, 1).unwrap();
        let sweep = run_sweep(&rare, &[MethodId::Oracle], 2).unwrap();
        let grid: Vec<f64> = sweep.iter().map(|(p, _)| *p).collect();
        assert_eq!(grid, RARE_PROBABILITY_GRID.to_vec());
        for (_, rows) in &sweep {
            assert_eq!(rows.len(), 1);
        }
    }

    #[test]
    fn median_splits_even_pools() {
        assert_eq!(median(&[1.0, 2.0, 4.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 4.0, 10.0]), 3.0);
    }
}
