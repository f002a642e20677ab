//! Name-keyed strategy registry over every analysis method.
//!
//! Each method — the four relay protocols, the centralized oracle, and
//! inverse-variance meta-analysis — implements [`Method`] and is selected at
//! runtime by its lowercase name (`1r`, `2r`, `2r-inf`, `3r`, `oracle`,
//! `meta`). All methods consume the same inputs (a list of site datasets and
//! a [`ProtocolConfig`]) and produce the same [`MethodOutcome`] shape, so
//! harness and CLI code never branch on which method is running.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use cola_core::{InferenceResult, SiteDataset};

use crate::baselines::{meta_analyze, oracle_analyze, MetaResult};
use crate::protocol::{assemble_inference, run_protocol, ProtocolConfig, ProtocolKind};
use crate::site::{LocalSite, SiteAccessor};

/// One analysis strategy, selectable by name.
pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs the method on the given sites. Fit failures are reported inside
    /// the outcome, never as a panic; the outcome always says whether the
    /// estimate is usable.
    fn run(&self, sites: &[SiteDataset], config: &ProtocolConfig) -> MethodOutcome;
}

/// Method-specific payload behind the common summary fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodDetail {
    Relay(InferenceResult),
    Oracle(InferenceResult),
    Meta(MetaResult),
    Failed { reason: String },
}

/// The common shape every method reduces to: the treatment effect on the
/// log-odds scale with its standard error, a usability flag, and the full
/// method-specific detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    /// Whether `beta_a`/`se_beta_a` are usable for inference.
    pub converged: bool,
    pub beta_a: Option<f64>,
    pub se_beta_a: Option<f64>,
    pub detail: MethodDetail,
}

fn outcome_from_inference(
    name: &str,
    result: InferenceResult,
    wrap: fn(InferenceResult) -> MethodDetail,
) -> MethodOutcome {
    let se = result.se_beta_a();
    let usable = result.diagnostics.converged && se.is_finite() && se > 0.0;
    MethodOutcome {
        method: name.to_string(),
        converged: usable,
        beta_a: Some(result.beta_a()),
        se_beta_a: Some(se),
        detail: wrap(result),
    }
}

fn failed_outcome(name: &str, reason: String) -> MethodOutcome {
    MethodOutcome {
        method: name.to_string(),
        converged: false,
        beta_a: None,
        se_beta_a: None,
        detail: MethodDetail::Failed { reason },
    }
}

struct ProtocolMethod {
    kind: ProtocolKind,
}

impl Method for ProtocolMethod {
    fn name(&self) -> &'static str {
        self.kind.cli_name()
    }

    fn run(&self, sites: &[SiteDataset], config: &ProtocolConfig) -> MethodOutcome {
        let locals: Vec<LocalSite> = sites.iter().cloned().map(LocalSite::new).collect();
        let refs: Vec<&dyn SiteAccessor> = locals.iter().map(|s| s as &dyn SiteAccessor).collect();
        let run =
            run_protocol(&refs, self.kind, config).and_then(|result| assemble_inference(&result));
        match run {
            Ok(inference) => outcome_from_inference(self.name(), inference, MethodDetail::Relay),
            Err(e) => failed_outcome(self.name(), e.to_string()),
        }
    }
}

struct OracleMethod;

impl Method for OracleMethod {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn run(&self, sites: &[SiteDataset], config: &ProtocolConfig) -> MethodOutcome {
        match oracle_analyze(sites, &config.solver) {
            Ok(inference) => outcome_from_inference(self.name(), inference, MethodDetail::Oracle),
            Err(e) => failed_outcome(self.name(), e.to_string()),
        }
    }
}

struct MetaMethod;

impl Method for MetaMethod {
    fn name(&self) -> &'static str {
        "meta"
    }

    fn run(&self, sites: &[SiteDataset], config: &ProtocolConfig) -> MethodOutcome {
        match meta_analyze(sites, &config.solver) {
            Ok(meta) => {
                let converged = meta.replication_converged();
                MethodOutcome {
                    method: self.name().to_string(),
                    converged,
                    beta_a: meta.pooled_effect,
                    se_beta_a: meta.pooled_se,
                    detail: MethodDetail::Meta(meta),
                }
            }
            Err(e) => failed_outcome(self.name(), e.to_string()),
        }
    }
}

/// Registry of methods keyed by lowercase name.
pub struct MethodRegistry {
    methods: BTreeMap<String, Box<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    /// All six built-in methods.
    pub fn with_defaults() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(OracleMethod));
        registry.register(Box::new(MetaMethod));
        for kind in ProtocolKind::ALL {
            registry.register(Box::new(ProtocolMethod { kind }));
        }
        registry
    }

    pub fn register(&mut self, method: Box<dyn Method>) {
        self.methods.insert(method.name().to_string(), method);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Method> {
        self.methods
            .get(name.trim().to_ascii_lowercase().as_str())
            .map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&str> {
        self.methods.keys().map(String::as_str).collect()
    }

    /// Runs the named method, erroring only if the name is unknown.
    pub fn run(
        &self,
        name: &str,
        sites: &[SiteDataset],
        config: &ProtocolConfig,
    ) -> cola_core::Result<MethodOutcome> {
        let method = self.get(name).ok_or_else(|| {
            cola_core::Error::Unsupported(format!(
                "unknown method '{}' (available: {})",
                name,
                self.names().join(", ")
            ))
        })?;
        Ok(method.run(sites, config))
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
