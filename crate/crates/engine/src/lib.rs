//! The COLA relay engine: sequential site-to-site summary-statistic
//! protocols for collaborative IPTW estimation, plus the two comparator
//! baselines (centralized oracle and inverse-variance meta-analysis).
//!
//! A relay visits sites in order, carrying a [`packet::RelayPacket`] — the
//! only object that ever crosses a site boundary. Each hop updates the
//! current coefficient estimate by solving the incremental estimating
//! equation (the local score plus a prior term accumulated from upstream
//! sensitivity matrices) and folds the site's own sensitivity/variability
//! contributions into the running cumulants. Four round-protocols are
//! provided:
//!
//! * **3R** — round 1 relays the propensity fit, round 2 the effect fit at
//!   the frozen propensity, round 3 the covariance cumulants at the final
//!   estimate.
//! * **2R** — rounds 1 and 2 as in 3R, with the covariance cumulants
//!   accumulated concurrently during round 2 at each site's interim effect
//!   estimate.
//! * **2R-INF** — round 1 performs the joint staged update of both blocks;
//!   round 2 accumulates the covariance cumulants at the final estimate.
//! * **1R** — a single pass doing both the joint update and the covariance
//!   accumulation at each site's concurrent estimates.
//!
//! 2R and 3R share every floating-point operation on the point-estimate
//! path, so their `β̂` agree bitwise; they differ only in where the
//! covariance cumulants are evaluated.
//!
//! Analysis methods (the four protocols, the oracle, and meta-analysis) are
//! also exposed behind the [`registry::Method`] trait and a name-keyed
//! [`registry::MethodRegistry`], so callers select a strategy at runtime.

pub mod baselines;
pub mod cumulant;
pub mod incremental;
pub mod packet;
pub mod protocol;
pub mod registry;
pub mod site;

pub use baselines::{meta_analyze, oracle_analyze, MetaResult, SiteExclusion};
pub use cumulant::CumulantPair;
pub use incremental::incremental_update;
pub use packet::{MatrixPayload, RelayPacket, ThetaPayload};
pub use protocol::{
    advance_round, assemble_inference, finalize, initial_packet, relay_hop, run_protocol,
    EngineError, FailurePolicy, HopOutcome, ProtocolConfig, ProtocolKind, ProtocolResult,
};
pub use registry::{Method, MethodDetail, MethodOutcome, MethodRegistry};
pub use site::{AccessKind, AccessLog, LocalSite, LoggingSite, SiteAccessor};
