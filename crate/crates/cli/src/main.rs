//! `cola` — command-line front end for the relay engine and harness.
//!
//! Subcommands mirror the workflow: `simulate` writes a trial to disk as
//! per-site CSVs, `run` executes one analysis method over site files,
//! `relay-step` performs a single protocol hop on a packet file (so a
//! relay can be driven across separate processes), `experiment` runs a
//! replicated study, and `report` re-renders a saved metrics report.
//!
//! Exit codes: 0 success; 2 input or parse error; 3 convergence failure
//! (`run` and `relay-step` only — the output file is still written);
//! 4 infeasible design targets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cola_core::{
    ConvergenceDiagnostics, FailureReason, InferenceResult, SiteDataset, SolverConfig,
};
use cola_engine::{
    advance_round, finalize, initial_packet, relay_hop, EngineError, LocalSite, MethodRegistry,
    ProtocolConfig, ProtocolKind, RelayPacket,
};
use cola_sim::harness::{run_experiment, run_sweep, MethodId, MetricsRow};
use cola_sim::report::{emit_report, parse_csv_report, parse_json_report, ReportFormat};
use cola_sim::scenario::{generate_trial, ScenarioConfig};

#[derive(Debug)]
enum CliError {
    /// Malformed input, unknown names, bad files — exit 2.
    Input(String),
    /// A requested fit did not converge — exit 3.
    Convergence(String),
    /// Structurally impossible design targets — exit 4.
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Convergence(_) => ExitCode::from(3),
            CliError::Infeasible(_) => ExitCode::from(4),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Convergence(m) | CliError::Infeasible(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<cola_sim::Error> for CliError {
    fn from(e: cola_sim::Error) -> Self {
        match e {
            cola_sim::Error::Infeasible(m) => CliError::Infeasible(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<cola_core::Error> for CliError {
    fn from(e: cola_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::SiteFailure { .. } => CliError::Convergence(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("json: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "cola",
    version,
    about = "Collaborative relay estimation of treatment effects across data-siloed sites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where a scenario comes from: a numbered preset or a config file.
#[derive(Args)]
struct ScenarioSource {
    /// Preset design number (1..6).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<u8>,
    /// Path to a ScenarioConfig JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config file's seed when given.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioSource {
    fn load(&self) -> CliResult<ScenarioConfig> {
        let mut config = match (self.scenario, &self.config) {
            (Some(id), None) => ScenarioConfig::preset(id, self.seed.unwrap_or(0))?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str(&text)?
            }
            (None, None) => {
                return Err(CliError::Input(
                    "either --scenario or --config is required".into(),
                ))
            }
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        };
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trial and write per-site CSVs plus a manifest.
    Simulate {
        #[command(flatten)]
        source: ScenarioSource,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one analysis method over site CSV files.
    Run {
        /// Method name: 1r, 2r, 2r-inf, 3r, oracle, or meta.
        #[arg(long)]
        protocol: String,
        /// Comma-separated site CSV paths.
        #[arg(long, value_delimiter = ',', required = true)]
        sites: Vec<PathBuf>,
        /// Visit order as 1-based indices into --sites (default: given order).
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<usize>>,
        /// Result JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Perform one protocol hop (or round transition) on a packet file.
    RelayStep {
        /// Incoming packet JSON; omit with --start.
        #[arg(long)]
        packet: Option<PathBuf>,
        /// Begin a fresh relay at this site instead of continuing one.
        #[arg(long, requires = "protocol", conflicts_with = "packet")]
        start: bool,
        /// Protocol for --start: 1r, 2r, 2r-inf, or 3r.
        #[arg(long)]
        protocol: Option<String>,
        /// Site CSV for this hop.
        #[arg(long)]
        site: Option<PathBuf>,
        /// Close the current round instead of visiting a site.
        #[arg(long, conflicts_with_all = ["site", "start", "finalize"])]
        advance_round: bool,
        /// Extract the final estimate and covariance from the packet.
        #[arg(long, conflicts_with_all = ["site", "start"])]
        finalize: bool,
        /// Output path: the next packet, or the result JSON with --finalize.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated experiment and print the metrics report.
    Experiment {
        #[command(flatten)]
        source: ScenarioSource,
        /// Number of replicates.
        #[arg(long)]
        reps: usize,
        /// Comma-separated method names, or 'all'.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        /// Output format: table-text, csv, or json.
        #[arg(long)]
        format: Option<String>,
        /// Sweep the design's rare probability over the built-in grid
        /// and emit one CSV block per grid point.
        #[arg(long)]
        sweep: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a saved metrics report (JSON or CSV input).
    Report {
        /// Report file to read.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output format: table-text, csv, or json.
        #[arg(long, default_value = "table-text")]
        format: String,
    },
}

fn parse_methods(names: &[String]) -> CliResult<Vec<MethodId>> {
    let mut methods = Vec::new();
    for name in names {
        if name.trim().eq_ignore_ascii_case("all") {
            methods.extend(MethodId::ALL);
        } else {
            methods.push(name.parse::<MethodId>()?);
        }
    }
    Ok(methods)
}

fn load_sites(paths: &[PathBuf]) -> CliResult<Vec<SiteDataset>> {
    paths
        .iter()
        .map(|p| {
            SiteDataset::from_csv_path(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn reorder(sites: Vec<SiteDataset>, order: &[usize]) -> CliResult<Vec<SiteDataset>> {
    let k = sites.len();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (1..=k).collect::<Vec<_>>() {
        return Err(CliError::Input(format!(
            "--order {order:?} is not a permutation of 1..={k}"
        )));
    }
    let mut slots: Vec<Option<SiteDataset>> = sites.into_iter().map(Some).collect();
    Ok(order
        .iter()
        .map(|&i| slots[i - 1].take().expect("permutation"))
        .collect())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn simulate(source: &ScenarioSource, out: &Path) -> CliResult<()> {
    let config = source.load()?;
    let trial = generate_trial(&config)?;
    fs::create_dir_all(out)?;
    for site in &trial.sites {
        site.to_csv_path(out.join(format!("{}.csv", site.site_id())))?;
    }
    let manifest = serde_json::to_string_pretty(&trial.manifest)? + "\n";
    write_text(&out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} sites ({} rows) and manifest.json to {}",
        trial.sites.len(),
        trial.manifest.site_sizes.iter().sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn run_method(
    protocol: &str,
    site_paths: &[PathBuf],
    order: Option<&[usize]>,
    out: &Path,
) -> CliResult<()> {
    let mut sites = load_sites(site_paths)?;
    if let Some(order) = order {
        sites = reorder(sites, order)?;
    }
    let registry = MethodRegistry::with_defaults();
    let outcome = registry.run(
        protocol.trim().to_ascii_lowercase().as_str(),
        &sites,
        &ProtocolConfig::default(),
    )?;
    write_text(out, &(serde_json::to_string_pretty(&outcome)? + "\n"))?;
    if !outcome.converged {
        return Err(CliError::Convergence(format!(
            "method '{}' did not produce a usable estimate (result written to {})",
            outcome.method,
            out.display()
        )));
    }
    println!(
        "{}: beta_A = {:.6}, se = {:.6} -> {}",
        outcome.method,
        outcome.beta_a.unwrap_or(f64::NAN),
        outcome.se_beta_a.unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn read_packet(path: &Path) -> CliResult<RelayPacket> {
    let text = fs::read_to_string(path)?;
    Ok(RelayPacket::from_json_str(&text)?)
}

fn finalize_packet(packet: &RelayPacket, out: &Path) -> CliResult<()> {
    let (theta, cumulants) = finalize(packet)?;
    let v_cum = cumulants.v_cum.as_ref().expect("finalize checks V");
    // The wire format carries only the aggregate convergence flag, not which
    // hop failed or why; `converged` is the authoritative signal here.
    let diagnostics = ConvergenceDiagnostics {
        converged: packet.converged_so_far,
        failure_reason: FailureReason::None,
        iterations: 0,
        clamp_events: 0,
    };
    let inference = InferenceResult::from_sandwich(
        theta,
        &cumulants.h_cum,
        v_cum,
        cumulants.n_cum,
        diagnostics,
    )?;
    write_text(out, &(serde_json::to_string_pretty(&inference)? + "\n"))?;
    if !packet.converged_so_far {
        return Err(CliError::Convergence(format!(
            "relay carried a failed hop; result written to {}",
            out.display()
        )));
    }
    println!(
        "finalized {}: beta_A = {:.6}, se = {:.6} -> {}",
        packet.protocol,
        inference.beta_a(),
        inference.se_beta_a(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn relay_step(
    packet_path: Option<&Path>,
    start: bool,
    protocol: Option<&str>,
    site_path: Option<&Path>,
    advance: bool,
    finalize_flag: bool,
    out: &Path,
) -> CliResult<()> {
    if advance {
        let packet = read_packet(
            packet_path.ok_or_else(|| CliError::Input("--advance-round needs --packet".into()))?,
        )?;
        let next = advance_round(&packet)?;
        write_text(out, &(next.to_json_string()? + "\n"))?;
        println!(
            "advanced {} to round {} -> {}",
            next.protocol,
            next.round,
            out.display()
        );
        return Ok(());
    }
    if finalize_flag {
        let packet = read_packet(
            packet_path.ok_or_else(|| CliError::Input("--finalize needs --packet".into()))?,
        )?;
        return finalize_packet(&packet, out);
    }

    let site_path = site_path.ok_or_else(|| CliError::Input("--site is required".into()))?;
    let dataset = SiteDataset::from_csv_path(site_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", site_path.display())))?;
    let packet = if start {
        let kind: ProtocolKind = protocol
            .ok_or_else(|| CliError::Input("--start needs --protocol".into()))?
            .parse()?;
        initial_packet(kind, dataset.p_gamma())
    } else {
        read_packet(
            packet_path
                .ok_or_else(|| CliError::Input("either --packet or --start is required".into()))?,
        )?
    };

    let site = LocalSite::new(dataset);
    let hop = relay_hop(&packet, &site, &SolverConfig::default())?;
    write_text(out, &(hop.packet.to_json_string()? + "\n"))?;
    if !hop.outcome.converged {
        return Err(CliError::Convergence(format!(
            "hop at site {} (round {}) did not converge; packet written to {}",
            hop.packet.site_trail.last().map_or("?", String::as_str),
            hop.packet.round,
            out.display()
        )));
    }
    println!(
        "{} round {} site {} absorbed ({} rows cumulative) -> {}",
        hop.packet.protocol,
        hop.packet.round,
        hop.packet.site_index,
        hop.packet.n_cum,
        out.display()
    );
    Ok(())
}

fn sweep_csv(points: &[(f64, Vec<MetricsRow>)]) -> String {
    let mut out =
        String::from("probability,method,fails_pct,cp_pct,abias,mse,ese,n_reps,n_converged\n");
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
    for (probability, rows) in points {
        for row in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                probability,
                row.method.registry_name(),
                row.fails_pct,
                opt(row.cp_pct),
                opt(row.abias),
                opt(row.mse),
                opt(row.ese),
                row.n_reps,
                row.n_converged,
            ));
        }
    }
    out
}

fn experiment(
    source: &ScenarioSource,
    reps: usize,
    method_names: &[String],
    format: Option<&str>,
    sweep: bool,
    out: Option<&Path>,
) -> CliResult<()> {
    let config = source.load()?;
    let methods = parse_methods(method_names)?;
    let document = if sweep {
        match format {
            None | Some("csv") => {}
            Some(other) => {
                return Err(CliError::Input(format!("--sweep emits csv, not '{other}'")))
            }
        }
        sweep_csv(&run_sweep(&config, &methods, reps)?)
    } else {
        let report_format: ReportFormat = format.unwrap_or("table-text").parse()?;
        emit_report(&run_experiment(&config, &methods, reps)?, report_format)?
    };
    print!("{document}");
    if let Some(path) = out {
        write_text(path, &document)?;
    }
    Ok(())
}

fn report(input: &Path, format: &str) -> CliResult<()> {
    let text = fs::read_to_string(input)?;
    let rows = parse_json_report(&text)
        .or_else(|_| parse_csv_report(&text))
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let document = emit_report(&rows, format.parse()?)?;
    print!("{document}");
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { source, out } => simulate(&source, &out),
        Command::Run {
            protocol,
            sites,
            order,
            out,
        } => run_method(&protocol, &sites, order.as_deref(), &out),
        Command::RelayStep {
            packet,
            start,
            protocol,
            site,
            advance_round,
            finalize,
            out,
        } => relay_step(
            packet.as_deref(),
            start,
            protocol.as_deref(),
            site.as_deref(),
            advance_round,
            finalize,
            &out,
        ),
        Command::Experiment {
            source,
            reps,
            methods,
            format,
            sweep,
            out,
        } => experiment(
            &source,
            reps,
            &methods,
            format.as_deref(),
            sweep,
            out.as_deref(),
        ),
        Command::Report { input, format } => report(&input, &format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            error.exit_code()
        }
    }
}
