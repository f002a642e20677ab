mod common;

use nalgebra::{DMatrix, DVector, Vector2};

use cola_core::estfun;
use cola_core::solver::{solve_local, solve_oracle, BlockSelector, SolverConfig};
use cola_core::{ParameterVector, SiteDataset};
use cola_engine::{
    advance_round, finalize, incremental_update, initial_packet, meta_analyze, oracle_analyze,
    relay_hop, run_protocol, AccessKind, AccessLog, EngineError, FailurePolicy, LocalSite,
    LoggingSite, MethodRegistry, ProtocolConfig, ProtocolKind, ProtocolResult, RelayPacket,
    SiteAccessor, SiteExclusion,
};

fn run(sites: &[SiteDataset], kind: ProtocolKind, config: &ProtocolConfig) -> ProtocolResult {
    let locals: Vec<LocalSite> = sites.iter().cloned().map(LocalSite::new).collect();
    let refs: Vec<&dyn SiteAccessor> = locals.iter().map(|s| s as &dyn SiteAccessor).collect();
    run_protocol(&refs, kind, config).unwrap()
}

fn assert_bitwise_eq(a: &DVector<f64>, b: &DVector<f64>, context: &str) {
    assert_eq!(a.len(), b.len(), "{context}: length");
    for i in 0..a.len() {
        assert_eq!(
            a[i].to_bits(),
            b[i].to_bits(),
            "{context}: component {i} differs ({} vs {})",
            a[i],
            b[i]
        );
    }
}

#[test]
fn single_site_protocols_match_the_oracle() {
    let ds = common::simulate_site(11, 400, "solo");
    let config = ProtocolConfig::default();
    let oracle = solve_oracle(std::slice::from_ref(&ds), &config.solver).unwrap();
    assert!(oracle.converged);
    for kind in ProtocolKind::ALL {
        let result = run(std::slice::from_ref(&ds), kind, &config);
        let diff = (result.theta_final.stacked() - oracle.theta_hat.stacked()).amax();
        assert!(
            diff <= 10.0 * config.solver.tolerance,
            "{kind}: single-site deviation {diff:e}"
        );
    }
}

#[test]
fn two_r_and_three_r_point_estimates_agree_bitwise() {
    let sites = common::simulate_sites(21, 3, 150);
    let config = ProtocolConfig::default();
    let r2 = run(&sites, ProtocolKind::TwoR, &config);
    let r3 = run(&sites, ProtocolKind::ThreeR, &config);
    assert_bitwise_eq(
        &r2.theta_final.stacked(),
        &r3.theta_final.stacked(),
        "2R vs 3R",
    );
    // The covariances are evaluated at different interim points and may
    // legitimately differ; both must still be usable.
    assert!(r2.covariance.iter().all(|v| v.is_finite()));
    assert!(r3.covariance.iter().all(|v| v.is_finite()));
}

#[test]
fn one_r_and_two_r_inf_point_estimates_agree_bitwise() {
    let sites = common::simulate_sites(22, 3, 150);
    let config = ProtocolConfig::default();
    let r1 = run(&sites, ProtocolKind::OneR, &config);
    let rinf = run(&sites, ProtocolKind::TwoRInf, &config);
    assert_bitwise_eq(
        &r1.theta_final.stacked(),
        &rinf.theta_final.stacked(),
        "1R vs 2R-INF",
    );
    assert!(r1.covariance.iter().all(|v| v.is_finite()));
    assert!(rinf.covariance.iter().all(|v| v.is_finite()));
}

#[test]
fn final_cumulants_equal_sitewise_sums() {
    let sites = common::simulate_sites(31, 3, 150);
    let result = run(&sites, ProtocolKind::ThreeR, &ProtocolConfig::default());
    let p = result.theta_final.p();
    let mut h: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut v: DMatrix<f64> = DMatrix::zeros(p, p);
    for ds in &sites {
        let eval = estfun::evaluate(ds, &result.theta_final).unwrap();
        h += eval.h_sum();
        v += &eval.outer_sum;
    }
    assert_eq!(result.cumulants.h_cum, h);
    assert_eq!(result.cumulants.v_cum.as_ref().unwrap(), &v);
    assert_eq!(
        result.n_total,
        sites.iter().map(SiteDataset::n).sum::<usize>()
    );
}

/// Steps a 3R relay packet by packet, serializing to JSON and parsing back
/// between every hop, and checks that (a) every hop satisfies its own
/// incremental estimating equation, (b) the per-round bookkeeping
/// invariants hold, and (c) the end state is bit-identical to the
/// in-process runner.
#[test]
fn manual_packet_relay_matches_run_protocol_through_json() {
    let sites = common::simulate_sites(41, 3, 150);
    let config = ProtocolConfig::default();
    let locals: Vec<LocalSite> = sites.iter().cloned().map(LocalSite::new).collect();
    let refs: Vec<&dyn SiteAccessor> = locals.iter().map(|s| s as &dyn SiteAccessor).collect();
    let reference = run_protocol(&refs, ProtocolKind::ThreeR, &config).unwrap();

    let mut packet = initial_packet(ProtocolKind::ThreeR, sites[0].p_gamma());
    for round in 1..=3u32 {
        let mut round_n = 0usize;
        for (i, local) in locals.iter().enumerate() {
            let h_prior = packet.h_cum.to_matrix().unwrap();
            let prev_beta = packet.theta.beta_vector();
            let hop = relay_hop(&packet, local, &config.solver).unwrap();
            assert!(hop.outcome.converged, "round {round}, hop {}", i + 1);

            let text = hop.packet.to_json_string().unwrap();
            packet = RelayPacket::from_json_str(&text).unwrap();

            round_n += local.n();
            assert_eq!(packet.round, round);
            assert_eq!(packet.site_index as usize, i + 1);
            assert_eq!(packet.n_cum, round_n);
            assert_eq!(
                packet.site_trail.len(),
                (round as usize - 1) * locals.len() + i + 1
            );

            if round == 2 {
                // The refreshed β̂ is a root of this hop's incremental
                // equation: Ψ^Δ(β̂) + H_prior·(β_prev − β̂) ≈ 0.
                let gamma_g = packet.gamma_global_vector().unwrap();
                let beta_new = packet.theta.beta_vector().unwrap();
                let eval = estfun::evaluate_msm(local.dataset(), &gamma_g, &beta_new).unwrap();
                let residual = &eval.psi_sum + &h_prior * (prev_beta.unwrap() - beta_new);
                let bound = 10.0 * config.solver.tolerance * (1.0 + beta_new.amax());
                assert!(
                    residual.amax() <= bound,
                    "hop residual {:e} > {bound:e}",
                    residual.amax()
                );
            }
        }
        if round < 3 {
            packet = advance_round(&packet).unwrap();
            assert_eq!(packet.site_index, 0);
            assert_eq!(packet.n_cum, 0);
        }
    }

    let (theta, cumulants) = finalize(&packet).unwrap();
    assert_bitwise_eq(
        &theta.stacked(),
        &reference.theta_final.stacked(),
        "manual vs runner",
    );
    assert_eq!(cumulants.h_cum, reference.cumulants.h_cum);
    assert_eq!(cumulants.v_cum, reference.cumulants.v_cum);
    assert_eq!(cumulants.n_cum, reference.n_total);
}

#[test]
fn overwhelming_prior_pins_the_update_to_the_carried_estimate() {
    let ds = common::simulate_site(51, 200, "site1");
    let prev = ParameterVector::new(
        DVector::from_vec(vec![0.2, -0.1, 0.3]),
        Vector2::new(-0.3, 0.25),
    )
    .unwrap();
    let p = prev.p();
    let prior = DMatrix::identity(p, p) * 1e12;
    let out = incremental_update(
        &ds,
        &prev,
        &prior,
        BlockSelector::Joint,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(out.converged);
    assert!((out.theta_hat.stacked() - prev.stacked()).amax() < 1e-6);
}

#[test]
fn zero_prior_reduces_to_the_local_solve() {
    let ds = common::simulate_site(52, 200, "site1");
    let config = SolverConfig::default();
    let p = ds.p_gamma() + 2;
    let inc = incremental_update(
        &ds,
        &ParameterVector::zeros(ds.p_gamma()),
        &DMatrix::zeros(p, p),
        BlockSelector::Joint,
        &config,
    )
    .unwrap();
    let loc = solve_local(
        &ds,
        BlockSelector::Joint,
        &ParameterVector::zeros(ds.p_gamma()),
        &config,
    )
    .unwrap();
    assert!(inc.converged && loc.converged);
    assert_eq!(inc.theta_hat.stacked(), loc.theta_hat.stacked());
    assert_eq!(inc.iterations, loc.iterations);
}

#[test]
fn failure_policies_handle_a_separated_site() {
    let healthy = common::simulate_sites(61, 2, 150);
    let sep = common::separated_msm_site(62, 80, "sep");

    // Downstream of a healthy site the carried-in prior anchors the update,
    // so even a site whose own MSM is separated converges on its hop.
    let anchored = vec![healthy[0].clone(), sep.clone(), healthy[1].clone()];
    let result = run(&anchored, ProtocolKind::ThreeR, &ProtocolConfig::default());
    assert!(result.all_converged());

    // Leading the relay, the same site sees a zero prior — a purely local
    // separated fit — and fails. The policy decides what happens next.
    let leading = vec![sep, healthy[0].clone(), healthy[1].clone()];
    let skip = ProtocolConfig {
        failure_policy: FailurePolicy::Skip,
        ..ProtocolConfig::default()
    };
    let result = run(&leading, ProtocolKind::ThreeR, &skip);
    assert!(!result.all_converged());
    assert!(result.first_failure().is_failure());
    assert!(result.theta_final.stacked().iter().all(|v| v.is_finite()));
    assert!(result.covariance.iter().all(|v| v.is_finite()));

    let locals: Vec<LocalSite> = leading.iter().cloned().map(LocalSite::new).collect();
    let refs: Vec<&dyn SiteAccessor> = locals.iter().map(|s| s as &dyn SiteAccessor).collect();
    match run_protocol(&refs, ProtocolKind::ThreeR, &ProtocolConfig::default()) {
        Err(EngineError::SiteFailure {
            site_id,
            round,
            site_index,
            ..
        }) => {
            assert_eq!(site_id, "sep");
            assert_eq!(round, 2);
            assert_eq!(site_index, 1);
        }
        other => panic!("expected fail-fast SiteFailure, got {other:?}"),
    }
}

#[test]
fn relay_touches_sites_only_through_summary_operations() {
    use AccessKind::*;
    let sites = common::simulate_sites(71, 2, 120);
    let expectations: [(ProtocolKind, Vec<(&str, AccessKind)>); 4] = [
        (
            ProtocolKind::OneR,
            vec![
                ("site1", UpdateJoint),
                ("site1", EvaluateFull),
                ("site2", UpdateJoint),
                ("site2", EvaluateFull),
            ],
        ),
        (
            ProtocolKind::TwoR,
            vec![
                ("site1", UpdatePs),
                ("site2", UpdatePs),
                ("site1", UpdateMsm),
                ("site1", EvaluateFull),
                ("site2", UpdateMsm),
                ("site2", EvaluateFull),
            ],
        ),
        (
            ProtocolKind::TwoRInf,
            vec![
                ("site1", UpdateJoint),
                ("site1", EvaluateFull),
                ("site2", UpdateJoint),
                ("site2", EvaluateFull),
                ("site1", EvaluateFull),
                ("site2", EvaluateFull),
            ],
        ),
        (
            ProtocolKind::ThreeR,
            vec![
                ("site1", UpdatePs),
                ("site2", UpdatePs),
                ("site1", UpdateMsm),
                ("site2", UpdateMsm),
                ("site1", EvaluateFull),
                ("site2", EvaluateFull),
            ],
        ),
    ];
    for (kind, expected) in expectations {
        let log = AccessLog::new();
        let wrapped: Vec<LoggingSite<LocalSite>> = sites
            .iter()
            .cloned()
            .map(|d| LoggingSite::new(LocalSite::new(d), log.clone()))
            .collect();
        let refs: Vec<&dyn SiteAccessor> = wrapped.iter().map(|s| s as &dyn SiteAccessor).collect();
        run_protocol(&refs, kind, &ProtocolConfig::default()).unwrap();
        let events = log.events();
        assert_eq!(events.len(), expected.len(), "{kind}: event count");
        for (got, want) in events.iter().zip(&expected) {
            assert_eq!(got.0, want.0, "{kind}: site order");
            assert_eq!(got.1, want.1, "{kind}: operation");
        }
    }
}

#[test]
fn meta_on_one_site_is_the_local_fit() {
    let ds = common::simulate_site(81, 300, "lone");
    let config = SolverConfig::default();
    let meta = meta_analyze(std::slice::from_ref(&ds), &config).unwrap();
    assert_eq!(meta.n_included, 1);
    assert!(!meta.replication_converged());
    let (id, beta, se) = &meta.site_estimates[0];
    assert_eq!(id, "lone");
    assert!((meta.pooled_effect.unwrap() - beta).abs() < 1e-12);
    assert!((meta.pooled_se.unwrap() - se).abs() < 1e-12);

    // Independent path to the same single-site fit.
    let oracle = oracle_analyze(std::slice::from_ref(&ds), &config).unwrap();
    assert!((beta - oracle.beta_a()).abs() < 1e-10);
    assert!((se - oracle.se_beta_a()).abs() < 1e-10);
}

#[test]
fn meta_on_identical_sites_halves_the_variance() {
    let ds = common::simulate_site(91, 300, "a");
    let twin = SiteDataset::new(
        "b",
        ds.outcome().to_vec(),
        ds.treatment().to_vec(),
        ds.covariates().clone(),
        false,
    )
    .unwrap();
    let meta = meta_analyze(&[ds, twin], &SolverConfig::default()).unwrap();
    assert!(meta.replication_converged());
    let (_, beta, se) = &meta.site_estimates[0];
    assert!((meta.pooled_effect.unwrap() - beta).abs() < 1e-12);
    assert!((meta.pooled_se.unwrap() - se / 2.0_f64.sqrt()).abs() < 1e-12);
}

#[test]
fn degenerate_sites_are_excluded_not_charged_to_the_solver() {
    let healthy = common::simulate_sites(95, 2, 200);
    let n = 60;
    let covs = DMatrix::from_fn(n, 2, |r, c| ((r * 2 + c) as f64) / (n as f64) - 0.5);
    let all_null_outcome = SiteDataset::new(
        "y0",
        vec![0; n],
        (0..n).map(|i| u8::from(i % 2 == 0)).collect(),
        covs.clone(),
        false,
    )
    .unwrap();
    let one_arm = SiteDataset::new(
        "a1",
        (0..n).map(|i| u8::from(i % 3 == 0)).collect(),
        vec![1; n],
        covs,
        false,
    )
    .unwrap();
    let separated = common::separated_msm_site(96, 80, "sep");

    let sites = vec![
        healthy[0].clone(),
        all_null_outcome,
        one_arm,
        separated,
        healthy[1].clone(),
    ];
    let meta = meta_analyze(&sites, &SolverConfig::default()).unwrap();
    assert_eq!(meta.n_included, 2);
    assert!(meta.replication_converged());

    let y0 = meta.exclusion_of("y0").unwrap();
    assert_eq!(y0, SiteExclusion::DegenerateOutcome);
    assert!(!y0.is_solver_attributable());
    let a1 = meta.exclusion_of("a1").unwrap();
    assert_eq!(a1, SiteExclusion::DegenerateTreatment);
    assert!(!a1.is_solver_attributable());
    let sep = meta.exclusion_of("sep").unwrap();
    assert!(matches!(sep, SiteExclusion::MsmFailure(_)));
    assert!(sep.is_solver_attributable());
}

#[test]
fn registry_runs_every_method_by_name() {
    let sites = common::simulate_sites(101, 3, 150);
    let registry = MethodRegistry::with_defaults();
    assert_eq!(
        registry.names(),
        vec!["1r", "2r", "2r-inf", "3r", "meta", "oracle"]
    );
    let config = ProtocolConfig::default();
    for name in registry.names() {
        let out = registry.run(name, &sites, &config).unwrap();
        assert!(out.converged, "{name} did not converge");
        assert!(out.beta_a.unwrap().is_finite(), "{name}");
        assert!(out.se_beta_a.unwrap() > 0.0, "{name}");
    }
    assert!(registry.run("bogus", &sites, &config).is_err());

    // The oracle via the registry matches the direct pooled solve bitwise.
    let direct = solve_oracle(&sites, &config.solver).unwrap();
    let via_registry = registry.run("oracle", &sites, &config).unwrap();
    assert_eq!(
        via_registry.beta_a.unwrap().to_bits(),
        direct.theta_hat.beta_a().to_bits()
    );
}
