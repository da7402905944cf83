use ratecov::montecarlo::AssociationMode;
use ratecov::workflow::{self, parse_allocation, Method, RunConfig, RunReport, RunStatus};
use ratecov::{Allocation, Error};
use ratecov_validation::golden;

fn config(method: Method, trials: u64) -> RunConfig {
    RunConfig {
        method,
        trials,
        ..RunConfig::default()
    }
}

#[test]
fn exact_solve_on_three_stations() {
    let sc = golden("three_bs");
    let r = workflow::solve(&sc, &config(Method::Exact, 100_000)).unwrap();
    assert_eq!(r.status, RunStatus::Optimal);
    assert!(!r.fallback);
    assert_eq!(r.exit_code(), 0);
    assert_eq!(r.cost, Some(300.0));
    assert_eq!(r.scenario_hash, sc.content_hash());
    assert_eq!(r.satisfied_count, sc.num_sp());
    for sp in &r.sps {
        assert!(sp.analytic >= sp.beta - 1e-6);
        let mc = sp.monte_carlo.as_ref().unwrap();
        assert!(mc.mean >= sp.beta - 0.02, "{}: {}", sp.sp_id, mc.mean);
    }
}

#[test]
fn reports_are_byte_identical_and_rerunnable_from_their_echo() {
    let sc = golden("three_bs");
    for method in Method::ALL {
        let cfg = config(method, 30_000);
        let first = workflow::solve(&sc, &cfg).unwrap().to_json();
        assert_eq!(
            first,
            workflow::solve(&sc, &cfg).unwrap().to_json(),
            "{method}"
        );
        let echoed: RunReport = serde_json::from_str(&first).unwrap();
        assert_eq!(
            workflow::solve(&sc, &echoed.config).unwrap().to_json(),
            first,
            "{method}"
        );
        assert!(!first.contains("wall_time_s"));
    }
}

#[test]
fn infeasible_exact_run_falls_back_to_equal_split() {
    let sc = golden("scenario_one");
    let r = workflow::solve(&sc, &config(Method::Exact, 0)).unwrap();
    assert!(r.fallback);
    assert_eq!(r.status, RunStatus::Fallback);
    assert_eq!(r.exit_code(), 1);
    let a = r.allocation.unwrap();
    assert!(a.slices.iter().flatten().all(|&d| d == 1.0 / 3.0));
    assert_eq!(r.leased_count, Some(sc.num_bs()));
}

#[test]
fn equal_split_reports_thirds() {
    let sc = golden("three_bs");
    let r = workflow::solve(&sc, &config(Method::EqualSplit, 0)).unwrap();
    assert!(r
        .allocation
        .unwrap()
        .slices
        .iter()
        .flatten()
        .all(|&d| d == 1.0 / 3.0));
    assert!(r.sps.iter().all(|s| s.monte_carlo.is_none()));
}

#[test]
fn sequential_reports_use_nearest_station_coverage() {
    let sc = golden("three_bs");
    let r = workflow::solve(&sc, &config(Method::Sequential, 0)).unwrap();
    assert_eq!(r.coverage_model, AssociationMode::Voronoi);
    assert!(r.sps.iter().all(|s| s.sequential_status.is_some()));
}

#[test]
fn sweep_rows_follow_intensity_then_method() {
    let sc = golden("three_bs");
    let rows = workflow::sweep(
        &sc,
        &[0.5, 2.0],
        &[Method::Exact, Method::Greedy],
        &config(Method::Exact, 0),
    )
    .unwrap();
    let keys: Vec<(f64, Method)> = rows.iter().map(|r| (r.intensity, r.method)).collect();
    assert_eq!(
        keys,
        [
            (0.5, Method::Exact),
            (0.5, Method::Greedy),
            (2.0, Method::Exact),
            (2.0, Method::Greedy)
        ]
    );
    for pair in rows.chunks(2) {
        assert!(pair[0].cost.unwrap() <= pair[1].cost.unwrap());
    }
    let mut buf = Vec::new();
    workflow::write_sweep_csv(&sc, &rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(
        text.lines().next().unwrap().split(',').count(),
        8 + 4 * sc.num_sp()
    );
}

#[test]
fn sweep_records_failures_in_row() {
    let sc = golden("three_bs");
    let cfg = RunConfig {
        max_nodes: 0,
        ..config(Method::Exact, 0)
    };
    let rows = workflow::sweep(&sc, &[1.0], &[Method::Exact, Method::EqualSplit], &cfg).unwrap();
    assert!(rows[0].error.is_some() && rows[0].status.is_none());
    assert!(rows[1].status.is_some() && rows[1].error.is_none());
}

#[test]
fn sweep_rejects_bad_intensity_lists() {
    let sc = golden("three_bs");
    let cfg = RunConfig::default();
    for bad in [&[1.0, 1.0][..], &[2.0, 1.0], &[0.0], &[-1.0], &[f64::NAN]] {
        assert!(matches!(
            workflow::sweep(&sc, bad, &[Method::Exact], &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
}

#[test]
fn validation_of_degenerate_allocations() {
    let sc = golden("three_bs");
    let zero = Allocation::empty(sc.num_bs(), sc.num_sp());
    let v = workflow::validate(
        &sc,
        &zero,
        AssociationMode::Circular,
        10_000,
        1,
        Default::default(),
    )
    .unwrap();
    assert!(v.pass);
    assert!(v
        .sps
        .iter()
        .all(|s| s.analytic == 0.0 && s.monte_carlo.mean == 0.0));

    let mut corrupt = ratecov::allocators::equal_split(&sc);
    corrupt.slices[0] = vec![0.9, 0.9, 0.9];
    let v = workflow::validate(
        &sc,
        &corrupt,
        AssociationMode::Voronoi,
        10_000,
        1,
        Default::default(),
    )
    .unwrap();
    assert!(!v.pass);
    assert!(v.sps.is_empty());
    assert!(
        v.invariant_violations
            .iter()
            .any(|m| m.contains("exceeds 1")),
        "{:?}",
        v.invariant_violations
    );

    let wrong = Allocation::empty(2, 3);
    assert!(matches!(
        workflow::validate(
            &sc,
            &wrong,
            AssociationMode::Circular,
            10,
            1,
            Default::default()
        ),
        Err(Error::AllocationMismatch(_))
    ));
    assert!(parse_allocation("{\"cost\": 3}").is_err());
}
