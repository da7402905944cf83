use ratecov::coefficients::{load_or_compute, precompute_coefficients};
use ratecov::milp::build_problem1;
use ratecov::solver::{
    branch_and_bound, coverage_matrix, direct_branch_and_bound, enumerate_oracle, solve_exact,
    BnbOptions, NodeLog, SolveStatus,
};
use ratecov::{ActiveSet, CoverageEngine, QuadratureConfig, Scenario};
use ratecov_validation::{fuzz_instance, golden};

fn engine(sc: &Scenario) -> CoverageEngine {
    CoverageEngine::new(sc, QuadratureConfig::default()).unwrap()
}

#[test]
fn expansion_reproduces_weighted_coverage() {
    let sc = golden("three_bs");
    let eng = engine(&sc);
    let coeffs = precompute_coefficients(&eng).unwrap();
    for mask in 0..8u64 {
        let leased = ActiveSet(mask);
        let cov = coverage_matrix(&eng, ActiveSet(7), leased).unwrap();
        for b in 0..3 {
            for s in 0..sc.num_sp() {
                let sum = coeffs.table(b, s).expansion_sum(leased.without(b));
                assert!(
                    (sum - cov[b][s]).abs() <= 1e-12,
                    "b{b} s{s} mask {mask:03b}"
                );
            }
        }
    }
}

#[test]
fn three_bs_model_has_expected_auxiliaries() {
    let sc = golden("three_bs");
    let coeffs = precompute_coefficients(&engine(&sc)).unwrap();
    let (model, map) = build_problem1(&sc, &coeffs).unwrap();
    let ns = sc.num_sp();
    for s in 0..ns {
        let terms: Vec<_> = map.terms.iter().filter(|t| t.sp == s).collect();
        assert_eq!(terms.iter().filter(|t| t.subset.len() == 1).count(), 6);
        assert_eq!(terms.iter().filter(|t| t.subset.len() == 2).count(), 3);
    }
    assert_eq!(map.binary_products.len(), 3);
    assert_eq!(map.mixed_products.len(), 9 * ns);
    assert_eq!(model.num_vars(), 3 + 3 * ns + 3 + 9 * ns);
    assert_eq!(map.dropped_mass, 0.0);
}

#[test]
fn branch_and_bound_matches_enumeration() {
    for i in 0..30 {
        let sc = fuzz_instance(i);
        let eng = engine(&sc);
        let exact = solve_exact(&eng, None, &BnbOptions::default(), None).unwrap();
        let oracle = enumerate_oracle(&eng).unwrap();
        assert_eq!(exact.result.cost, oracle.cost, "instance {i}");
        assert_eq!(exact.result.status, oracle.status, "instance {i}");
        let direct = direct_branch_and_bound(&eng, &BnbOptions::default(), None).unwrap();
        assert_eq!(direct.cost, oracle.cost, "instance {i}, direct search");
    }
}

#[test]
fn bounds_never_exceed_the_optimum() {
    for i in 0..30 {
        let sc = fuzz_instance(i);
        let eng = engine(&sc);
        let coeffs = precompute_coefficients(&eng).unwrap();
        let (model, map) = build_problem1(&sc, &coeffs).unwrap();
        let mut bounds = Vec::new();
        let mut log = |n: &NodeLog| bounds.extend(n.bound);
        let r =
            branch_and_bound(&model, Some(&map), &BnbOptions::default(), Some(&mut log)).unwrap();
        let Some(cost) = r.cost else {
            assert_eq!(r.status, SolveStatus::Infeasible);
            continue;
        };
        assert!(r.root_bound.unwrap() <= cost + 1e-9, "instance {i}");
        assert!(
            r.incumbent_path_bounds
                .windows(2)
                .all(|w| w[1] >= w[0] - 1e-9),
            "instance {i}"
        );
        assert!(
            r.incumbent_path_bounds.iter().all(|&b| b <= cost + 1e-9),
            "instance {i}"
        );
        assert!(
            bounds.iter().all(|&b| b >= r.root_bound.unwrap() - 1e-9),
            "instance {i}"
        );
        assert_eq!(r.gap, 0.0);
    }
}

#[test]
fn unreachable_target_is_infeasible() {
    let mut sc = golden("three_bs");
    sc.demands[0].min_coverage_prob = 1.0;
    let eng = engine(&sc);
    assert_eq!(
        enumerate_oracle(&eng).unwrap().status,
        SolveStatus::Infeasible
    );
    let r = solve_exact(&eng, None, &BnbOptions::default(), None).unwrap();
    assert_eq!(r.result.status, SolveStatus::Infeasible);
    assert!(r.result.allocation.is_none());
}

#[test]
fn cached_coefficients_round_trip() {
    let sc = golden("three_bs");
    let eng = engine(&sc);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coefficients.json");
    let (first, hit) = load_or_compute(&eng, &path).unwrap();
    assert!(!hit);
    let (second, hit) = load_or_compute(&eng, &path).unwrap();
    assert!(hit);
    assert_eq!(first, second);

    let mut changed = sc.clone();
    changed.base_stations[0].lease_cost += 1.0;
    let (_, hit) = load_or_compute(&engine(&changed), &path).unwrap();
    assert!(!hit, "a different scenario must miss the cache");

    std::fs::write(&path, "not json").unwrap();
    let (third, hit) = load_or_compute(&eng, &path).unwrap();
    assert!(!hit);
    assert_eq!(first, third);
}
