use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratecov::allocators::{
    equal_split, greedy_allocate, sequential_allocate, solve_problem2, ResidualCapacity, SpStatus,
};
use ratecov::solver::{solve_exact, BnbOptions};
use ratecov::{CoverageEngine, Point, QuadratureConfig, Scenario};
use ratecov_validation::{build, demand, fuzz_instance, golden, station};

fn engine(sc: &Scenario) -> CoverageEngine {
    CoverageEngine::new(sc, QuadratureConfig::default()).unwrap()
}

/// Fractional knapsack: fill the BSs with the largest coverage term first.
fn knapsack(terms: &[f64], avail: &[f64], beta: f64) -> Option<f64> {
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by(|&a, &b| terms[b].total_cmp(&terms[a]));
    let (mut need, mut used) = (beta, 0.0);
    for b in order {
        if need <= 0.0 || terms[b] <= 0.0 {
            break;
        }
        let take = (need / terms[b]).min(avail[b]);
        used += take;
        need -= take * terms[b];
    }
    (need <= 1e-12).then_some(used)
}

#[test]
fn problem2_matches_fractional_knapsack() {
    let sc = golden("three_bs");
    let eng = engine(&sc);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let avail: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..=1.0)).collect();
        let residual = ResidualCapacity {
            avail: avail.clone(),
        };
        for s in 0..sc.num_sp() {
            let terms = eng.voronoi_terms(s).unwrap();
            let beta = sc.demands[s].min_coverage_prob;
            let got = solve_problem2(&eng, s, &residual).unwrap();
            match (got, knapsack(&terms, &avail, beta)) {
                (Some(delta), Some(total)) => {
                    assert!((delta.iter().sum::<f64>() - total).abs() <= 1e-9);
                    let cov: f64 = delta.iter().zip(&terms).map(|(d, t)| d * t).sum();
                    assert!(cov >= beta - 1e-9);
                    assert!(delta.iter().zip(&avail).all(|(d, a)| *d >= 0.0 && d <= a));
                }
                (None, None) => {}
                (got, want) => panic!("avail {avail:?} s{s}: {got:?} vs {want:?}"),
            }
        }
    }
}

#[test]
fn problem2_matches_grid_search_on_two_stations() {
    let sc = build(
        "pair",
        1.0,
        vec![
            station(0, Point::new(0.3, 0.5), 30.0, 0.4, 10.0),
            station(1, Point::new(0.75, 0.5), 26.0, 0.4, 10.0),
        ],
        vec![demand(0, 300.0, 0.3, 1.0)],
    );
    let eng = engine(&sc);
    let terms = eng.voronoi_terms(0).unwrap();
    let residual = ResidualCapacity {
        avail: vec![0.8, 0.9],
    };
    let delta = solve_problem2(&eng, 0, &residual).unwrap().unwrap();
    let step = 1e-3;
    let mut best = f64::INFINITY;
    for i in 0..=800 {
        for j in 0..=900 {
            let (d0, d1) = (i as f64 * step, j as f64 * step);
            if d0 * terms[0] + d1 * terms[1] >= 0.3 {
                best = best.min(d0 + d1);
                break;
            }
        }
    }
    let lp: f64 = delta.iter().sum();
    assert!(
        lp <= best + 1e-9 && best <= lp + 2.0 * step,
        "LP {lp} vs grid {best}"
    );
}

#[test]
fn sequential_conserves_capacity_and_serves_a_prefix() {
    for sc in [
        golden("three_bs"),
        golden("scenario_one"),
        golden("scenario_two"),
    ] {
        let eng = engine(&sc);
        let out = sequential_allocate(&eng).unwrap();
        assert!(out.allocation.leased.iter().all(|&l| l));
        assert!(out.allocation.slice_violations(1e-9).is_empty());
        for step in &out.steps {
            for b in 0..sc.num_bs() {
                let expect = (step.avail_before[b] - step.granted[b]).max(0.0);
                assert!((step.avail_after[b] - expect).abs() <= 1e-12);
                assert!(step.granted[b] <= step.avail_before[b] + 1e-12);
            }
        }
        let order = sc.priority_order();
        assert_eq!(
            out.satisfied,
            order[..out.satisfied.len()].to_vec(),
            "{}",
            sc.name
        );
        let mut seen_short = false;
        for &s in &order {
            match out.statuses[s] {
                SpStatus::Satisfied => {
                    assert!(!seen_short);
                    assert!(out.coverage[s] >= sc.demands[s].min_coverage_prob - 1e-9);
                }
                SpStatus::PartiallyServed => {
                    assert!(!seen_short);
                    seen_short = true;
                }
                SpStatus::Unserved => {
                    seen_short = true;
                    assert!((0..sc.num_bs()).all(|b| out.allocation.slices[b][s] == 0.0));
                }
            }
        }
    }
}

#[test]
fn identical_demands_are_served_by_rank() {
    let mut sc = golden("three_bs");
    let mut twin = sc.demands[1].clone();
    twin.sp_id = "twin".into();
    twin.priority_rank = sc.demands.iter().map(|d| d.priority_rank).max().unwrap() + 1;
    sc.demands.push(twin);
    let eng = engine(&sc);
    let out = sequential_allocate(&eng).unwrap();
    let total = |s: usize| {
        (0..sc.num_bs())
            .map(|b| out.allocation.slices[b][s])
            .sum::<f64>()
    };
    if out.statuses[3] == SpStatus::Satisfied {
        assert!(total(1) <= total(3) + 1e-9);
        assert!((out.coverage[1] - out.coverage[3]).abs() <= 1e-9);
    } else {
        assert_eq!(out.statuses[1], SpStatus::Satisfied);
    }
}

#[test]
fn greedy_never_beats_the_exact_optimum() {
    for i in 0..30 {
        let sc = fuzz_instance(i);
        let eng = engine(&sc);
        let exact = solve_exact(&eng, None, &BnbOptions::default(), None).unwrap();
        let greedy = greedy_allocate(&eng).unwrap();
        if let (Some(e), Some(g)) = (exact.result.cost, greedy.cost) {
            assert!(e <= g + 1e-9, "instance {i}: exact {e} greedy {g}");
        }
        if greedy.cost.is_some() {
            assert!(
                exact.result.cost.is_some(),
                "instance {i}: greedy feasible but exact not"
            );
        }
        if let Some(a) = greedy.allocation {
            for s in 0..sc.num_sp() {
                assert!(
                    eng.network_coverage(&a, s).unwrap() >= sc.demands[s].min_coverage_prob - 1e-6
                );
            }
        }
    }
}

#[test]
fn greedy_takes_a_single_sufficient_station() {
    let sc = build(
        "one_enough",
        1.0,
        vec![
            station(0, Point::new(0.5, 0.5), 35.0, 0.45, 10.0),
            station(1, Point::new(0.2, 0.2), 35.0, 0.3, 50.0),
            station(2, Point::new(0.8, 0.8), 35.0, 0.3, 50.0),
        ],
        vec![demand(0, 200.0, 0.2, 1.0)],
    );
    let eng = engine(&sc);
    let g = greedy_allocate(&eng).unwrap();
    assert_eq!(g.rounds.len(), 1);
    assert_eq!(g.rounds[0].added, 0);
    assert_eq!(g.cost, Some(10.0));
    let e = solve_exact(&eng, None, &BnbOptions::default(), None).unwrap();
    assert_eq!(e.result.cost, Some(10.0));
}

#[test]
fn greedy_reports_unreachable_targets() {
    let mut sc = golden("three_bs");
    sc.demands[0].min_coverage_prob = 1.0;
    let g = greedy_allocate(&engine(&sc)).unwrap();
    assert!(g.allocation.is_none() && g.cost.is_none());
    assert_eq!(g.rounds.len(), sc.num_bs());
}

#[test]
fn equal_split_is_valid_everywhere() {
    for i in 0..20 {
        let sc = fuzz_instance(i);
        let a = equal_split(&sc);
        assert!(a.violations(1e-12).is_empty());
        let share = 1.0 / sc.num_sp() as f64;
        assert!(a.slices.iter().flatten().all(|&d| d == share));
        assert_eq!(
            a.cost(&sc),
            sc.base_stations.iter().map(|b| b.lease_cost).sum::<f64>()
        );
    }
}
