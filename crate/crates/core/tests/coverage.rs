use std::f64::consts::PI;

use ratecov::allocators::equal_split;
use ratecov::coverage::InterferencePdf;
use ratecov::montecarlo::{
    simulate_coverage, simulate_sinr_samples, AngleModel, AssociationMode, TrialConfig,
};
use ratecov::{ActiveSet, CoverageEngine, Point, QuadratureConfig};
use ratecov_validation::{
    build, demand, golden, laplace_coverage, oracle_threshold, simpson, station,
};

fn engine(name: &str) -> CoverageEngine {
    CoverageEngine::new(&golden(name), QuadratureConfig::default()).unwrap()
}

#[test]
fn thresholds_match_first_principles() {
    for name in ["single_bs", "three_bs", "scenario_one"] {
        let eng = engine(name);
        let sc = eng.scenario();
        for b in 0..sc.num_bs() {
            for s in 0..sc.num_sp() {
                let want = oracle_threshold(sc, b, s);
                assert!(
                    (eng.threshold(b, s) - want).abs() <= 1e-12 * want.max(1.0),
                    "{name} b{b} s{s}"
                );
            }
        }
    }
}

#[test]
fn per_bs_coverage_matches_laplace_oracle_on_every_subset() {
    let eng = engine("three_bs");
    let sc = eng.scenario().clone();
    for b in 0..3 {
        for mask in 0..8u64 {
            let active = ActiveSet(mask).without(b);
            for s in 0..sc.num_sp() {
                let got = eng.per_bs_coverage(b, s, active).unwrap();
                let want = laplace_coverage(&sc, b, eng.threshold(b, s), active, 1e-9);
                assert!(
                    (got - want).abs() <= 1e-6,
                    "b{b} mask {mask:03b} s{s}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn coverage_through_rate_density_agrees() {
    let eng = engine("three_bs");
    let all = ActiveSet::from_indices(0..3);
    for b in 0..3 {
        for s in 0..eng.scenario().num_sp() {
            let direct = eng.per_bs_coverage(b, s, all).unwrap();
            let numeric = eng.per_bs_coverage_numeric(b, s, all).unwrap();
            assert!(
                (direct - numeric).abs() <= 1e-4,
                "b{b} s{s}: {direct} vs {numeric}"
            );
        }
    }
}

#[test]
fn sinr_samples_follow_the_analytic_law() {
    let eng = engine("three_bs");
    let sc = eng.scenario().clone();
    let n = 4000;
    for (b, active) in [
        (0, ActiveSet::from_indices([0, 1, 2])),
        (1, ActiveSet::from_indices([1, 2])),
        (2, ActiveSet::from_indices([2])),
    ] {
        let mut x = simulate_sinr_samples(&sc, b, active, n, 17 + b as u64);
        x.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, &t) in x.iter().enumerate() {
            let cdf = 1.0 - eng.conditional_coverage(b, t, active).unwrap();
            d = d
                .max((cdf - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        let critical = 1.63 / (n as f64).sqrt();
        assert!(d < critical, "b{b}: KS distance {d} >= {critical}");
    }
}

#[test]
fn random_load_average_matches_independent_bearing_simulation() {
    let sc = golden("three_bs");
    let eng = CoverageEngine::new(&sc, QuadratureConfig::default()).unwrap();
    let alloc = equal_split(&sc);
    for s in 0..sc.num_sp() {
        let analytic = eng.network_coverage_random_load(&alloc, s).unwrap();
        let mut tc = TrialConfig::new(400_000, 40 + s as u64, AssociationMode::Circular);
        tc.angle_model = AngleModel::Independent;
        let mc = simulate_coverage(&sc, &alloc, s, &tc).unwrap();
        let half = 0.5 * (mc.ci_high - mc.ci_low);
        assert!(
            (analytic - mc.mean).abs() <= 2.0 * half + 1e-3,
            "s{s}: {analytic} vs {} ± {half}",
            mc.mean
        );
    }
}

#[test]
fn coverage_falls_with_rate_and_intensity() {
    let stations = vec![
        station(0, Point::new(0.3, 0.3), 30.0, 0.35, 10.0),
        station(1, Point::new(0.7, 0.6), 30.0, 0.35, 10.0),
    ];
    let demands = vec![
        demand(0, 200.0, 0.1, 1.0),
        demand(1, 800.0, 0.1, 1.0),
        demand(2, 800.0, 0.1, 5.0),
    ];
    let sc = build("monotone", 1.0, stations, demands);
    let eng = CoverageEngine::new(&sc, QuadratureConfig::default()).unwrap();
    let both = ActiveSet::from_indices([0, 1]);
    let c: Vec<f64> = (0..3)
        .map(|s| eng.per_bs_coverage(0, s, both).unwrap())
        .collect();
    assert!(c[0] > c[1] && c[1] > c[2], "{c:?}");
    assert!(
        eng.per_bs_coverage(0, 1, ActiveSet::from_indices([0]))
            .unwrap()
            > c[1]
    );
}

#[test]
fn voronoi_terms_are_bounded_by_cell_share() {
    let eng = engine("three_bs");
    let sc = eng.scenario();
    let cells = eng.cells().unwrap();
    for s in 0..sc.num_sp() {
        let terms = eng.voronoi_terms(s).unwrap();
        for (b, t) in terms.iter().enumerate() {
            let share = cells[b].area / sc.region.area();
            assert!(*t >= 0.0 && *t <= share + 1e-9, "b{b} s{s}: {t} vs {share}");
        }
    }
}

#[test]
fn single_interferer_density_is_an_exponential_mixture() {
    let eng = engine("three_bs");
    let sc = eng.scenario().clone();
    let (b, j, u) = (0, 1, 0.15);
    let d = sc.base_stations[b]
        .location
        .dist(sc.base_stations[j].location);
    let p = sc.base_stations[j].tx_power;
    let alpha = sc.propagation.pathloss_exponent;
    let mixture = |c: f64| {
        let at = |th: f64| {
            let r = ((u * u + d * d - 2.0 * u * d * th.cos()).sqrt() * 1e3).max(1.0);
            let m = p * r.powf(-alpha);
            (-c / m).exp() / m
        };
        simpson(&at, 0.0, PI, 1e-3) / PI
    };
    let scale = mixture(0.0);
    for c in [0.0, 1e-13, 2e-12, 1.3e-11, 4e-11, 1e-10, 3e-10] {
        let want = mixture(c);
        let InterferencePdf::Density(got) = eng
            .interference_pdf(c, u, b, ActiveSet::from_indices([b, j]))
            .unwrap()
        else {
            panic!("one interferer has a density");
        };
        assert!(
            (got - want).abs() <= 1e-6 * scale,
            "c {c:e}: {got:e} vs {want:e}"
        );
    }
    assert_eq!(
        eng.interference_pdf(1e-12, u, b, ActiveSet::from_indices([b]))
            .unwrap(),
        InterferencePdf::Degenerate
    );
}
