use proptest::prelude::*;
use ratecov::allocators::equal_split;
use ratecov::coefficients::mobius_transform;
use ratecov::coverage::{palm_load_window, sinr_threshold};
use ratecov::geometry::{signed_area, voronoi_tessellation};
use ratecov::montecarlo::wilson_interval;
use ratecov::scenario::Region;
use ratecov::{ActiveSet, Allocation, CoverageEngine, Point, QuadratureConfig, Scenario};
use ratecov_validation::{build, demand, station};

fn sites(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..max)
}

fn separated(raw: &[(f64, f64)], w: f64, h: f64, gap: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for &(x, y) in raw {
        let p = Point::new(x * w, y * h);
        if out.iter().all(|q| q.dist(p) > gap) {
            out.push(p);
        }
    }
    out
}

fn small_scenario(raw: &[(f64, f64)], dbm: f64, kbps: f64, beta: f64) -> Scenario {
    let pts = separated(raw, 1.0, 1.0, 0.05);
    let stations = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            station(
                i,
                p,
                dbm + i as f64,
                0.2 + 0.05 * i as f64,
                10.0 * (i + 1) as f64,
            )
        })
        .collect();
    build(
        "prop",
        1.0,
        stations,
        vec![demand(0, kbps, beta, 1.5), demand(1, 2.0 * kbps, beta, 0.5)],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_text_round_trips(raw in sites(7), dbm in 10.0..45.0f64, kbps in 1.0..5000.0f64, beta in 0.0..=1.0f64) {
        let sc = small_scenario(&raw, dbm, kbps, beta);
        let back = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        prop_assert_eq!(&back, &sc);
        prop_assert_eq!(back.content_hash(), sc.content_hash());
    }

    #[test]
    fn voronoi_cells_partition_the_region(raw in sites(40), w in 0.3..6.0f64, h in 0.3..6.0f64) {
        let region = Region::new(w, h, Point::new(-1.0, 2.0));
        let pts: Vec<Point> = separated(&raw, w, h, 1e-6 * w.max(h))
            .into_iter()
            .map(|p| Point::new(p.x - 1.0, p.y + 2.0))
            .collect();
        let cells = voronoi_tessellation(&pts, &region).unwrap();
        let total: f64 = cells.iter().map(|c| c.area).sum();
        prop_assert!((total - region.area()).abs() <= 1e-9 * region.area());
        for (i, c) in cells.iter().enumerate() {
            prop_assert_eq!(c.site_index, i);
            prop_assert!((signed_area(&c.polygon) - c.area).abs() <= 1e-12 * region.area());
            for v in &c.polygon {
                let own = v.dist(c.site);
                prop_assert!(pts.iter().all(|p| v.dist(*p) >= own - 1e-9));
            }
        }
    }

    #[test]
    fn wilson_interval_is_ordered(n in 1u64..10_000_000, frac in 0.0..=1.0f64) {
        let hits = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(hits, n);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        let (lo4, hi4) = wilson_interval(4 * hits, 4 * n);
        prop_assert!(hi4 - lo4 <= hi - lo + 1e-15);
    }

    #[test]
    fn thresholds_rise_with_rate_and_load(rate in 1.0..1e7f64, load in 1.0..200.0f64, bw in 1e5..1e8f64) {
        let t = sinr_threshold(rate, load, bw);
        prop_assert!(t > 0.0);
        prop_assert!(sinr_threshold(rate * 1.5, load, bw) >= t);
        prop_assert!(sinr_threshold(rate, load + 1.0, bw) >= t);
    }

    #[test]
    fn load_window_holds_the_mass(mean in 0.0..300.0f64) {
        let w = palm_load_window(mean, 1e-6);
        let mass: f64 = w.iter().map(|&(_, p)| p).sum();
        prop_assert!(mass >= 1.0 - 1e-6 && mass <= 1.0 + 1e-12);
        prop_assert!(w.iter().all(|&(n, _)| n >= 1));
    }

    #[test]
    fn mobius_then_subset_sums_is_identity(values in prop::collection::vec(-1.0..1.0f64, 16)) {
        let mut coef = values.clone();
        mobius_transform(&mut coef);
        for mask in 0..16usize {
            let mut sum = 0.0;
            let mut sub = mask;
            loop {
                sum += coef[sub];
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
            prop_assert!((sum - values[mask]).abs() <= 1e-12);
        }
    }

    #[test]
    fn allocation_invariants(nb in 1usize..8, ns in 1usize..4, raw in prop::collection::vec(-0.5..1.5f64, 32)) {
        let mut a = Allocation::empty(nb, ns);
        for b in 0..nb {
            a.leased[b] = raw[b] > 0.0;
            for s in 0..ns {
                a.slices[b][s] = raw[(b * ns + s) % raw.len()];
            }
        }
        let bad = a.slices.iter().flatten().any(|d| !(0.0..=1.0).contains(d))
            || (0..nb).any(|b| !a.leased[b] && a.slices[b].iter().any(|&d| d > 0.0))
            || a.slices.iter().any(|row| row.iter().sum::<f64>() > 1.0);
        prop_assert_eq!(!a.slice_violations(0.0).is_empty(), bad);
        let mut c = a.clone();
        c.cleanup();
        let mut twice = c.clone();
        twice.cleanup();
        prop_assert_eq!(&twice, &c);
        prop_assert_eq!(c.leased_mask() & !a.leased_mask(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn more_interferers_never_help(raw in sites(6), dbm in 20.0..40.0f64, kbps in 50.0..2000.0f64, pick in any::<u64>()) {
        let sc = small_scenario(&raw, dbm, kbps, 0.1);
        let nb = sc.num_bs();
        let eng = CoverageEngine::new(&sc, QuadratureConfig::default()).unwrap();
        let b = (pick % nb as u64) as usize;
        let others = ActiveSet::all_except(nb, b);
        let small = ActiveSet((pick >> 8) & others.0);
        for s in 0..sc.num_sp() {
            let base = eng.per_bs_coverage(b, s, small).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            for j in others.iter().filter(|&j| !small.contains(j)) {
                prop_assert!(eng.per_bs_coverage(b, s, small.with(j)).unwrap() <= base + 1e-9);
            }
        }
        let alloc = equal_split(&sc);
        for s in 0..sc.num_sp() {
            let v = eng.network_coverage(&alloc, s).unwrap();
            let weight: f64 = (0..nb).map(|b| sc.disc_weight(b)).sum::<f64>() / sc.num_sp() as f64;
            prop_assert!(v >= 0.0 && v <= weight + 1e-12);
        }
    }
}
