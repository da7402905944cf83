use ratecov::scenario::uniform_sites;
use ratecov::Scenario;
use ratecov_validation::{golden, scenario_path, GOLDEN};

#[test]
fn every_golden_file_loads_and_saves_losslessly() {
    for name in GOLDEN {
        let sc = golden(name);
        assert_eq!(sc.name, name);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("copy.toml");
        sc.save(&path).unwrap();
        assert_eq!(Scenario::load(&path).unwrap(), sc);
        assert!(scenario_path(name).exists());
    }
}

#[test]
fn ten_station_layouts_come_from_their_seeds() {
    for (name, seed) in [("scenario_one", 7), ("scenario_two", 4)] {
        let sc = golden(name);
        let drawn = uniform_sites(10, &sc.region, seed);
        for (bs, p) in sc.base_stations.iter().zip(&drawn) {
            assert!((bs.location.x - p.x).abs() <= 5e-5, "{name} {}", bs.id);
            assert!((bs.location.y - p.y).abs() <= 5e-5, "{name} {}", bs.id);
        }
    }
}

#[test]
fn ten_station_scenarios_differ_only_in_layout() {
    let (one, two) = (golden("scenario_one"), golden("scenario_two"));
    assert_eq!(one.demands, two.demands);
    assert_eq!(one.region, two.region);
    assert_eq!(one.propagation, two.propagation);
    for (a, b) in one.base_stations.iter().zip(&two.base_stations) {
        assert_eq!(
            (&a.id, &a.rp_id, a.tx_power_dbm, a.bandwidth_hz),
            (&b.id, &b.rp_id, b.tx_power_dbm, b.bandwidth_hz)
        );
        assert_eq!(
            (a.coverage_radius_km, a.lease_cost),
            (b.coverage_radius_km, b.lease_cost)
        );
        assert_ne!(a.location, b.location);
    }
    assert_ne!(one.content_hash(), two.content_hash());
}
