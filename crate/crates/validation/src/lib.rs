//! Test support for ratecov: the golden scenarios, a seeded corpus of small
//! optimisation instances, and numerical oracles that share no code with the
//! library's coverage engine.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratecov::scenario::{dbm_to_watts, BaseStation, PropagationModel, Region, ServiceDemand};
use ratecov::{ActiveSet, Point, Scenario};

pub const GOLDEN: [&str; 4] = ["single_bs", "three_bs", "scenario_one", "scenario_two"];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn golden(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn station(id: usize, at: Point, dbm: f64, q: f64, cost: f64) -> BaseStation {
    BaseStation {
        id: format!("bs{id}"),
        rp_id: "rp".into(),
        location: at,
        tx_power_dbm: dbm,
        tx_power: dbm_to_watts(dbm),
        bandwidth_hz: 20e6,
        coverage_radius_km: q,
        lease_cost: cost,
    }
}

pub fn demand(id: usize, kbps: f64, beta: f64, intensity: f64) -> ServiceDemand {
    ServiceDemand {
        sp_id: format!("sp{id}"),
        min_rate_bps: kbps * 1e3,
        min_coverage_prob: beta,
        ue_intensity: intensity,
        priority_rank: id as u32 + 1,
    }
}

pub fn build(
    name: &str,
    side_km: f64,
    stations: Vec<BaseStation>,
    demands: Vec<ServiceDemand>,
) -> Scenario {
    let sc = Scenario {
        name: name.into(),
        region: Region::new(side_km, side_km, Point::new(0.0, 0.0)),
        propagation: PropagationModel::new(4.0, -174.0),
        base_stations: stations,
        demands,
    };
    sc.validate().expect("constructed scenario is valid");
    sc
}

/// Instance `index` of the seeded optimisation corpus: 1 to 6 BSs and 1 to 3
/// SPs on a 1x1 km area with integer lease costs.
pub fn fuzz_instance(index: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index);
    let nb = rng.random_range(1..=6usize);
    let ns = rng.random_range(1..=3usize);
    let mut sites: Vec<Point> = Vec::new();
    while sites.len() < nb {
        let p = Point::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        if sites.iter().all(|s| s.dist(p) > 0.05) {
            sites.push(p);
        }
    }
    let stations = sites
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let dbm = rng.random_range(20.0..40.0);
            let q = rng.random_range(0.2..0.5);
            let cost = (rng.random_range(1..=30u32) * 10) as f64;
            station(i, p, dbm, q, cost)
        })
        .collect();
    let demands = (0..ns)
        .map(|s| {
            let kbps = rng.random_range(100.0..1000.0);
            let beta = rng.random_range(0.05..0.5);
            let lambda = rng.random_range(0.5..3.0);
            demand(s, kbps, beta, lambda)
        })
        .collect();
    build(&format!("fuzz{index}"), 1.0, stations, demands)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Simpson over `[a, b]` split at the interior `breaks`.
pub fn simpson_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let n = (pts.len() - 1) as f64;
    pts.windows(2)
        .map(|w| simpson(f, w[0], w[1], tol / n))
        .sum()
}

/// Mean-load SINR threshold computed from first principles.
pub fn oracle_threshold(sc: &Scenario, b: usize, s: usize) -> f64 {
    let bs = &sc.base_stations[b];
    let d = &sc.demands[s];
    let load = (d.ue_intensity * PI * bs.coverage_radius_km.powi(2)).max(1.0);
    (load * d.min_rate_bps / bs.bandwidth_hz * std::f64::consts::LN_2).exp_m1()
}

/// `Pr{SINR > t}` for a UE uniform in the disc of BS `b` with Rayleigh
/// fading, evaluated through the exponential-fading Laplace transform of
/// each interferer and nested adaptive quadrature over distance and bearing.
pub fn laplace_coverage(sc: &Scenario, b: usize, t: f64, active: ActiveSet, tol: f64) -> f64 {
    let bs = &sc.base_stations[b];
    let alpha = sc.propagation.pathloss_exponent;
    let noise = sc.propagation.noise_psd * bs.bandwidth_hz;
    let q = bs.coverage_radius_km;
    let others: Vec<usize> = active.iter().filter(|&j| j != b).collect();
    let dists: Vec<f64> = others
        .iter()
        .map(|&j| bs.location.dist(sc.base_stations[j].location))
        .collect();
    let integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let s = t * (u * 1e3).powf(alpha) / bs.tx_power;
        let mut v = 2.0 * u / (q * q) * (-s * noise).exp();
        for (k, &j) in others.iter().enumerate() {
            let pj = sc.base_stations[j].tx_power;
            let d = dists[k];
            let per_theta = |th: f64| {
                let r = ((u * u + d * d - 2.0 * u * d * th.cos()).max(0.0).sqrt() * 1e3).max(1.0);
                1.0 / (1.0 + s * pj * r.powf(-alpha))
            };
            v *= simpson(&per_theta, 0.0, PI, 1e-12) / PI;
        }
        v
    };
    simpson_split(&integrand, 0.0, q, &dists, tol)
}
