//! Monte Carlo simulation of the downlink system model, used as an
//! independent oracle for every analytic quantity.
//!
//! Trials are grouped into fixed chunks; chunk `c` draws from ChaCha8 stream
//! `c` of the seed, so the estimate does not depend on how chunks are spread
//! over worker threads.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{ActiveSet, METERS_PER_KM, MIN_INTERFERER_DISTANCE_M};
use crate::error::Error;
use crate::geometry::{self, Point, VoronoiCell};
use crate::scenario::{Allocation, Scenario};

const CHUNK: u64 = 4096;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// UE uniform over the region, served by the nearest BS.
    Voronoi,
    /// UE uniform in the coverage disc of a BS drawn with weight `πq_b²/A`.
    Circular,
}

/// How a slice `δ_bs` enters the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceSemantics {
    /// The SP holds the BS with probability `δ_bs`; otherwise the rate is zero.
    AccessGate,
    /// The rate is always scaled by `δ_bs`.
    RateScaling,
}

/// Placement of interferers relative to the UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleModel {
    /// Interferers at their true positions.
    Geometric,
    /// Each interferer at its true distance from the serving BS but at an
    /// independent uniform bearing from it.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: u64,
    pub seed: u64,
    pub association: AssociationMode,
    pub slice_semantics: SliceSemantics,
    pub angle_model: AngleModel,
}

impl TrialConfig {
    pub fn new(trials: u64, seed: u64, association: AssociationMode) -> Self {
        Self {
            trials,
            seed,
            association,
            slice_semantics: SliceSemantics::AccessGate,
            angle_model: AngleModel::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub hits: u64,
}

/// 95% Wilson score interval for `hits` successes in `n` trials.
pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    (
        (centre - half).max(0.0).min(p),
        (centre + half).min(1.0).max(p),
    )
}

/// One simulated UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub bs: usize,
    pub ue_x_km: f64,
    pub ue_y_km: f64,
    pub distance_km: f64,
    pub load: u64,
    pub access: bool,
    pub sinr: f64,
    pub threshold: f64,
    pub covered: bool,
}

struct Simulator<'a> {
    scenario: &'a Scenario,
    alloc: &'a Allocation,
    sp: usize,
    tc: TrialConfig,
    cells: Option<Vec<VoronoiCell>>,
    /// Circular mode: cumulative stratum weights over `strata`.
    strata: Vec<usize>,
    cumulative: Vec<f64>,
    total_weight: f64,
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    Exp1.sample(rng)
}

fn uniform_in_disc(rng: &mut ChaCha8Rng, centre: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let t = 2.0 * PI * rng.random::<f64>();
    Point::new(centre.x + r * t.cos(), centre.y + r * t.sin())
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean)
            .expect("positive finite mean")
            .sample(rng) as u64
    } else {
        0
    }
}

/// Interference power at a UE `u_km` from serving BS `b` (watts).
fn interference(
    sc: &Scenario,
    rng: &mut ChaCha8Rng,
    b: usize,
    ue: Point,
    u_km: f64,
    interferers: ActiveSet,
    angles: AngleModel,
) -> f64 {
    let alpha = sc.propagation.pathloss_exponent;
    let mut total = 0.0;
    for j in interferers.iter().filter(|&j| j != b) {
        let bs = &sc.base_stations[j];
        let r_km = match angles {
            AngleModel::Geometric => ue.dist(bs.location),
            AngleModel::Independent => {
                let d = sc.base_stations[b].location.dist(bs.location);
                geometry::interferer_distance(u_km, d, 2.0 * PI * rng.random::<f64>())
            }
        };
        let r = (r_km * METERS_PER_KM).max(MIN_INTERFERER_DISTANCE_M);
        total += exp1(rng) * bs.tx_power * r.powf(-alpha);
    }
    total
}

impl<'a> Simulator<'a> {
    fn new(
        scenario: &'a Scenario,
        alloc: &'a Allocation,
        sp: usize,
        tc: TrialConfig,
    ) -> Result<Self, Error> {
        alloc
            .check_dimensions(scenario)
            .map_err(Error::AllocationMismatch)?;
        if sp >= scenario.num_sp() {
            return Err(Error::InvalidArgument(format!("no SP with index {sp}")));
        }
        let cells = match tc.association {
            AssociationMode::Voronoi => {
                let sites: Vec<Point> = scenario.base_stations.iter().map(|b| b.location).collect();
                Some(geometry::voronoi_tessellation(&sites, &scenario.region)?)
            }
            AssociationMode::Circular => None,
        };
        let strata: Vec<usize> = (0..scenario.num_bs())
            .filter(|&b| alloc.slice(b, sp) > 0.0)
            .collect();
        let mut cumulative = Vec::with_capacity(strata.len());
        let mut acc = 0.0;
        for &b in &strata {
            acc += scenario.disc_weight(b);
            cumulative.push(acc);
        }
        Ok(Self {
            scenario,
            alloc,
            sp,
            tc,
            cells,
            strata,
            cumulative,
            total_weight: acc,
        })
    }

    fn nearest(&self, p: Point) -> usize {
        let bs = &self.scenario.base_stations;
        (0..bs.len())
            .min_by(|&a, &b| p.dist(bs[a].location).total_cmp(&p.dist(bs[b].location)))
            .expect("at least one BS")
    }

    fn trial(&self, rng: &mut ChaCha8Rng, trial: u64) -> TrialRecord {
        let sc = self.scenario;
        let demand = &sc.demands[self.sp];
        let (b, ue, cell_area) = match self.tc.association {
            AssociationMode::Voronoi => {
                let r = &sc.region;
                let ue = Point::new(
                    r.origin.x + rng.random::<f64>() * r.width,
                    r.origin.y + rng.random::<f64>() * r.height,
                );
                let b = self.nearest(ue);
                let area = self.cells.as_ref().expect("cells built")[b].area;
                (b, ue, area)
            }
            AssociationMode::Circular => {
                let x = rng.random::<f64>() * self.total_weight;
                let k = self
                    .cumulative
                    .partition_point(|&c| c <= x)
                    .min(self.strata.len() - 1);
                let b = self.strata[k];
                let bs = &sc.base_stations[b];
                let q = bs.coverage_radius_km;
                (b, uniform_in_disc(rng, bs.location, q), PI * q * q)
            }
        };
        let bs = &sc.base_stations[b];
        let delta = self.alloc.slice(b, self.sp);
        let access = match self.tc.slice_semantics {
            SliceSemantics::AccessGate => rng.random::<f64>() < delta,
            SliceSemantics::RateScaling => delta > 0.0,
        };
        let load = 1 + poisson(rng, demand.ue_intensity * cell_area);
        let u_km = ue.dist(bs.location);
        let alpha = sc.propagation.pathloss_exponent;
        let signal = exp1(rng) * bs.tx_power * (u_km * METERS_PER_KM).powf(-alpha);
        let leased = ActiveSet(self.alloc.leased_mask());
        let i = interference(sc, rng, b, ue, u_km, leased, self.tc.angle_model);
        let sinr = signal / (sc.noise_power(b) + i);
        let share = match self.tc.slice_semantics {
            SliceSemantics::AccessGate => 1.0,
            SliceSemantics::RateScaling => delta,
        };
        let threshold = if share > 0.0 {
            (load as f64 * demand.min_rate_bps / (share * bs.bandwidth_hz) * LN_2).exp_m1()
        } else {
            f64::INFINITY
        };
        TrialRecord {
            trial,
            bs: b,
            ue_x_km: ue.x,
            ue_y_km: ue.y,
            distance_km: u_km,
            load,
            access,
            sinr,
            threshold,
            covered: access && sinr >= threshold,
        }
    }

    fn chunk_rng(&self, chunk: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.tc.seed);
        rng.set_stream(chunk);
        rng
    }

    fn run_chunk<F: FnMut(TrialRecord)>(&self, chunk: u64, mut f: F) {
        let mut rng = self.chunk_rng(chunk);
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(self.tc.trials);
        for t in start..end {
            f(self.trial(&mut rng, t));
        }
    }

    fn is_empty(&self) -> bool {
        match self.tc.association {
            AssociationMode::Circular => self.strata.is_empty() || self.total_weight <= 0.0,
            AssociationMode::Voronoi => false,
        }
    }

    fn scale(&self) -> f64 {
        match self.tc.association {
            AssociationMode::Circular => self.total_weight,
            AssociationMode::Voronoi => 1.0,
        }
    }
}

/// Estimates the coverage of SP `sp` under `alloc`.
///
/// In circular mode the estimate is `(Σ_b πq_b²/A)·(hits/trials)` with the
/// serving disc drawn in proportion to its area, mirroring the disc model;
/// in Voronoi mode it is the plain hit fraction. Mean and interval are
/// clamped to [0, 1].
pub fn simulate_coverage(
    scenario: &Scenario,
    alloc: &Allocation,
    sp: usize,
    tc: &TrialConfig,
) -> Result<CoverageEstimate, Error> {
    let sim = Simulator::new(scenario, alloc, sp, *tc)?;
    if tc.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if sim.is_empty() {
        return Ok(CoverageEstimate {
            mean: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            trials: tc.trials,
            hits: 0,
        });
    }
    let chunks = tc.trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = 0u64;
            sim.run_chunk(c, |r| h += r.covered as u64);
            h
        })
        .sum();
    let scale = sim.scale();
    let (lo, hi) = wilson_interval(hits, tc.trials);
    let clamp = |v: f64| (v * scale).clamp(0.0, 1.0);
    Ok(CoverageEstimate {
        mean: clamp(hits as f64 / tc.trials as f64),
        ci_low: clamp(lo),
        ci_high: clamp(hi),
        trials: tc.trials,
        hits,
    })
}

/// Per-trial records of the first `limit` trials of [`simulate_coverage`].
pub fn sample_trials(
    scenario: &Scenario,
    alloc: &Allocation,
    sp: usize,
    tc: &TrialConfig,
    limit: u64,
) -> Result<Vec<TrialRecord>, Error> {
    let sim = Simulator::new(scenario, alloc, sp, *tc)?;
    if sim.is_empty() {
        return Ok(Vec::new());
    }
    let n = limit.min(tc.trials);
    let mut out = Vec::with_capacity(n as usize);
    for c in 0..n.div_ceil(CHUNK) {
        sim.run_chunk(c, |r| {
            if r.trial < n {
                out.push(r)
            }
        });
    }
    Ok(out)
}

/// Writes trial records as CSV with a header row.
pub fn write_samples_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// I.i.d. SINR draws for a UE uniform in the disc of BS `b` with the BSs in
/// `active` interfering, each at an independent uniform bearing.
pub fn simulate_sinr_samples(
    scenario: &Scenario,
    b: usize,
    active: ActiveSet,
    n: u64,
    seed: u64,
) -> Vec<f64> {
    let bs = &scenario.base_stations[b];
    let alpha = scenario.propagation.pathloss_exponent;
    let noise = scenario.noise_power(b);
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let end = ((c + 1) * CHUNK).min(n);
            (c * CHUNK..end)
                .map(|_| {
                    let ue = uniform_in_disc(&mut rng, bs.location, bs.coverage_radius_km);
                    let u = ue.dist(bs.location);
                    let s = exp1(&mut rng) * bs.tx_power * (u * METERS_PER_KM).powf(-alpha);
                    let i = interference(
                        scenario,
                        &mut rng,
                        b,
                        ue,
                        u,
                        active,
                        AngleModel::Independent,
                    );
                    s / (noise + i)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::MINIMAL;

    #[test]
    fn wilson_contains_estimate() {
        for (h, n) in [(0, 10), (10, 10), (3, 10), (500, 1000)] {
            let (lo, hi) = wilson_interval(h, n);
            let p = h as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn zero_slices_give_exact_zero() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        let alloc = Allocation::empty(1, 1);
        for mode in [AssociationMode::Circular, AssociationMode::Voronoi] {
            let e = simulate_coverage(&sc, &alloc, 0, &TrialConfig::new(1000, 1, mode)).unwrap();
            assert_eq!(e.mean, 0.0);
            assert_eq!(e.hits, 0);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        let a = simulate_sinr_samples(&sc, 0, ActiveSet::EMPTY, 5000, 3);
        let b = simulate_sinr_samples(&sc, 0, ActiveSet::EMPTY, 5000, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
    }
}
