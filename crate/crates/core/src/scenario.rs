//! Scenario model: region, base stations, propagation constants and service
//! demands, plus the versioned TOML file format and slice allocations.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ScenarioError;
use crate::geometry::Point;

pub const FORMAT_VERSION: u32 = 1;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub width: f64,
    pub height: f64,
    pub origin: Point,
}

impl Region {
    pub fn new(width: f64, height: f64, origin: Point) -> Self {
        Self {
            width,
            height,
            origin,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point) -> bool {
        let eps = 1e-12;
        p.x >= self.origin.x - eps
            && p.x <= self.origin.x + self.width + eps
            && p.y >= self.origin.y - eps
            && p.y <= self.origin.y + self.height + eps
    }

    /// Corners in counter-clockwise order starting at the origin.
    pub fn corners(&self) -> [Point; 4] {
        let o = self.origin;
        [
            o,
            Point::new(o.x + self.width, o.y),
            Point::new(o.x + self.width, o.y + self.height),
            Point::new(o.x, o.y + self.height),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: String,
    pub rp_id: String,
    pub location: Point,
    pub tx_power_dbm: f64,
    /// Transmit power in watts, derived from `tx_power_dbm`.
    pub tx_power: f64,
    pub bandwidth_hz: f64,
    pub coverage_radius_km: f64,
    pub lease_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    pub pathloss_exponent: f64,
    pub noise_psd_dbm_per_hz: f64,
    /// Noise power spectral density in W/Hz, derived from the dBm/Hz value.
    pub noise_psd: f64,
}

impl PropagationModel {
    pub fn new(pathloss_exponent: f64, noise_psd_dbm_per_hz: f64) -> Self {
        Self {
            pathloss_exponent,
            noise_psd_dbm_per_hz,
            noise_psd: dbm_to_watts(noise_psd_dbm_per_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDemand {
    pub sp_id: String,
    pub min_rate_bps: f64,
    pub min_coverage_prob: f64,
    pub ue_intensity: f64,
    pub priority_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub region: Region,
    pub propagation: PropagationModel,
    pub base_stations: Vec<BaseStation>,
    pub demands: Vec<ServiceDemand>,
}

// ---- file format -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format_version: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    region: RawRegion,
    propagation: RawPropagation,
    base_stations: Vec<RawBaseStation>,
    demands: Vec<RawDemand>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    width_km: f64,
    height_km: f64,
    #[serde(default)]
    origin_km: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPropagation {
    pathloss_exponent: f64,
    noise_psd_dbm_per_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBaseStation {
    id: String,
    rp_id: String,
    location_km: [f64; 2],
    tx_power_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth_mhz: Option<f64>,
    coverage_radius_km: f64,
    lease_cost: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    sp_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_rate_kbps: Option<f64>,
    min_coverage_prob: f64,
    ue_intensity_per_km2: f64,
    priority_rank: u32,
}

fn one_of(
    field: &str,
    primary: Option<f64>,
    alt: Option<f64>,
    alt_scale: f64,
    alt_name: &str,
) -> Result<f64, ScenarioError> {
    match (primary, alt) {
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(v * alt_scale),
        (Some(_), Some(_)) => Err(ScenarioError::invalid(
            field,
            format!("give either {field} or {alt_name}, not both"),
        )),
        (None, None) => Err(ScenarioError::invalid(
            field,
            format!("missing (expected {field} or {alt_name})"),
        )),
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if raw.format_version != FORMAT_VERSION {
            return Err(ScenarioError::UnsupportedVersion {
                found: raw.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let region = Region::new(
            raw.region.width_km,
            raw.region.height_km,
            Point::new(raw.region.origin_km[0], raw.region.origin_km[1]),
        );
        let propagation = PropagationModel::new(
            raw.propagation.pathloss_exponent,
            raw.propagation.noise_psd_dbm_per_hz,
        );
        let mut base_stations = Vec::with_capacity(raw.base_stations.len());
        for (i, b) in raw.base_stations.into_iter().enumerate() {
            let bandwidth_hz = one_of(
                &format!("base_stations[{i}].bandwidth_hz"),
                b.bandwidth_hz,
                b.bandwidth_mhz,
                1e6,
                "bandwidth_mhz",
            )?;
            base_stations.push(BaseStation {
                id: b.id,
                rp_id: b.rp_id,
                location: Point::new(b.location_km[0], b.location_km[1]),
                tx_power_dbm: b.tx_power_dbm,
                tx_power: dbm_to_watts(b.tx_power_dbm),
                bandwidth_hz,
                coverage_radius_km: b.coverage_radius_km,
                lease_cost: b.lease_cost,
            });
        }
        let mut demands = Vec::with_capacity(raw.demands.len());
        for (i, d) in raw.demands.into_iter().enumerate() {
            let min_rate_bps = one_of(
                &format!("demands[{i}].min_rate_bps"),
                d.min_rate_bps,
                d.min_rate_kbps,
                1e3,
                "min_rate_kbps",
            )?;
            demands.push(ServiceDemand {
                sp_id: d.sp_id,
                min_rate_bps,
                min_coverage_prob: d.min_coverage_prob,
                ue_intensity: d.ue_intensity_per_km2,
                priority_rank: d.priority_rank,
            });
        }
        let scenario = Scenario {
            name: raw.name,
            region,
            propagation,
            base_stations,
            demands,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Canonical TOML text (bandwidth in Hz, rates in bps).
    pub fn to_toml_string(&self) -> String {
        let raw = RawScenario {
            format_version: FORMAT_VERSION,
            name: self.name.clone(),
            region: RawRegion {
                width_km: self.region.width,
                height_km: self.region.height,
                origin_km: [self.region.origin.x, self.region.origin.y],
            },
            propagation: RawPropagation {
                pathloss_exponent: self.propagation.pathloss_exponent,
                noise_psd_dbm_per_hz: self.propagation.noise_psd_dbm_per_hz,
            },
            base_stations: self
                .base_stations
                .iter()
                .map(|b| RawBaseStation {
                    id: b.id.clone(),
                    rp_id: b.rp_id.clone(),
                    location_km: [b.location.x, b.location.y],
                    tx_power_dbm: b.tx_power_dbm,
                    bandwidth_hz: Some(b.bandwidth_hz),
                    bandwidth_mhz: None,
                    coverage_radius_km: b.coverage_radius_km,
                    lease_cost: b.lease_cost,
                })
                .collect(),
            demands: self
                .demands
                .iter()
                .map(|d| RawDemand {
                    sp_id: d.sp_id.clone(),
                    min_rate_bps: Some(d.min_rate_bps),
                    min_rate_kbps: None,
                    min_coverage_prob: d.min_coverage_prob,
                    ue_intensity_per_km2: d.ue_intensity,
                    priority_rank: d.priority_rank,
                })
                .collect(),
        };
        toml::to_string(&raw).expect("scenario serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn num_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn num_sp(&self) -> usize {
        self.demands.len()
    }

    /// Noise power σ²·W_b seen by a receiver served from BS `b`.
    pub fn noise_power(&self, b: usize) -> f64 {
        self.propagation.noise_psd * self.base_stations[b].bandwidth_hz
    }

    /// Fraction of the region covered by the disc of BS `b`: πq_b²/A.
    pub fn disc_weight(&self, b: usize) -> f64 {
        let q = self.base_stations[b].coverage_radius_km;
        std::f64::consts::PI * q * q / self.region.area()
    }

    /// Copy of the scenario with every SP's UE intensity replaced.
    pub fn with_intensity(&self, intensity: f64) -> Scenario {
        let mut s = self.clone();
        for d in &mut s.demands {
            d.ue_intensity = intensity;
        }
        s
    }

    /// SP indices ordered by priority rank (lowest rank first).
    pub fn priority_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.demands.len()).collect();
        idx.sort_by_key(|&i| self.demands[i].priority_rank);
        idx
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let r = &self.region;
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(r.width) {
            return Err(ScenarioError::invalid("region.width_km", "must be > 0"));
        }
        if !finite_pos(r.height) {
            return Err(ScenarioError::invalid("region.height_km", "must be > 0"));
        }
        if !(r.origin.x.is_finite() && r.origin.y.is_finite()) {
            return Err(ScenarioError::invalid("region.origin_km", "must be finite"));
        }
        let p = &self.propagation;
        if !(p.pathloss_exponent.is_finite() && p.pathloss_exponent > 2.0) {
            return Err(ScenarioError::invalid(
                "propagation.pathloss_exponent (α)",
                "must be > 2",
            ));
        }
        if !(p.noise_psd_dbm_per_hz.is_finite() && p.noise_psd > 0.0) {
            return Err(ScenarioError::invalid(
                "propagation.noise_psd_dbm_per_hz (σ²)",
                "must be finite",
            ));
        }
        if self.base_stations.is_empty() {
            return Err(ScenarioError::invalid(
                "base_stations",
                "at least one base station is required",
            ));
        }
        if self.demands.is_empty() {
            return Err(ScenarioError::invalid(
                "demands",
                "at least one demand is required",
            ));
        }
        let mut ids = HashSet::new();
        for (i, b) in self.base_stations.iter().enumerate() {
            let f = |name: &str| format!("base_stations[{i}].{name}");
            if !ids.insert(b.id.as_str()) {
                return Err(ScenarioError::invalid(
                    f("id"),
                    format!("duplicate id {:?}", b.id),
                ));
            }
            if !(b.location.x.is_finite() && b.location.y.is_finite()) || !r.contains(b.location) {
                return Err(ScenarioError::invalid(
                    f("location_km (l_b)"),
                    "must lie inside the region",
                ));
            }
            if !(b.tx_power_dbm.is_finite() && b.tx_power > 0.0 && b.tx_power.is_finite()) {
                return Err(ScenarioError::invalid(f("tx_power_dbm"), "must be finite"));
            }
            if !finite_pos(b.bandwidth_hz) {
                return Err(ScenarioError::invalid(
                    f("bandwidth_hz (W_b)"),
                    "must be > 0",
                ));
            }
            if !finite_pos(b.coverage_radius_km) {
                return Err(ScenarioError::invalid(
                    f("coverage_radius_km (q_b)"),
                    "must be > 0",
                ));
            }
            if !(b.lease_cost.is_finite() && b.lease_cost >= 0.0) {
                return Err(ScenarioError::invalid(
                    f("lease_cost (c_b)"),
                    "must be >= 0",
                ));
            }
        }
        let mut sp_ids = HashSet::new();
        let mut ranks = HashSet::new();
        for (i, d) in self.demands.iter().enumerate() {
            let f = |name: &str| format!("demands[{i}].{name}");
            if !sp_ids.insert(d.sp_id.as_str()) {
                return Err(ScenarioError::invalid(
                    f("sp_id"),
                    format!("duplicate id {:?}", d.sp_id),
                ));
            }
            if !finite_pos(d.min_rate_bps) {
                return Err(ScenarioError::invalid(
                    f("min_rate_bps (κ_s)"),
                    "must be > 0",
                ));
            }
            if !(d.min_coverage_prob > 0.0 && d.min_coverage_prob <= 1.0) {
                return Err(ScenarioError::invalid(
                    f("min_coverage_prob (β_s)"),
                    format!("must be in (0, 1], got {}", d.min_coverage_prob),
                ));
            }
            if !finite_pos(d.ue_intensity) {
                return Err(ScenarioError::invalid(
                    f("ue_intensity_per_km2 (λ_s)"),
                    "must be > 0",
                ));
            }
            if d.priority_rank == 0 {
                return Err(ScenarioError::invalid(f("priority_rank"), "must be >= 1"));
            }
            if !ranks.insert(d.priority_rank) {
                return Err(ScenarioError::invalid(
                    f("priority_rank"),
                    format!("rank {} is not unique", d.priority_rank),
                ));
            }
        }
        Ok(())
    }
}

/// Samples a homogeneous Poisson point process over `region`.
pub fn sample_ppp(intensity: f64, region: &Region, seed: u64) -> Vec<Point> {
    let mean = intensity * region.area();
    if !(mean > 0.0) {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = Poisson::new(mean)
        .expect("positive finite mean")
        .sample(&mut rng) as usize;
    (0..count)
        .map(|_| {
            Point::new(
                region.origin.x + rng.random::<f64>() * region.width,
                region.origin.y + rng.random::<f64>() * region.height,
            )
        })
        .collect()
}

/// `n` i.i.d. uniform points over `region`, deterministic in `seed`; a PPP
/// realisation conditioned on its point count.
pub fn uniform_sites(n: usize, region: &Region, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point::new(
                region.origin.x + rng.random::<f64>() * region.width,
                region.origin.y + rng.random::<f64>() * region.height,
            )
        })
        .collect()
}

// ---- allocations -------------------------------------------------------

/// Lease decisions and time-share slices, indexed `[bs]` and `[bs][sp]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub leased: Vec<bool>,
    pub slices: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn empty(num_bs: usize, num_sp: usize) -> Self {
        Self {
            leased: vec![false; num_bs],
            slices: vec![vec![0.0; num_sp]; num_bs],
        }
    }

    pub fn num_bs(&self) -> usize {
        self.leased.len()
    }

    pub fn num_sp(&self) -> usize {
        self.slices.first().map_or(0, Vec::len)
    }

    pub fn slice(&self, b: usize, s: usize) -> f64 {
        self.slices[b][s]
    }

    pub fn total_slice(&self, b: usize) -> f64 {
        self.slices[b].iter().sum()
    }

    /// Bitmask of leased base stations.
    pub fn leased_mask(&self) -> u64 {
        self.leased
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .fold(0u64, |m, (b, _)| m | (1 << b))
    }

    pub fn cost(&self, scenario: &Scenario) -> f64 {
        self.leased
            .iter()
            .zip(&scenario.base_stations)
            .filter(|(&l, _)| l)
            .map(|(_, b)| b.lease_cost)
            .sum()
    }

    /// Unleases every BS whose slices sum to zero.
    pub fn cleanup(&mut self) {
        for b in 0..self.leased.len() {
            if self.leased[b] && self.total_slice(b) <= 0.0 {
                self.leased[b] = false;
            }
        }
    }

    pub fn check_dimensions(&self, scenario: &Scenario) -> Result<(), String> {
        if self.leased.len() != scenario.num_bs() || self.slices.len() != scenario.num_bs() {
            return Err(format!(
                "allocation has {} base stations, scenario has {}",
                self.leased.len(),
                scenario.num_bs()
            ));
        }
        for (b, row) in self.slices.iter().enumerate() {
            if row.len() != scenario.num_sp() {
                return Err(format!(
                    "slice row {b} has {} entries, scenario has {} demands",
                    row.len(),
                    scenario.num_sp()
                ));
            }
        }
        Ok(())
    }

    /// All violated invariants, with `tol` slack on the numeric ones.
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let mut out = self.slice_violations(tol);
        for b in 0..self.leased.len() {
            if self.leased[b] && self.total_slice(b) <= 0.0 {
                out.push(format!("base station {b} is leased with no slices"));
            }
        }
        out
    }

    /// Violated slice invariants only; idle leased base stations are allowed,
    /// as when the lease set is fixed in advance.
    pub fn slice_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (b, row) in self.slices.iter().enumerate() {
            for (s, &d) in row.iter().enumerate() {
                if !d.is_finite() || d < -tol || d > 1.0 + tol {
                    out.push(format!("slice[{b}][{s}] = {d} outside [0, 1]"));
                }
                if d > tol && !self.leased[b] {
                    out.push(format!("slice[{b}][{s}] = {d} on an unleased base station"));
                }
            }
            let total: f64 = row.iter().sum();
            if total > 1.0 + tol {
                out.push(format!("base station {b} utilisation {total} exceeds 1"));
            }
        }
        out
    }
}
