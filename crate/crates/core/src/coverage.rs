//! Analytic rate-coverage engine.
//!
//! The interference seen by a UE at distance `u` from its serving BS is a sum
//! of independent terms `g_j r_j^{-α}` with exponentially distributed fades.
//! Each term is described by its characteristic function (averaged over the
//! bearing of the UE relative to the interferer), and the interference law
//! is recovered from the product of these functions by Fourier inversion.
//!
//! Coverage for a threshold `T` is `E[exp(-s (σ² + I))]` with `s = T u^α/P_b`.
//! Writing `f_I` as an inverse Fourier integral and integrating against
//! `exp(-s c)` in closed form leaves a single ω-integral:
//!
//! ```text
//! E[e^{-sI}] = (1/π) [ atan(Ω/s) + ∫₀^Ω Re{(Φ(ω) - 1) / (s + iω)} dω ]
//! ```
//!
//! Subtracting one makes the integrand bounded near ω = 0 for every `s`, so a
//! single ω grid per UE distance serves all thresholds, loads and demands.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoverageError, GeometryError};
use crate::geometry::{self, VoronoiCell};
use crate::quadrature::{adaptive_gk, composite_gl, gauss_legendre, push_gl_panel};
use crate::scenario::{Allocation, Scenario};

/// Distances are stored in km; path loss is evaluated in metres.
pub const METERS_PER_KM: f64 = 1000.0;
/// Interferer distances are floored at this value (metres) in the path loss.
pub const MIN_INTERFERER_DISTANCE_M: f64 = 1.0;
/// Required modulus of every interferer CF at the ω truncation point.
pub const CF_TAIL_TARGET: f64 = 1e-6;

const THETA_PANEL_LOG_SPAN: f64 = 1.0;
const THETA_NODES: usize = 8;
const OMEGA_PANEL_LOG_SPAN: f64 = 2.0;
const OMEGA_NODES: usize = 10;
const OMEGA_LOW_FACTOR: f64 = 1e-4;
const OMEGA_HIGH_FACTOR: f64 = 1e7;
const U_NODES: usize = 10;
const U_BASE_PANELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Cap on the ω truncation point, in units of the largest mean inverse
    /// interferer power at the current UE distance.
    pub omega_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub poisson_tail_eps: f64,
    pub rate_grid_points: usize,
    pub max_expansion_size: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            omega_max: 1e12,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            poisson_tail_eps: 1e-6,
            rate_grid_points: 64,
            max_expansion_size: 12,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), CoverageError> {
        let bad = |m: &str| Err(CoverageError::InvalidInput(m.to_string()));
        if !(self.omega_max > 0.0) {
            return bad("omega_max must be > 0");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be > 0");
        }
        if !(self.poisson_tail_eps > 0.0 && self.poisson_tail_eps <= 1e-3) {
            return bad("poisson_tail_eps must lie in (0, 1e-3]");
        }
        if self.rate_grid_points < 2 {
            return bad("rate_grid_points must be >= 2");
        }
        Ok(())
    }
}

/// Bitmask over base-station indices marking active interferers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActiveSet(pub u64);

impl ActiveSet {
    pub const EMPTY: ActiveSet = ActiveSet(0);

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        ActiveSet(indices.into_iter().fold(0, |m, i| m | (1u64 << i)))
    }

    /// Every BS of an `n`-BS scenario except `b`.
    pub fn all_except(n: usize, b: usize) -> Self {
        ActiveSet(((1u64 << n) - 1) & !(1u64 << b))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn without(self, i: usize) -> Self {
        ActiveSet(self.0 & !(1u64 << i))
    }

    pub fn with(self, i: usize) -> Self {
        ActiveSet(self.0 | (1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: ActiveSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }
}

/// Mean number of UEs of an SP inside a disc of radius `q` (km).
pub fn mean_load(intensity: f64, q: f64) -> f64 {
    intensity * PI * q * q
}

/// SINR needed for a per-UE rate of `rate` bps when `load` UEs share `bandwidth`.
pub fn sinr_threshold(rate: f64, load: f64, bandwidth: f64) -> f64 {
    (load * rate / bandwidth * LN_2).exp_m1()
}

/// Bearing-averaged quadrature for one interferer at a fixed UE distance:
/// point masses `m_i = P_j r_i^{-α}` (watts) with weights `w_i` summing to 1.
#[derive(Debug, Clone)]
pub(crate) struct ThetaRule {
    pub m: Vec<f64>,
    pub w: Vec<f64>,
    /// `E_θ[1/m]`, the high-frequency decay constant of the CF.
    pub inv_mean: f64,
    pub m_max: f64,
}

impl ThetaRule {
    pub fn new(u_m: f64, d_m: f64, power: f64, alpha: f64) -> Self {
        let floor = MIN_INTERFERER_DISTANCE_M;
        let m_of = |r: f64| power * r.max(floor).powf(-alpha);
        let r0 = (d_m - u_m).abs();
        let r1 = d_m + u_m;
        let mut m = Vec::new();
        let mut w = Vec::new();
        if u_m * d_m == 0.0 || r1 <= floor || (r1 - r0) <= 1e-12 * r1 {
            m.push(m_of(0.5 * (r0 + r1)));
            w.push(1.0);
        } else {
            let four_ud = 4.0 * u_m * d_m;
            let theta_of = |r: f64| {
                let x = ((r * r - r0 * r0) / four_ud).clamp(0.0, 1.0);
                2.0 * x.sqrt().asin()
            };
            let mut breaks = vec![0.0];
            let mut r_start = r0;
            if r0 < floor {
                let tf = theta_of(floor);
                m.push(m_of(floor));
                w.push(tf / PI);
                breaks[0] = tf;
                r_start = floor;
            }
            let ratio = (THETA_PANEL_LOG_SPAN / alpha).exp();
            let mut r = r_start * ratio;
            while r < r1 {
                breaks.push(theta_of(r));
                r *= ratio;
            }
            breaks.push(PI);
            let (x, gw) = gauss_legendre(THETA_NODES);
            for pair in breaks.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b <= a {
                    continue;
                }
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                for (xi, wi) in x.iter().zip(gw) {
                    let th = mid + half * xi;
                    let sh = (0.5 * th).sin();
                    let rr = (r0 * r0 + four_ud * sh * sh).sqrt();
                    m.push(m_of(rr));
                    w.push(half * wi / PI);
                }
            }
        }
        let inv_mean = m.iter().zip(&w).map(|(mi, wi)| wi / mi).sum();
        let m_max = m.iter().copied().fold(0.0, f64::max);
        Self {
            m,
            w,
            inv_mean,
            m_max,
        }
    }

    /// `E_θ[1/(1 - iωm)]`.
    pub fn cf(&self, omega: f64) -> Complex64 {
        if omega == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let mut re = 0.0;
        let mut im = 0.0;
        for (&mi, &wi) in self.m.iter().zip(&self.w) {
            let x = omega * mi;
            let den = wi / (1.0 + x * x);
            re += den;
            im += den * x;
        }
        Complex64::new(re, im)
    }
}

/// One UE-distance node of a serving BS: its quadrature weight, the ω grid
/// and the interferer CF values on that grid.
#[derive(Debug, Clone)]
struct UNode {
    /// Distance to the serving BS (km).
    u_km: f64,
    /// Quadrature weight times the distance density.
    weight: f64,
    /// `u^α / P_b` with `u` in metres.
    signal_scale: f64,
    omega: Vec<f64>,
    omega_w: Vec<f64>,
    omega_hi: f64,
    /// Interferer CFs, row-major `[local interferer][ω node]`.
    h: Vec<Complex64>,
}

impl UNode {
    fn n_omega(&self) -> usize {
        self.omega.len()
    }

    fn h_row(&self, j: usize) -> &[Complex64] {
        let n = self.n_omega();
        &self.h[j * n..(j + 1) * n]
    }

    fn phi_into(&self, local_mask: u64, out: &mut Vec<Complex64>) {
        out.clear();
        out.resize(self.n_omega(), Complex64::new(1.0, 0.0));
        let mut mask = local_mask;
        while mask != 0 {
            let j = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            for (o, h) in out.iter_mut().zip(self.h_row(j)) {
                *o *= h;
            }
        }
    }

    /// `E[exp(-s I)]` for an interference CF `phi` sampled on this grid.
    fn laplace(&self, phi: &[Complex64], s: f64) -> f64 {
        let mut acc = 0.0;
        for ((&om, &w), p) in self.omega.iter().zip(&self.omega_w).zip(phi) {
            acc += w * ((p.re - 1.0) * s + p.im * om) / (s * s + om * om);
        }
        (self.omega_hi.atan2(s) + acc) / PI
    }

    /// Conditional SINR density at threshold `t` (the inner integrand of the
    /// SINR law), for a non-empty interferer set.
    fn sinr_density(&self, phi: &[Complex64], t: f64, noise: f64) -> f64 {
        let a = self.signal_scale;
        let s = t * a;
        let wh = self.omega_hi;
        let mut acc = noise * wh.atan2(s) + wh / (s * s + wh * wh);
        for ((&om, &w), p) in self.omega.iter().zip(&self.omega_w).zip(phi) {
            let z = Complex64::new(s, om);
            let k = z.inv() * noise + (z * z).inv();
            acc += w * ((p - 1.0) * k).re;
        }
        a * (-s * noise).exp() * acc / PI
    }
}

#[derive(Debug)]
struct BsTable {
    /// Interferer BS indices, in index order; local bit `i` ↔ `others[i]`.
    others: Vec<usize>,
    nodes: Vec<UNode>,
}

impl BsTable {
    fn local_mask(&self, active: ActiveSet) -> u64 {
        self.others
            .iter()
            .enumerate()
            .filter(|(_, &j)| active.contains(j))
            .fold(0, |m, (i, _)| m | (1 << i))
    }
}

/// Interference law at a fixed UE distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterferencePdf {
    /// No interferers: all mass sits at zero.
    Degenerate,
    Density(f64),
}

/// Tail window of the Palm load `1 + Poisson(mean)`: `(n, probability)` pairs.
pub fn palm_load_window(mean: f64, eps: f64) -> Vec<(u32, f64)> {
    if mean <= 0.0 {
        return vec![(1, 1.0)];
    }
    let mut out = Vec::new();
    let mut cdf = 0.0;
    let mut ln_fact = 0.0;
    let mut k: u32 = 0;
    loop {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let p = (-mean + k as f64 * mean.ln() - ln_fact).exp();
        let prev = cdf;
        cdf += p;
        if cdf >= 0.5 * eps && prev < 1.0 - 0.5 * eps {
            out.push((k + 1, p));
        }
        if cdf >= 1.0 - 0.5 * eps || (k as f64 > mean && p < 1e-300) {
            break;
        }
        k += 1;
    }
    out
}

/// The analytic engine. Holds lazily built per-BS tables that depend only on
/// the geometry and radio parameters, so one engine serves every demand and
/// every UE intensity of its scenario.
pub struct CoverageEngine {
    scenario: Scenario,
    cfg: QuadratureConfig,
    cells: OnceLock<Result<Vec<VoronoiCell>, GeometryError>>,
    circular: Vec<OnceLock<Result<Arc<BsTable>, CoverageError>>>,
    voronoi: Vec<OnceLock<Result<Arc<BsTable>, CoverageError>>>,
    memo: Mutex<HashMap<(usize, u64, u64), f64>>,
}

impl std::fmt::Debug for CoverageEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoverageEngine")
            .field("scenario", &self.scenario.name)
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl CoverageEngine {
    pub fn new(scenario: &Scenario, cfg: QuadratureConfig) -> Result<Self, CoverageError> {
        cfg.validate()?;
        if scenario.num_bs() > 64 {
            return Err(CoverageError::InvalidInput(
                "at most 64 base stations are supported".into(),
            ));
        }
        let n = scenario.num_bs();
        Ok(Self {
            scenario: scenario.clone(),
            cfg,
            cells: OnceLock::new(),
            circular: (0..n).map(|_| OnceLock::new()).collect(),
            voronoi: (0..n).map(|_| OnceLock::new()).collect(),
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    pub fn cells(&self) -> Result<&[VoronoiCell], CoverageError> {
        self.cells
            .get_or_init(|| {
                let sites: Vec<_> = self
                    .scenario
                    .base_stations
                    .iter()
                    .map(|b| b.location)
                    .collect();
                geometry::voronoi_tessellation(&sites, &self.scenario.region)
            })
            .as_deref()
            .map_err(|e| CoverageError::Geometry(e.clone()))
    }

    fn alpha(&self) -> f64 {
        self.scenario.propagation.pathloss_exponent
    }

    fn distance_km(&self, a: usize, b: usize) -> f64 {
        let bs = &self.scenario.base_stations;
        bs[a].location.dist(bs[b].location)
    }

    fn theta_rule(&self, b: usize, j: usize, u_km: f64) -> ThetaRule {
        ThetaRule::new(
            u_km * METERS_PER_KM,
            self.distance_km(b, j) * METERS_PER_KM,
            self.scenario.base_stations[j].tx_power,
            self.alpha(),
        )
    }

    /// Bearing-averaged characteristic function of interferer `j`'s power at
    /// a UE `u` km from serving BS `b`; `omega` is in 1/W.
    pub fn interferer_cf(&self, j: usize, b: usize, u: f64, omega: f64) -> Complex64 {
        if omega == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        self.theta_rule(b, j, u).cf(omega)
    }

    fn build_node(
        &self,
        b: usize,
        others: &[usize],
        u_km: f64,
        weight: f64,
    ) -> Result<UNode, CoverageError> {
        let p_b = self.scenario.base_stations[b].tx_power;
        let signal_scale = (u_km * METERS_PER_KM).powf(self.alpha()) / p_b;
        if others.is_empty() {
            return Ok(UNode {
                u_km,
                weight,
                signal_scale,
                omega: Vec::new(),
                omega_w: Vec::new(),
                omega_hi: 0.0,
                h: Vec::new(),
            });
        }
        let rules: Vec<ThetaRule> = others
            .iter()
            .map(|&j| self.theta_rule(b, j, u_km))
            .collect();
        let m_max = rules.iter().map(|r| r.m_max).fold(0.0, f64::max);
        let j_ref = rules.iter().map(|r| r.inv_mean).fold(0.0, f64::max);
        let omega_lo = OMEGA_LOW_FACTOR / m_max;
        let cap = self.cfg.omega_max * j_ref;
        let mut omega_hi = (OMEGA_HIGH_FACTOR * j_ref).min(cap);
        loop {
            let worst = rules
                .iter()
                .map(|r| r.cf(omega_hi).norm())
                .fold(0.0, f64::max);
            if worst < CF_TAIL_TARGET {
                break;
            }
            if omega_hi >= cap {
                return Err(CoverageError::NonConvergence(format!(
                    "interferer CF modulus {worst:.3e} at the omega cap (serving BS {b}, u = {u_km} km)"
                )));
            }
            omega_hi = (omega_hi * 10.0).min(cap);
        }
        let mut omega = Vec::new();
        let mut omega_w = Vec::new();
        let lo = omega_lo.min(0.5 * omega_hi);
        push_gl_panel(0.0, lo, 6, &mut omega, &mut omega_w);
        let (t0, t1) = (lo.ln(), omega_hi.ln());
        let panels = ((t1 - t0) / OMEGA_PANEL_LOG_SPAN).ceil().max(1.0) as usize;
        let step = (t1 - t0) / panels as f64;
        let (x, gw) = gauss_legendre(OMEGA_NODES);
        for p in 0..panels {
            let a = t0 + p as f64 * step;
            let mid = a + 0.5 * step;
            for (xi, wi) in x.iter().zip(gw) {
                let om = (mid + 0.5 * step * xi).exp();
                omega.push(om);
                omega_w.push(0.5 * step * wi * om);
            }
        }
        let mut h = Vec::with_capacity(rules.len() * omega.len());
        for r in &rules {
            h.extend(omega.iter().map(|&om| r.cf(om)));
        }
        Ok(UNode {
            u_km,
            weight,
            signal_scale,
            omega,
            omega_w,
            omega_hi,
            h,
        })
    }

    fn graded_breaks(&self, upper: f64, extra: &[f64]) -> Vec<f64> {
        let mut br: Vec<f64> = (0..=U_BASE_PANELS)
            .map(|i| upper * i as f64 / U_BASE_PANELS as f64)
            .collect();
        for &d in extra {
            if d > 0.0 && d < upper {
                for off in [0.0, -0.02, 0.02, -0.002, 0.002] {
                    let v = d + off * upper;
                    if v > 0.0 && v < upper {
                        br.push(v);
                    }
                }
            }
        }
        br.sort_by(f64::total_cmp);
        br.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * upper);
        br
    }

    fn circular_table(&self, b: usize) -> Result<Arc<BsTable>, CoverageError> {
        self.circular[b]
            .get_or_init(|| {
                let n = self.scenario.num_bs();
                let q = self.scenario.base_stations[b].coverage_radius_km;
                let others: Vec<usize> = (0..n).filter(|&j| j != b).collect();
                let dists: Vec<f64> = others.iter().map(|&j| self.distance_km(b, j)).collect();
                let breaks = self.graded_breaks(q, &dists);
                let (u, w) = composite_gl(&breaks, U_NODES);
                let nodes = u
                    .par_iter()
                    .zip(w.par_iter())
                    .map(|(&u, &w)| {
                        self.build_node(b, &others, u, w * geometry::circular_distance_pdf(q, u))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Arc::new(BsTable { others, nodes }))
            })
            .clone()
    }

    fn voronoi_table(&self, b: usize) -> Result<Arc<BsTable>, CoverageError> {
        let cells = self.cells()?;
        self.voronoi[b]
            .get_or_init(|| {
                let n = self.scenario.num_bs();
                let cell = &cells[b];
                let others: Vec<usize> = (0..n).filter(|&j| j != b).collect();
                let upper = cell.circumradius();
                let mut extra = cell.distance_breakpoints();
                extra.extend(others.iter().map(|&j| self.distance_km(b, j)));
                let breaks = self.graded_breaks(upper, &extra);
                let (u, w) = composite_gl(&breaks, U_NODES);
                let nodes = u
                    .par_iter()
                    .zip(w.par_iter())
                    .map(|(&u, &w)| {
                        self.build_node(b, &others, u, w * geometry::cell_distance_pdf(cell, u))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Arc::new(BsTable { others, nodes }))
            })
            .clone()
    }

    /// Per-UE SINR threshold for SP `s` at BS `b` under the mean-load rule.
    pub fn threshold(&self, b: usize, s: usize) -> f64 {
        let bs = &self.scenario.base_stations[b];
        let d = &self.scenario.demands[s];
        let load = mean_load(d.ue_intensity, bs.coverage_radius_km).max(1.0);
        sinr_threshold(d.min_rate_bps, load, bs.bandwidth_hz)
    }

    fn coverage_at_node(&self, node: &UNode, phi: Option<&[Complex64]>, t: f64, noise: f64) -> f64 {
        let s = t * node.signal_scale;
        let ns = (-s * noise).exp();
        match phi {
            None => ns,
            Some(phi) => ns * node.laplace(phi, s),
        }
    }

    /// `Pr{SINR > t}` for a UE uniform in the disc of BS `b`, with the BSs
    /// in `active` interfering.
    pub fn conditional_coverage(
        &self,
        b: usize,
        t: f64,
        active: ActiveSet,
    ) -> Result<f64, CoverageError> {
        let active = active.without(b);
        let key = (b, t.to_bits(), active.0);
        if let Some(&v) = self.memo.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let table = self.circular_table(b)?;
        let mask = table.local_mask(active);
        let noise = self.scenario.noise_power(b);
        let mut total = 0.0;
        let mut phi = Vec::new();
        for node in &table.nodes {
            let c = if mask == 0 {
                self.coverage_at_node(node, None, t, noise)
            } else {
                node.phi_into(mask, &mut phi);
                self.coverage_at_node(node, Some(&phi), t, noise)
            };
            total += node.weight * c;
        }
        let v = total.clamp(0.0, 1.0);
        self.memo.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Coverage of SP `s` for a UE attached to BS `b`, without the slice
    /// factor or area weight.
    pub fn per_bs_coverage(
        &self,
        b: usize,
        s: usize,
        active: ActiveSet,
    ) -> Result<f64, CoverageError> {
        self.conditional_coverage(b, self.threshold(b, s), active)
    }

    /// `Σ_b δ_bs (πq_b²/A) · per_bs_coverage(b, s, leased ∖ b)`.
    pub fn network_coverage(&self, alloc: &Allocation, s: usize) -> Result<f64, CoverageError> {
        alloc
            .check_dimensions(&self.scenario)
            .map_err(CoverageError::InvalidInput)?;
        let leased = ActiveSet(alloc.leased_mask());
        let mut total = 0.0;
        for b in 0..self.scenario.num_bs() {
            let d = alloc.slice(b, s);
            if d > 0.0 {
                total += d * self.scenario.disc_weight(b) * self.per_bs_coverage(b, s, leased)?;
            }
        }
        Ok(total)
    }

    /// As [`network_coverage`](Self::network_coverage) but averaging over the
    /// random load `1 + Poisson(λ_s πq_b²)` instead of using its mean.
    pub fn network_coverage_random_load(
        &self,
        alloc: &Allocation,
        s: usize,
    ) -> Result<f64, CoverageError> {
        alloc
            .check_dimensions(&self.scenario)
            .map_err(CoverageError::InvalidInput)?;
        let leased = ActiveSet(alloc.leased_mask());
        let d = &self.scenario.demands[s];
        let mut total = 0.0;
        for b in 0..self.scenario.num_bs() {
            let delta = alloc.slice(b, s);
            if delta <= 0.0 {
                continue;
            }
            let bs = &self.scenario.base_stations[b];
            let window = palm_load_window(
                mean_load(d.ue_intensity, bs.coverage_radius_km),
                self.cfg.poisson_tail_eps,
            );
            let mut cov = 0.0;
            for (k, p) in window {
                let t = sinr_threshold(d.min_rate_bps, k as f64, bs.bandwidth_hz);
                cov += p * self.conditional_coverage(b, t, leased)?;
            }
            total += delta * self.scenario.disc_weight(b) * cov;
        }
        Ok(total)
    }

    /// For each BS `b`, the coefficient of `δ_bs` in the Voronoi coverage of
    /// SP `s` with every BS leased: `(A_b/A) Σ_n P(n) Pr{SINR > T_n}`.
    pub fn voronoi_terms(&self, s: usize) -> Result<Vec<f64>, CoverageError> {
        let cells = self.cells()?;
        let area = self.scenario.region.area();
        let n = self.scenario.num_bs();
        let d = &self.scenario.demands[s];
        let mut out = Vec::with_capacity(n);
        for b in 0..n {
            let bs = &self.scenario.base_stations[b];
            let table = self.voronoi_table(b)?;
            let window =
                palm_load_window(d.ue_intensity * cells[b].area, self.cfg.poisson_tail_eps);
            let thresholds: Vec<f64> = window
                .iter()
                .map(|&(k, _)| sinr_threshold(d.min_rate_bps, k as f64, bs.bandwidth_hz))
                .collect();
            let noise = self.scenario.noise_power(b);
            let mask = (1u64 << table.others.len()) - 1;
            let per_node: Vec<Vec<f64>> = table
                .nodes
                .par_iter()
                .map(|node| {
                    let mut phi = Vec::new();
                    let phi = if mask == 0 {
                        None
                    } else {
                        node.phi_into(mask, &mut phi);
                        Some(phi.as_slice())
                    };
                    thresholds
                        .iter()
                        .map(|&t| node.weight * self.coverage_at_node(node, phi, t, noise))
                        .collect()
                })
                .collect();
            let mut total = 0.0;
            for (i, &(_, p)) in window.iter().enumerate() {
                let cov: f64 = per_node.iter().map(|v| v[i]).sum();
                total += p * cov.clamp(0.0, 1.0);
            }
            out.push(cells[b].area / area * total);
        }
        Ok(out)
    }

    /// Coverage of SP `s` under true nearest-BS association with every BS
    /// leased; linear in the slices of `alloc`.
    pub fn voronoi_rate_coverage(
        &self,
        alloc: &Allocation,
        s: usize,
    ) -> Result<f64, CoverageError> {
        alloc
            .check_dimensions(&self.scenario)
            .map_err(CoverageError::InvalidInput)?;
        if alloc.leased.iter().any(|l| !l) {
            return Err(CoverageError::InvalidInput(
                "Voronoi coverage requires every base station to be leased".into(),
            ));
        }
        let terms = self.voronoi_terms(s)?;
        Ok((0..terms.len()).map(|b| alloc.slice(b, s) * terms[b]).sum())
    }

    /// Density of the aggregate interference power at `c` watts for a UE
    /// `u` km from BS `b`.
    pub fn interference_pdf(
        &self,
        c: f64,
        u: f64,
        b: usize,
        active: ActiveSet,
    ) -> Result<InterferencePdf, CoverageError> {
        let active = active.without(b);
        if active.is_empty() {
            return Ok(InterferencePdf::Degenerate);
        }
        if c < 0.0 {
            return Ok(InterferencePdf::Density(0.0));
        }
        let rules: Vec<ThetaRule> = active.iter().map(|j| self.theta_rule(b, j, u)).collect();
        let jump = if rules.len() == 1 {
            rules[0].inv_mean
        } else {
            0.0
        };
        let scale = rules.iter().map(|r| r.inv_mean).fold(0.0, f64::max);
        let m_max = rules.iter().map(|r| r.m_max).fold(0.0, f64::max);
        let residual = |om: f64| -> Complex64 {
            let mut phi = Complex64::new(1.0, 0.0);
            for r in &rules {
                phi *= r.cf(om);
            }
            if jump > 0.0 {
                phi -= Complex64::new(jump, 0.0) / Complex64::new(jump, -om);
            }
            phi
        };
        let integrand = |om: f64| (Complex64::new(0.0, -om * c).exp() * residual(om)).re;
        // Error budget on the scale of the density, E[1/m] of the strongest term.
        let tol = self.cfg.abs_tol.max(self.cfg.rel_tol) * scale;
        let mut total = 0.0;
        let mut a = 0.0;
        let mut b_edge = OMEGA_LOW_FACTOR / m_max;
        let half_period = if c > 0.0 { PI / c } else { f64::INFINITY };
        // Beyond ω = B the integral is at most |R(B)|·B, or about 2|R(B)|/c
        // once the phase oscillates.
        let tail_reach = if c > 0.0 { 2.0 / c } else { f64::INFINITY };
        let mut panels = 0usize;
        loop {
            let r = adaptive_gk(integrand, a, b_edge, 0.1 * tol, self.cfg.rel_tol, 200);
            total += r.value;
            panels += 1;
            let tail = residual(b_edge).norm() * b_edge.min(tail_reach);
            if b_edge * m_max > 1.0 && tail < tol && r.value.abs() < tol {
                break;
            }
            if panels > 200_000 || b_edge > self.cfg.omega_max * scale {
                return Err(CoverageError::NonConvergence(format!(
                    "interference density inversion at c = {c:e} did not settle"
                )));
            }
            a = b_edge;
            b_edge = a + a.min(half_period);
        }
        let reference = if jump > 0.0 {
            jump * (-jump * c).exp()
        } else {
            0.0
        };
        Ok(InterferencePdf::Density(reference + total / PI))
    }

    /// Density of the SINR at `t` for a UE uniform in the disc of `b`.
    pub fn sinr_pdf(&self, t: f64, b: usize, active: ActiveSet) -> Result<f64, CoverageError> {
        if t < 0.0 {
            return Ok(0.0);
        }
        let table = self.circular_table(b)?;
        let mask = table.local_mask(active.without(b));
        let noise = self.scenario.noise_power(b);
        let mut phi = Vec::new();
        let mut total = 0.0;
        for node in &table.nodes {
            let f = if mask == 0 {
                let a = node.signal_scale;
                a * noise * (-a * t * noise).exp()
            } else {
                node.phi_into(mask, &mut phi);
                node.sinr_density(&phi, t, noise)
            };
            total += node.weight * f;
        }
        Ok(total)
    }

    /// Density of the per-UE rate (bps) of SP `s` at BS `b` under the
    /// mean-load rule.
    pub fn rate_pdf(
        &self,
        rho: f64,
        b: usize,
        s: usize,
        active: ActiveSet,
    ) -> Result<f64, CoverageError> {
        if rho < 0.0 {
            return Ok(0.0);
        }
        let bs = &self.scenario.base_stations[b];
        let d = &self.scenario.demands[s];
        let load = mean_load(d.ue_intensity, bs.coverage_radius_km).max(1.0);
        let k = load * LN_2 / bs.bandwidth_hz;
        let t = (k * rho).exp_m1();
        Ok(self.sinr_pdf(t, b, active)? * k * (k * rho).exp())
    }

    /// `1 - ∫₀^κ f_rate(ρ) dρ`, integrated numerically over a geometric grid
    /// of `rate_grid_points` panels; a cross-check of [`Self::per_bs_coverage`].
    pub fn per_bs_coverage_numeric(
        &self,
        b: usize,
        s: usize,
        active: ActiveSet,
    ) -> Result<f64, CoverageError> {
        let t_max = self.threshold(b, s);
        let bs = &self.scenario.base_stations[b];
        let d = &self.scenario.demands[s];
        let load = mean_load(d.ue_intensity, bs.coverage_radius_km).max(1.0);
        let k = load * LN_2 / bs.bandwidth_hz;
        let rho_max = d.min_rate_bps;
        let rho_min = (1e-16 * t_max).ln_1p() / k;
        let n = self.cfg.rate_grid_points;
        let (l0, l1) = (rho_min.ln(), rho_max.ln());
        let breaks: Vec<f64> = (0..=n)
            .map(|i| (l0 + (l1 - l0) * i as f64 / n as f64).exp())
            .collect();
        let (nodes, weights) = composite_gl(&breaks, 8);
        let mut mass = 0.0;
        for (&r, &w) in nodes.iter().zip(&weights) {
            mass += w * self.rate_pdf(r, b, s, active)?;
        }
        // The leftover [0, ρ_min] carries at most ρ_min·f(0).
        mass += rho_min * self.rate_pdf(0.0, b, s, active)?;
        Ok((1.0 - mass).clamp(0.0, 1.0))
    }

    /// Subset sums `G(K) = (πq_b²/A)·Pr{covered | K interfering}` for every
    /// subset `K` of the other BSs (local bitmask order), one vector per SP.
    pub(crate) fn subset_coverages(
        &self,
        b: usize,
    ) -> Result<(Vec<usize>, Vec<Vec<f64>>), CoverageError> {
        let n_sp = self.scenario.num_sp();
        let m = self.scenario.num_bs() - 1;
        if m > self.cfg.max_expansion_size {
            return Err(CoverageError::ExpansionTooLarge {
                size: m,
                max: self.cfg.max_expansion_size,
            });
        }
        let table = self.circular_table(b)?;
        let noise = self.scenario.noise_power(b);
        let weight = self.scenario.disc_weight(b);
        let thresholds: Vec<f64> = (0..n_sp).map(|s| self.threshold(b, s)).collect();
        let n_sub = 1usize << m;
        let per_node: Vec<Vec<f64>> = table
            .nodes
            .par_iter()
            .map(|node| {
                let n_om = node.n_omega();
                let mut phis = vec![Complex64::new(1.0, 0.0); n_sub * n_om];
                for mask in 1..n_sub {
                    let j = mask.trailing_zeros() as usize;
                    let prev = mask & (mask - 1);
                    let (done, rest) = phis.split_at_mut(mask * n_om);
                    let src = &done[prev * n_om..(prev + 1) * n_om];
                    for ((o, p), h) in rest[..n_om].iter_mut().zip(src).zip(node.h_row(j)) {
                        *o = p * h;
                    }
                }
                let mut out = vec![0.0; n_sp * n_sub];
                for (si, &t) in thresholds.iter().enumerate() {
                    out[si * n_sub] = self.coverage_at_node(node, None, t, noise);
                    for mask in 1..n_sub {
                        let phi = &phis[mask * n_om..(mask + 1) * n_om];
                        out[si * n_sub + mask] = self.coverage_at_node(node, Some(phi), t, noise);
                    }
                }
                out
            })
            .collect();
        let mut g = vec![vec![0.0; n_sub]; n_sp];
        for (node, vals) in table.nodes.iter().zip(&per_node) {
            for (si, row) in g.iter_mut().enumerate() {
                for (mask, slot) in row.iter_mut().enumerate() {
                    *slot += node.weight * vals[si * n_sub + mask];
                }
            }
        }
        for row in &mut g {
            for v in row.iter_mut() {
                *v *= weight;
            }
        }
        Ok((table.others.clone(), g))
    }

    /// UE-distance nodes and weights used for BS `b` in the disc model.
    pub fn circular_nodes(&self, b: usize) -> Result<Vec<(f64, f64)>, CoverageError> {
        Ok(self
            .circular_table(b)?
            .nodes
            .iter()
            .map(|n| (n.u_km, n.weight))
            .collect())
    }

    /// UE-distance nodes and weights used for BS `b` in the Voronoi model.
    pub fn voronoi_nodes(&self, b: usize) -> Result<Vec<(f64, f64)>, CoverageError> {
        Ok(self
            .voronoi_table(b)?
            .nodes
            .iter()
            .map(|n| (n.u_km, n.weight))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::scenario::{BaseStation, PropagationModel, Region, ServiceDemand};

    fn bs(id: &str, x: f64, y: f64, dbm: f64, q: f64) -> BaseStation {
        BaseStation {
            id: id.into(),
            rp_id: "rp".into(),
            location: Point::new(x, y),
            tx_power_dbm: dbm,
            tx_power: crate::scenario::dbm_to_watts(dbm),
            bandwidth_hz: 20e6,
            coverage_radius_km: q,
            lease_cost: 1.0,
        }
    }

    fn scenario(stations: Vec<BaseStation>) -> Scenario {
        Scenario {
            name: "t".into(),
            region: Region::new(2.0, 2.0, Point::new(0.0, 0.0)),
            propagation: PropagationModel::new(4.0, -174.0),
            base_stations: stations,
            demands: vec![ServiceDemand {
                sp_id: "a".into(),
                min_rate_bps: 1e6,
                min_coverage_prob: 0.5,
                ue_intensity: 2.0,
                priority_rank: 1,
            }],
        }
    }

    #[test]
    fn mean_load_values() {
        assert!((mean_load(10.0, 0.3) - 2.8274).abs() < 1e-4);
        assert!((mean_load(25.0, 1.0) - 78.54).abs() < 1e-2);
    }

    #[test]
    fn theta_rule_weights_are_normalised() {
        for (u, d) in [
            (100.0, 500.0),
            (500.0, 500.0),
            (499.5, 500.0),
            (10.0, 0.0),
            (300.0, 50.0),
        ] {
            let r = ThetaRule::new(u, d, 1.0, 4.0);
            let s: f64 = r.w.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "u={u} d={d}: {s}");
            assert_eq!(r.cf(0.0), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn cf_modulus_bounded_and_decaying() {
        let sc = scenario(vec![
            bs("a", 0.5, 1.0, 30.0, 0.4),
            bs("b", 1.1, 1.0, 30.0, 0.4),
        ]);
        let e = CoverageEngine::new(&sc, QuadratureConfig::default()).unwrap();
        let rule = e.theta_rule(0, 1, 0.2);
        for k in -5..25 {
            let om = 10f64.powi(k) / rule.m_max;
            assert!(e.interferer_cf(1, 0, 0.2, om).norm() <= 1.0 + 1e-12);
        }
        assert!(e.interferer_cf(1, 0, 0.2, 1e6 / rule.m_max).norm() < 0.01);
        assert_eq!(e.interferer_cf(1, 0, 0.2, 0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn palm_window_covers_mass() {
        for mean in [0.3, 5.0, 80.0] {
            let w = palm_load_window(mean, 1e-6);
            let mass: f64 = w.iter().map(|p| p.1).sum();
            assert!(mass > 1.0 - 1e-6 && mass <= 1.0 + 1e-12, "{mean}: {mass}");
            assert!(w.iter().all(|p| p.0 >= 1));
        }
    }

    #[test]
    fn single_bs_coverage_matches_noise_only_closed_form() {
        let sc = scenario(vec![bs("a", 1.0, 1.0, 23.0, 0.3)]);
        let e = CoverageEngine::new(&sc, QuadratureConfig::default()).unwrap();
        let t = 5.0;
        let got = e.conditional_coverage(0, t, ActiveSet::EMPTY).unwrap();
        // ∫ 2u/q² exp(-k u⁴) du by a fine midpoint rule.
        let q = 300.0;
        let k = t * sc.noise_power(0) / sc.base_stations[0].tx_power;
        let n = 200_000;
        let h = q / n as f64;
        let want: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                2.0 * u / (q * q) * (-k * u.powi(4)).exp() * h
            })
            .sum();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}
