//! End-to-end runs behind the `ratecov` command: solving a scenario with one
//! method, sweeping UE intensity, and validating an allocation against the
//! Monte Carlo oracle. Reports are plain serde types with probabilities
//! rounded to six decimals so identical inputs give identical bytes.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::allocators::{equal_split, greedy_allocate, sequential_allocate, SpStatus};
use crate::coefficients::load_or_compute;
use crate::coverage::{CoverageEngine, QuadratureConfig};
use crate::error::Error;
use crate::montecarlo::{simulate_coverage, AssociationMode, CoverageEstimate, TrialConfig};
use crate::scenario::{Allocation, Scenario};
use crate::solver::{solve_exact, BnbOptions, ExactPath, SolveStatus};

/// Slack on `coverage ≥ β` when flagging an SP as satisfied.
pub const SATISFIED_TOL: f64 = 1e-6;
/// Allowed gap between analytic and simulated coverage in [`validate`].
pub const VALIDATION_TOL: f64 = 0.02;
/// Tolerance used for allocation invariant checks.
pub const INVARIANT_TOL: f64 = 1e-9;

pub fn round6(x: f64) -> f64 {
    if x.is_finite() {
        (x * 1e6).round() / 1e6
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Greedy,
    Sequential,
    EqualSplit,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Exact,
        Method::Greedy,
        Method::Sequential,
        Method::EqualSplit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Greedy => "greedy",
            Method::Sequential => "sequential",
            Method::EqualSplit => "equal-split",
        }
    }

    /// Coverage model the method optimises against.
    pub fn association(self) -> AssociationMode {
        match self {
            Method::Sequential => AssociationMode::Voronoi,
            _ => AssociationMode::Circular,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!("unknown method '{s}' (expected exact, greedy, sequential or equal-split)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Exact method, proven optimal.
    Optimal,
    /// Every SP meets its coverage target.
    Feasible,
    /// Some SP misses its target.
    Partial,
    /// No allocation found.
    Infeasible,
    /// Exact method proved infeasibility; the equal split was used instead.
    Fallback,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::Feasible => "feasible",
            RunStatus::Partial => "partial",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    /// Monte Carlo trials per SP; 0 skips simulation.
    pub trials: u64,
    pub seed: u64,
    pub quadrature: QuadratureConfig,
    /// Replaces every SP's UE intensity when set.
    pub intensity: Option<f64>,
    pub max_nodes: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coefficient_cache: Option<PathBuf>,
    /// Include wall time in the report.
    #[serde(skip)]
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Exact,
            trials: 100_000,
            seed: 1,
            quadrature: QuadratureConfig::default(),
            intensity: None,
            max_nodes: BnbOptions::default().max_nodes,
            coefficient_cache: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
}

impl From<CoverageEstimate> for McSummary {
    fn from(e: CoverageEstimate) -> Self {
        Self {
            mean: round6(e.mean),
            ci_low: round6(e.ci_low),
            ci_high: round6(e.ci_high),
            trials: e.trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpReport {
    pub sp_id: String,
    pub min_rate_bps: f64,
    pub beta: f64,
    pub ue_intensity: f64,
    pub analytic: f64,
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sequential_status: Option<SpStatus>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub monte_carlo: Option<McSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub path: ExactPath,
    pub nodes: u64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub method: Method,
    pub status: RunStatus,
    pub fallback: bool,
    pub coverage_model: AssociationMode,
    pub allocation: Option<Allocation>,
    pub cost: Option<f64>,
    pub leased_count: Option<usize>,
    pub satisfied_count: usize,
    pub sps: Vec<SpReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solver: Option<SolverSummary>,
    /// Greedy: BS indices in the order they were leased.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub greedy_order: Option<Vec<usize>>,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Exit code of the command that produced the report.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Infeasible | RunStatus::Fallback => 1,
            _ => 0,
        }
    }
}

/// Runs `cfg.method` on `scenario`.
pub fn solve(scenario: &Scenario, cfg: &RunConfig) -> Result<RunReport, Error> {
    let start = Instant::now();
    cfg.quadrature.validate()?;
    let sc = match cfg.intensity {
        Some(l) => {
            let s = scenario.with_intensity(l);
            s.validate()?;
            s
        }
        None => scenario.clone(),
    };
    let engine = CoverageEngine::new(&sc, cfg.quadrature)?;
    let mut solver = None;
    let mut greedy_order = None;
    let mut seq_status = None;
    let mut fallback = false;
    let allocation = match cfg.method {
        Method::Exact => {
            let cached;
            let coeffs = match &cfg.coefficient_cache {
                Some(path)
                    if crate::solver::exact_path(&sc, &cfg.quadrature) == ExactPath::Milp =>
                {
                    let (c, hit) = load_or_compute(&engine, path)?;
                    log::info!("coefficient cache {}", if hit { "hit" } else { "miss" });
                    cached = c;
                    Some(&cached)
                }
                _ => None,
            };
            let opts = BnbOptions {
                max_nodes: cfg.max_nodes,
                ..BnbOptions::default()
            };
            let sol = solve_exact(&engine, coeffs, &opts, None)?;
            solver = Some(SolverSummary {
                path: sol.path,
                nodes: sol.result.nodes,
                gap: sol.result.gap,
            });
            match sol.result.status {
                SolveStatus::Optimal => sol.result.allocation,
                SolveStatus::Infeasible => {
                    fallback = true;
                    Some(equal_split(&sc))
                }
            }
        }
        Method::Greedy => {
            let out = greedy_allocate(&engine)?;
            greedy_order = Some(out.rounds.iter().map(|r| r.added).collect());
            out.allocation
        }
        Method::Sequential => {
            let out = sequential_allocate(&engine)?;
            seq_status = Some(out.statuses);
            Some(out.allocation)
        }
        Method::EqualSplit => Some(equal_split(&sc)),
    };

    let association = cfg.method.association();
    let mut sps = Vec::with_capacity(sc.num_sp());
    for (s, d) in sc.demands.iter().enumerate() {
        let (analytic, mc) = match &allocation {
            Some(a) => {
                let analytic = match association {
                    AssociationMode::Voronoi => engine.voronoi_rate_coverage(a, s)?,
                    AssociationMode::Circular => engine.network_coverage(a, s)?,
                };
                let mc = if cfg.trials > 0 {
                    let tc =
                        TrialConfig::new(cfg.trials, cfg.seed.wrapping_add(s as u64), association);
                    Some(McSummary::from(simulate_coverage(&sc, a, s, &tc)?))
                } else {
                    None
                };
                (analytic, mc)
            }
            None => (0.0, None),
        };
        let satisfied = match &seq_status {
            Some(st) => st[s] == SpStatus::Satisfied,
            None => allocation.is_some() && analytic >= d.min_coverage_prob - SATISFIED_TOL,
        };
        sps.push(SpReport {
            sp_id: d.sp_id.clone(),
            min_rate_bps: d.min_rate_bps,
            beta: d.min_coverage_prob,
            ue_intensity: d.ue_intensity,
            analytic: round6(analytic),
            satisfied,
            sequential_status: seq_status.as_ref().map(|st| st[s]),
            monte_carlo: mc,
        });
    }
    let satisfied_count = sps.iter().filter(|r| r.satisfied).count();
    let status = match (&allocation, cfg.method) {
        (None, _) => RunStatus::Infeasible,
        (Some(_), _) if fallback => RunStatus::Fallback,
        (Some(_), Method::Exact) => RunStatus::Optimal,
        (Some(_), _) if satisfied_count == sps.len() => RunStatus::Feasible,
        _ => RunStatus::Partial,
    };
    Ok(RunReport {
        scenario_name: sc.name.clone(),
        scenario_hash: scenario.content_hash(),
        method: cfg.method,
        status,
        fallback,
        coverage_model: association,
        cost: allocation.as_ref().map(|a| a.cost(&sc)),
        leased_count: allocation
            .as_ref()
            .map(|a| a.leased.iter().filter(|&&l| l).count()),
        allocation,
        satisfied_count,
        sps,
        solver,
        greedy_order,
        config: cfg.clone(),
        wall_time_s: cfg.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

// ---- sweep ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub analytic: f64,
    pub beta: f64,
    pub satisfied: bool,
    pub monte_carlo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub intensity: f64,
    pub method: Method,
    pub status: Option<RunStatus>,
    pub cost: Option<f64>,
    pub leased_count: Option<usize>,
    pub satisfied_count: Option<usize>,
    pub fallback: bool,
    /// Per SP; `None` when the run produced no allocation.
    pub coverage: Vec<Option<SweepCell>>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn from_report(intensity: f64, r: &RunReport) -> Self {
        SweepRow {
            intensity,
            method: r.method,
            status: Some(r.status),
            cost: r.cost,
            leased_count: r.leased_count,
            satisfied_count: Some(r.satisfied_count),
            fallback: r.fallback,
            coverage: r
                .sps
                .iter()
                .map(|s| {
                    r.allocation.as_ref().map(|_| SweepCell {
                        analytic: s.analytic,
                        beta: s.beta,
                        satisfied: s.satisfied,
                        monte_carlo: s.monte_carlo.as_ref().map(|m| m.mean),
                    })
                })
                .collect(),
            error: None,
        }
    }
}

/// Solves the scenario at every intensity with every method. A failing run
/// is recorded in its row and the sweep continues.
pub fn sweep(
    scenario: &Scenario,
    intensities: &[f64],
    methods: &[Method],
    cfg: &RunConfig,
) -> Result<Vec<SweepRow>, Error> {
    if intensities.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(
            "intensities must be positive and finite".into(),
        ));
    }
    if intensities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "intensities must be strictly ascending".into(),
        ));
    }
    let mut rows = Vec::with_capacity(intensities.len() * methods.len());
    for &l in intensities {
        for &m in methods {
            let run = RunConfig {
                method: m,
                intensity: Some(l),
                ..cfg.clone()
            };
            let row = match solve(scenario, &run) {
                Ok(r) => SweepRow::from_report(l, &r),
                Err(e) => SweepRow {
                    intensity: l,
                    method: m,
                    status: None,
                    cost: None,
                    leased_count: None,
                    satisfied_count: None,
                    fallback: false,
                    coverage: vec![None; scenario.num_sp()],
                    error: Some(e.to_string()),
                },
            };
            log::info!("sweep λ={l} {m}: {:?}", row.status);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Header of the sweep CSV for `scenario`.
pub fn sweep_header(scenario: &Scenario) -> Vec<String> {
    let mut h: Vec<String> = [
        "intensity_per_km2",
        "method",
        "status",
        "cost",
        "leased_count",
        "satisfied_count",
        "fallback",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for d in &scenario.demands {
        h.push(format!("cov_{}", d.sp_id));
        h.push(format!("beta_{}", d.sp_id));
        h.push(format!("sat_{}", d.sp_id));
        h.push(format!("mc_{}", d.sp_id));
    }
    h.push("error".into());
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes sweep rows as CSV. Probabilities carry six decimals.
pub fn write_sweep_csv<W: Write>(
    scenario: &Scenario,
    rows: &[SweepRow],
    out: W,
) -> Result<(), Error> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sweep_header(scenario)).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            r.intensity.to_string(),
            r.method.to_string(),
            opt(r.status.map(RunStatus::as_str)),
            opt(r.cost),
            opt(r.leased_count),
            opt(r.satisfied_count),
            r.fallback.to_string(),
        ];
        for c in &r.coverage {
            match c {
                Some(c) => {
                    rec.push(format!("{:.6}", c.analytic));
                    rec.push(c.beta.to_string());
                    rec.push(c.satisfied.to_string());
                    rec.push(opt(c.monte_carlo.map(|m| format!("{m:.6}"))));
                }
                None => rec.extend([String::new(), String::new(), String::new(), String::new()]),
            }
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

// ---- validate ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpValidation {
    pub sp_id: String,
    pub analytic: f64,
    pub monte_carlo: McSummary,
    pub abs_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario_hash: String,
    pub coverage_model: AssociationMode,
    pub tolerance: f64,
    pub invariant_violations: Vec<String>,
    pub sps: Vec<SpValidation>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Compares analytic and simulated coverage of every SP under `alloc`.
/// Invariant violations fail the report without running the comparison.
pub fn validate(
    scenario: &Scenario,
    alloc: &Allocation,
    association: AssociationMode,
    trials: u64,
    seed: u64,
    quadrature: QuadratureConfig,
) -> Result<ValidationReport, Error> {
    alloc
        .check_dimensions(scenario)
        .map_err(Error::AllocationMismatch)?;
    let violations = match association {
        AssociationMode::Voronoi => alloc.slice_violations(INVARIANT_TOL),
        AssociationMode::Circular => alloc.violations(INVARIANT_TOL),
    };
    let mut sps = Vec::new();
    if violations.is_empty() {
        let engine = CoverageEngine::new(scenario, quadrature)?;
        for (s, d) in scenario.demands.iter().enumerate() {
            let analytic = match association {
                AssociationMode::Voronoi => engine.voronoi_rate_coverage(alloc, s)?,
                AssociationMode::Circular => engine.network_coverage(alloc, s)?,
            };
            let tc = TrialConfig::new(trials, seed.wrapping_add(s as u64), association);
            let mc = simulate_coverage(scenario, alloc, s, &tc)?;
            let diff = (analytic - mc.mean).abs();
            sps.push(SpValidation {
                sp_id: d.sp_id.clone(),
                analytic: round6(analytic),
                monte_carlo: mc.into(),
                abs_diff: round6(diff),
                pass: diff <= VALIDATION_TOL,
            });
        }
    }
    let pass = violations.is_empty() && sps.iter().all(|s| s.pass);
    Ok(ValidationReport {
        scenario_hash: scenario.content_hash(),
        coverage_model: association,
        tolerance: VALIDATION_TOL,
        invariant_violations: violations,
        sps,
        pass,
    })
}

/// Reads an allocation from JSON: either a bare allocation or a run report
/// carrying one.
pub fn parse_allocation(text: &str) -> Result<Allocation, Error> {
    if let Ok(a) = serde_json::from_str::<Allocation>(text) {
        return Ok(a);
    }
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::AllocationMismatch(e.to_string()))?;
    match v.get("allocation") {
        Some(a) if !a.is_null() => {
            serde_json::from_value(a.clone()).map_err(|e| Error::AllocationMismatch(e.to_string()))
        }
        _ => Err(Error::AllocationMismatch(
            "expected an allocation object with 'leased' and 'slices'".into(),
        )),
    }
}
