//! Non-exact allocation paths: greedy leasing, priority-ordered sequential
//! slicing over a fixed lease set, and the equal-split fallback.

use serde::{Deserialize, Serialize};

use crate::coverage::{ActiveSet, CoverageEngine};
use crate::error::{Error, SolverError};
use crate::milp::{MilpModel, Relation, VarKind};
use crate::scenario::{Allocation, Scenario};
use crate::solver::{coverage_matrix, solve_delta_lp, solve_lp, LpStatus};

/// Slack used when deciding that a coverage target has been reached.
const TARGET_TOL: f64 = 1e-9;

// ---- greedy -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRound {
    pub added: usize,
    /// Marginal capped coverage per unit cost.
    pub score: f64,
    /// Capped coverage `Σ_s min(β_s, cov_s)` after adding the BS.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    /// `None` when every BS is leased and some target is still unmet.
    pub allocation: Option<Allocation>,
    pub cost: Option<f64>,
    pub rounds: Vec<GreedyRound>,
}

/// `max Σ_s t_s` with `t_s ≤ β_s` and `t_s ≤ Σ_b cov_bs δ_bs` over the BSs
/// in `leased`: the coverage that counts towards unmet targets.
fn capped_coverage(
    scenario: &Scenario,
    cov: &[Vec<f64>],
    leased: ActiveSet,
) -> Result<f64, SolverError> {
    let ns = scenario.num_sp();
    let mut model = MilpModel::default();
    let t: Vec<usize> = scenario
        .demands
        .iter()
        .enumerate()
        .map(|(s, d)| {
            model.add_var(
                format!("t_{s}"),
                VarKind::Continuous,
                0.0,
                d.min_coverage_prob,
            )
        })
        .collect();
    model.objective = t.iter().map(|&v| (v, -1.0)).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = t.iter().map(|&v| vec![(v, 1.0)]).collect();
    for b in leased.iter() {
        let vars: Vec<usize> = (0..ns)
            .map(|s| model.add_var(format!("d_{b}_{s}"), VarKind::Continuous, 0.0, 1.0))
            .collect();
        model.add_constraint(
            format!("util_{b}"),
            vars.iter().map(|&v| (v, 1.0)).collect(),
            Relation::Le,
            1.0,
        )?;
        for (s, &v) in vars.iter().enumerate() {
            if cov[b][s] != 0.0 {
                rows[s].push((v, -cov[b][s]));
            }
        }
    }
    for (s, row) in rows.into_iter().enumerate() {
        model.add_constraint(format!("cap_{s}"), row, Relation::Le, 0.0)?;
    }
    let sol = solve_lp(&model)?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.objective),
        other => Err(SolverError::Numerical(format!(
            "capped coverage LP ended {other:?}"
        ))),
    }
}

/// Greedy leasing: repeatedly adds the BS with the largest gain in capped
/// coverage per unit cost (ties to the lower index) until the slice LP over
/// the leased set meets every target.
pub fn greedy_allocate(engine: &CoverageEngine) -> Result<GreedyOutcome, Error> {
    let sc = engine.scenario();
    let nb = sc.num_bs();
    let target: f64 = sc.demands.iter().map(|d| d.min_coverage_prob).sum();
    let mut leased = ActiveSet::EMPTY;
    let mut value = 0.0;
    let mut rounds = Vec::new();
    loop {
        if value >= target - TARGET_TOL {
            let cov = coverage_matrix(engine, leased, leased)?;
            if let Some(alloc) = solve_delta_lp(sc, &cov, leased)? {
                return Ok(GreedyOutcome {
                    cost: Some(alloc.cost(sc)),
                    allocation: Some(alloc),
                    rounds,
                });
            }
        }
        if leased.len() == nb {
            return Ok(GreedyOutcome {
                allocation: None,
                cost: None,
                rounds,
            });
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for b in (0..nb).filter(|&b| !leased.contains(b)) {
            let cand = leased.with(b);
            let v = capped_coverage(sc, &coverage_matrix(engine, cand, cand)?, cand)?;
            let gain = v - value;
            let cost = sc.base_stations[b].lease_cost;
            let score = if cost > 0.0 {
                gain / cost
            } else if gain > 0.0 {
                f64::INFINITY
            } else {
                gain
            };
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((b, score, v));
            }
        }
        let (b, score, v) = best.expect("an unleased BS remains");
        leased = leased.with(b);
        value = v;
        rounds.push(GreedyRound {
            added: b,
            score,
            value,
        });
    }
}

// ---- sequential (priority-ordered) -----------------------------------------

/// Unused fraction of each BS's capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCapacity {
    pub avail: Vec<f64>,
}

impl ResidualCapacity {
    pub fn full(num_bs: usize) -> Self {
        Self {
            avail: vec![1.0; num_bs],
        }
    }

    pub fn total(&self) -> f64 {
        self.avail.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.avail.iter().all(|a| (0.0..=1.0).contains(a))
    }
}

/// Minimum total slice for SP `s` under nearest-BS association:
/// `min Σ_b δ_b` s.t. `Σ_b v_b δ_b ≥ β_s`, `0 ≤ δ_b ≤ avail_b`, where `v_b`
/// are the Voronoi coverage terms. `None` when the residual cannot meet β_s.
pub fn solve_problem2(
    engine: &CoverageEngine,
    s: usize,
    residual: &ResidualCapacity,
) -> Result<Option<Vec<f64>>, Error> {
    let sc = engine.scenario();
    if residual.avail.len() != sc.num_bs() || !residual.is_valid() {
        return Err(Error::AllocationMismatch(
            "residual capacity must hold one value in [0, 1] per base station".into(),
        ));
    }
    let terms = engine.voronoi_terms(s)?;
    let beta = sc.demands[s].min_coverage_prob;
    let mut model = MilpModel::default();
    let vars: Vec<usize> = residual
        .avail
        .iter()
        .enumerate()
        .map(|(b, &a)| model.add_var(format!("d_{b}"), VarKind::Continuous, 0.0, a))
        .collect();
    model.objective = vars.iter().map(|&v| (v, 1.0)).collect();
    let row = vars
        .iter()
        .zip(&terms)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&v, &t)| (v, t))
        .collect();
    model.add_constraint("cover", row, Relation::Ge, beta)?;
    let sol = solve_lp(&model).map_err(Error::from)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(
            sol.values
                .iter()
                .zip(&residual.avail)
                .map(|(&d, &a)| if d > 1e-12 { d.clamp(0.0, a) } else { 0.0 })
                .collect(),
        ),
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpStatus {
    Satisfied,
    PartiallyServed,
    Unserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialStep {
    pub sp: usize,
    pub avail_before: Vec<f64>,
    pub avail_after: Vec<f64>,
    pub granted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialOutcome {
    /// Per SP, in scenario order.
    pub statuses: Vec<SpStatus>,
    /// Every BS is leased; some may carry no slice.
    pub allocation: Allocation,
    /// Satisfied SPs in the order they were served.
    pub satisfied: Vec<usize>,
    /// Achieved nearest-BS coverage per SP.
    pub coverage: Vec<f64>,
    pub steps: Vec<SequentialStep>,
}

impl SequentialOutcome {
    pub fn satisfied_count(&self) -> usize {
        self.satisfied.len()
    }
}

/// Serves SPs in rank order from the remaining capacity of the full BS set.
/// The first SP whose target cannot be met receives all remaining capacity
/// and the SPs after it get nothing.
pub fn sequential_allocate(engine: &CoverageEngine) -> Result<SequentialOutcome, Error> {
    let sc = engine.scenario();
    let (nb, ns) = (sc.num_bs(), sc.num_sp());
    let mut alloc = Allocation::empty(nb, ns);
    alloc.leased = vec![true; nb];
    let mut residual = ResidualCapacity::full(nb);
    let mut statuses = vec![SpStatus::Unserved; ns];
    let mut satisfied = Vec::new();
    let mut steps = Vec::new();
    for s in sc.priority_order() {
        if residual.total() <= TARGET_TOL {
            break;
        }
        let before = residual.avail.clone();
        let (granted, status) = match solve_problem2(engine, s, &residual)? {
            Some(delta) => (delta, SpStatus::Satisfied),
            None => (residual.avail.clone(), SpStatus::PartiallyServed),
        };
        for b in 0..nb {
            alloc.slices[b][s] = granted[b];
            residual.avail[b] = (residual.avail[b] - granted[b]).max(0.0);
        }
        statuses[s] = status;
        steps.push(SequentialStep {
            sp: s,
            avail_before: before,
            avail_after: residual.avail.clone(),
            granted,
        });
        if status == SpStatus::Satisfied {
            satisfied.push(s);
        } else {
            break;
        }
    }
    let coverage = (0..ns)
        .map(|s| engine.voronoi_rate_coverage(&alloc, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SequentialOutcome {
        statuses,
        allocation: alloc,
        satisfied,
        coverage,
        steps,
    })
}

// ---- equal split -------------------------------------------------------------

/// Leases every BS and gives each SP the same share `1/|S|`.
pub fn equal_split(scenario: &Scenario) -> Allocation {
    let (nb, ns) = (scenario.num_bs(), scenario.num_sp());
    let share = 1.0 / ns as f64;
    Allocation {
        leased: vec![true; nb],
        slices: vec![vec![share; ns]; nb],
    }
}
