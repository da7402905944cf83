//! Bounded-variable primal simplex, branch and bound over the lease
//! binaries, and a brute-force subset-enumeration oracle.
//!
//! The simplex keeps a dense Tucker tableau `x_B = T x_N`. Every constraint
//! row gets a logical variable equal to its activity, bounded by the row's
//! relation, so the homogeneous system `A x − s = 0` needs no right-hand
//! side and the all-logical basis is always available as a cold start.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::coefficients::{precompute_coefficients, CoverageCoefficients};
use crate::coverage::{ActiveSet, CoverageEngine};
use crate::error::SolverError;
use crate::milp::{
    build_problem1, extract_allocation, MilpModel, Relation, VarKind, INTEGRALITY_TOL,
};
use crate::scenario::{Allocation, Scenario};

/// Primal feasibility tolerance of the simplex.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Residual allowed when an optimal point is checked against the model.
pub const VERIFY_TOL: f64 = 1e-8;
/// Largest dense tableau (rows × columns) the simplex will allocate.
pub const DENSE_LIMIT: usize = 10_000_000;
/// Largest instance the enumeration oracle accepts.
pub const MAX_ENUMERATION_BS: usize = 20;

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 50;
const WARM_START_LIMIT: usize = 2_000_000;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful when optimal).
    pub values: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
struct Simplex {
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Variable held in each tableau row.
    basis: Vec<usize>,
    /// Variable held in each tableau column.
    nonbasic: Vec<usize>,
    tab: Vec<f64>,
    x: Vec<f64>,
    pivots: usize,
}

fn resting_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

impl Simplex {
    fn new(model: &MilpModel, lower: &[f64], upper: &[f64]) -> Result<Self, SolverError> {
        let n = model.num_vars();
        let m = model.constraints.len();
        let size = n.saturating_mul(m);
        if size > DENSE_LIMIT {
            return Err(SolverError::SizeGuard {
                size,
                max: DENSE_LIMIT,
            });
        }
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        let mut cost = vec![0.0; n + m];
        for &(v, c) in &model.objective {
            cost[v] += c;
        }
        let mut tab = vec![0.0; m * n];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(v, a) in &c.terms {
                tab[i * n + v] += a;
            }
            let (l, h) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
                Relation::Eq => (c.rhs, c.rhs),
            };
            lo.push(l);
            hi.push(h);
        }
        let x = (0..n + m).map(|j| resting_value(lo[j], hi[j])).collect();
        let mut s = Self {
            n,
            m,
            lower: lo,
            upper: hi,
            cost,
            basis: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
            tab,
            x,
            pivots: 0,
        };
        s.refresh_basics();
        Ok(s)
    }

    fn set_structural_bounds(&mut self, lower: &[f64], upper: &[f64]) {
        let mut is_basic = vec![false; self.n + self.m];
        for &v in &self.basis {
            is_basic[v] = true;
        }
        for j in 0..self.n {
            self.lower[j] = lower[j];
            self.upper[j] = upper[j];
            if !is_basic[j] {
                let v = self.x[j];
                let at_bound = v == lower[j] || v == upper[j];
                self.x[j] = if at_bound {
                    v
                } else if v < lower[j] {
                    lower[j]
                } else if v > upper[j] {
                    upper[j]
                } else {
                    resting_value(lower[j], upper[j])
                };
            }
        }
        self.pivots = 0;
        self.refresh_basics();
    }

    fn refresh_basics(&mut self) {
        let n = self.n;
        let active: Vec<(usize, f64)> = (0..n)
            .map(|k| (k, self.x[self.nonbasic[k]]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        for i in 0..self.m {
            let row = &self.tab[i * n..(i + 1) * n];
            self.x[self.basis[i]] = active.iter().map(|&(k, v)| row[k] * v).sum();
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let n = self.n;
        let p = self.tab[r * n + c];
        let pivot_row: Vec<f64> = {
            let row = &mut self.tab[r * n..(r + 1) * n];
            for (k, v) in row.iter_mut().enumerate() {
                *v = if k == c { 1.0 / p } else { -*v / p };
            }
            row.to_vec()
        };
        let nz: Vec<usize> = (0..n).filter(|&k| k != c && pivot_row[k] != 0.0).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.tab[i * n..(i + 1) * n];
            let f = row[c];
            if f == 0.0 {
                continue;
            }
            for &k in &nz {
                row[k] += f * pivot_row[k];
            }
            row[c] = f / p;
        }
        std::mem::swap(&mut self.basis[r], &mut self.nonbasic[c]);
    }

    fn run(&mut self, budget: usize) -> Result<LpStatus, SolverError> {
        let (m, n) = (self.m, self.n);
        let mut degenerate = 0usize;
        let mut d = vec![0.0; n];
        let mut cb = vec![0.0; m];
        loop {
            self.refresh_basics();
            let mut phase1 = false;
            for i in 0..m {
                let v = self.basis[i];
                let x = self.x[v];
                cb[i] = if x < self.lower[v] - FEASIBILITY_TOL {
                    phase1 = true;
                    -1.0
                } else if x > self.upper[v] + FEASIBILITY_TOL {
                    phase1 = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !phase1 {
                for i in 0..m {
                    cb[i] = self.cost[self.basis[i]];
                }
            }
            for k in 0..n {
                d[k] = if phase1 {
                    0.0
                } else {
                    self.cost[self.nonbasic[k]]
                };
            }
            for i in 0..m {
                if cb[i] != 0.0 {
                    let row = &self.tab[i * n..(i + 1) * n];
                    for (dk, a) in d.iter_mut().zip(row) {
                        *dk += cb[i] * a;
                    }
                }
            }

            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for k in 0..n {
                let v = self.nonbasic[k];
                let x = self.x[v];
                let dir = if d[k] < -DUAL_TOL && x < self.upper[v] - FEASIBILITY_TOL {
                    1.0
                } else if d[k] > DUAL_TOL && x > self.lower[v] + FEASIBILITY_TOL {
                    -1.0
                } else {
                    continue;
                };
                let better = match enter {
                    None => true,
                    Some((kk, _)) if bland => v < self.nonbasic[kk],
                    Some(_) => d[k].abs() > best,
                };
                if better {
                    enter = Some((k, dir));
                    best = d[k].abs();
                }
            }
            let Some((k, dir)) = enter else {
                return Ok(if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                });
            };
            if self.pivots >= budget {
                return Err(SolverError::Numerical(format!(
                    "pivot budget of {budget} exhausted"
                )));
            }

            let v_in = self.nonbasic[k];
            let mut step = self.upper[v_in] - self.lower[v_in];
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_abs = 0.0;
            for i in 0..m {
                let a = self.tab[i * n + k];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = dir * a;
                let v = self.basis[i];
                let (x, lo, hi) = (self.x[v], self.lower[v], self.upper[v]);
                let (limit, target) = if rate > 0.0 {
                    if x < lo - FEASIBILITY_TOL {
                        ((lo - x) / rate, lo)
                    } else if hi.is_finite() && x <= hi + FEASIBILITY_TOL {
                        ((hi - x).max(0.0) / rate, hi)
                    } else {
                        continue;
                    }
                } else if x > hi + FEASIBILITY_TOL {
                    ((hi - x) / rate, hi)
                } else if lo.is_finite() && x >= lo - FEASIBILITY_TOL {
                    ((lo - x).min(0.0) / rate, lo)
                } else {
                    continue;
                };
                let replace = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    match leave {
                        None => false,
                        Some((rr, _)) if bland => v < self.basis[rr],
                        Some(_) => a.abs() > leave_abs,
                    }
                } else {
                    false
                };
                if replace {
                    step = limit;
                    leave = Some((i, target));
                    leave_abs = a.abs();
                }
            }
            if !step.is_finite() {
                if phase1 {
                    return Err(SolverError::Numerical(
                        "unbounded ray while minimising infeasibility".into(),
                    ));
                }
                return Ok(LpStatus::Unbounded);
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivots += 1;
            match leave {
                None => {
                    self.x[v_in] = if dir > 0.0 {
                        self.upper[v_in]
                    } else {
                        self.lower[v_in]
                    };
                }
                Some((r, target)) => {
                    self.x[v_in] += dir * step;
                    let v_out = self.basis[r];
                    self.pivot(r, k);
                    self.x[v_out] = target;
                }
            }
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }
}

fn pivot_budget(model: &MilpModel) -> usize {
    50_000 + 50 * (model.num_vars() + model.constraints.len())
}

fn verify(model: &MilpModel, lower: &[f64], upper: &[f64], values: &[f64]) -> bool {
    let bounds_ok = values
        .iter()
        .zip(lower.iter().zip(upper))
        .all(|(&v, (&lo, &hi))| v >= lo - VERIFY_TOL && v <= hi + VERIFY_TOL);
    bounds_ok
        && model
            .constraints
            .iter()
            .all(|c| c.is_satisfied(values, VERIFY_TOL))
}

/// Solves the LP with the given structural bounds, optionally warm-started
/// from a previous tableau. Returns the solution and the final tableau.
fn solve_bounded(
    model: &MilpModel,
    lower: &[f64],
    upper: &[f64],
    warm: Option<Simplex>,
) -> Result<(LpSolution, Option<Simplex>), SolverError> {
    let infeasible = |pivots| LpSolution {
        status: LpStatus::Infeasible,
        values: Vec::new(),
        objective: f64::NAN,
        pivots,
    };
    if lower.iter().zip(upper).any(|(l, h)| l > h) {
        return Ok((infeasible(0), None));
    }
    let budget = pivot_budget(model);
    let mut sx = match warm {
        Some(mut s) => {
            s.set_structural_bounds(lower, upper);
            s
        }
        None => Simplex::new(model, lower, upper)?,
    };
    let mut cold = false;
    loop {
        let status = sx.run(budget);
        let retry = match status {
            Ok(LpStatus::Optimal) => {
                let values = sx.structural_values();
                if verify(model, lower, upper, &values) {
                    let objective = model.objective_value(&values);
                    let sol = LpSolution {
                        status: LpStatus::Optimal,
                        values,
                        objective,
                        pivots: sx.pivots,
                    };
                    return Ok((sol, Some(sx)));
                }
                "optimal point fails verification".to_string()
            }
            Ok(LpStatus::Infeasible) => return Ok((infeasible(sx.pivots), Some(sx))),
            Ok(LpStatus::Unbounded) => {
                let sol = LpSolution {
                    status: LpStatus::Unbounded,
                    values: Vec::new(),
                    objective: f64::NEG_INFINITY,
                    pivots: sx.pivots,
                };
                return Ok((sol, None));
            }
            Err(e) => e.to_string(),
        };
        if cold {
            return Err(SolverError::Numerical(retry));
        }
        log::debug!("simplex restart from the slack basis: {retry}");
        cold = true;
        sx = Simplex::new(model, lower, upper)?;
    }
}

/// Solves the continuous relaxation of `model`.
pub fn solve_lp(model: &MilpModel) -> Result<LpSolution, SolverError> {
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    Ok(solve_bounded(model, &lower, &upper, None)?.0)
}

// ---- branch and bound -----------------------------------------------------

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub max_nodes: u64,
    pub time_limit: Option<Duration>,
    /// Every this many nodes the open node with the best bound is processed next.
    pub restart_interval: u64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            max_nodes: 1_000_000,
            time_limit: None,
            restart_interval: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbResult {
    pub status: SolveStatus,
    pub allocation: Option<Allocation>,
    /// Model variable values of the incumbent (empty on the direct path).
    pub values: Vec<f64>,
    pub cost: Option<f64>,
    pub nodes: u64,
    /// Proven optimality gap; zero whenever the search completes.
    pub gap: f64,
    pub root_bound: Option<f64>,
    /// Relaxation bounds of the nodes from the root to the incumbent leaf.
    pub incumbent_path_bounds: Vec<f64>,
}

/// One line of the optional solve log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLog {
    pub node: u64,
    pub depth: usize,
    /// Relaxation bound, `None` when the node is infeasible.
    pub bound: Option<f64>,
    pub incumbent: Option<f64>,
}

impl fmt::Display for NodeLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        write!(
            f,
            "node {} depth {} bound {} incumbent {}",
            self.node,
            self.depth,
            opt(self.bound),
            opt(self.incumbent)
        )
    }
}

pub type SolveLog<'a> = Option<&'a mut dyn FnMut(&NodeLog)>;

struct Node {
    fixes: Vec<(usize, f64)>,
    parent_bound: f64,
    warm: Option<Arc<Simplex>>,
    path: Vec<f64>,
}

struct Budget {
    start: Instant,
    opts: BnbOptions,
}

impl Budget {
    fn check(&self, nodes: u64) -> Result<(), SolverError> {
        let late = self
            .opts
            .time_limit
            .is_some_and(|t| self.start.elapsed() > t);
        if nodes >= self.opts.max_nodes || late {
            return Err(SolverError::BudgetExceeded { nodes });
        }
        Ok(())
    }
}

struct Incumbent {
    cost: f64,
    values: Vec<f64>,
    path: Vec<f64>,
}

fn integer_costs(model: &MilpModel) -> bool {
    model
        .objective
        .iter()
        .all(|&(v, c)| c == 0.0 || (model.variables[v].kind == VarKind::Binary && c.fract() == 0.0))
}

fn prunable(bound: f64, incumbent: Option<&Incumbent>, integral: bool) -> bool {
    let Some(inc) = incumbent else {
        return false;
    };
    let eff = if integral {
        (bound - COST_TOL).ceil()
    } else {
        bound
    };
    eff >= inc.cost - COST_TOL
}

fn branching_variable(model: &MilpModel, values: &[f64]) -> Option<usize> {
    let obj: Vec<f64> = {
        let mut c = vec![0.0; model.num_vars()];
        for &(v, a) in &model.objective {
            c[v] += a;
        }
        c
    };
    let mut best: Option<(usize, f64)> = None;
    for (v, var) in model.variables.iter().enumerate() {
        if var.kind != VarKind::Binary {
            continue;
        }
        let x = values[v];
        let frac = (x - x.floor()).min(x.ceil() - x);
        if frac <= INTEGRALITY_TOL {
            continue;
        }
        let better = match best {
            None => true,
            Some((bv, bf)) => frac > bf + 1e-12 || ((frac - bf).abs() <= 1e-12 && obj[v] > obj[bv]),
        };
        if better {
            best = Some((v, frac));
        }
    }
    best.map(|(v, _)| v)
}

/// Branch and bound over the binary variables of `model`. When `map` is
/// given, the incumbent is also returned as an [`Allocation`].
pub fn branch_and_bound(
    model: &MilpModel,
    map: Option<&crate::milp::LinearizationMap>,
    opts: &BnbOptions,
    mut log: SolveLog<'_>,
) -> Result<BnbResult, SolverError> {
    let budget = Budget {
        start: Instant::now(),
        opts: opts.clone(),
    };
    let base_lo: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let base_hi: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let integral = integer_costs(model);
    let mut stack = vec![Node {
        fixes: Vec::new(),
        parent_bound: f64::NEG_INFINITY,
        warm: None,
        path: Vec::new(),
    }];
    let mut nodes = 0u64;
    let mut root_bound = None;
    let mut incumbent: Option<Incumbent> = None;
    let mut since_restart = 0u64;
    while !stack.is_empty() {
        if since_restart >= opts.restart_interval.max(1) {
            since_restart = 0;
            let best = (0..stack.len())
                .min_by(|&a, &b| stack[a].parent_bound.total_cmp(&stack[b].parent_bound))
                .expect("stack is non-empty");
            let node = stack.remove(best);
            stack.push(node);
        }
        let node = stack.pop().expect("stack is non-empty");
        if prunable(node.parent_bound, incumbent.as_ref(), integral) {
            continue;
        }
        budget.check(nodes)?;
        nodes += 1;
        since_restart += 1;
        let (mut lo, mut hi) = (base_lo.clone(), base_hi.clone());
        for &(v, val) in &node.fixes {
            lo[v] = val;
            hi[v] = val;
        }
        let warm = node.warm.as_deref().cloned();
        let (sol, state) = solve_bounded(model, &lo, &hi, warm)?;
        let depth = node.fixes.len();
        let mut entry = NodeLog {
            node: nodes,
            depth,
            bound: None,
            incumbent: incumbent.as_ref().map(|i| i.cost),
        };
        match sol.status {
            LpStatus::Infeasible => {
                if let Some(cb) = log.as_mut() {
                    cb(&entry);
                }
                continue;
            }
            LpStatus::Unbounded => {
                return Err(SolverError::Numerical("relaxation is unbounded".into()));
            }
            LpStatus::Optimal => {}
        }
        let bound = sol.objective;
        if nodes == 1 {
            root_bound = Some(bound);
        }
        entry.bound = Some(bound);
        if let Some(cb) = log.as_mut() {
            cb(&entry);
        }
        if prunable(bound, incumbent.as_ref(), integral) {
            continue;
        }
        let mut path = node.path.clone();
        path.push(bound);
        match branching_variable(model, &sol.values) {
            None => {
                let better = incumbent.as_ref().is_none_or(|i| bound < i.cost - COST_TOL);
                if better {
                    incumbent = Some(Incumbent {
                        cost: bound,
                        values: sol.values,
                        path,
                    });
                }
            }
            Some(v) => {
                let keep_warm = model.num_vars() * model.constraints.len() <= WARM_START_LIMIT
                    && stack.len() < 64;
                let warm = if keep_warm { state.map(Arc::new) } else { None };
                for val in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((v, val));
                    stack.push(Node {
                        fixes,
                        parent_bound: bound,
                        warm: warm.clone(),
                        path: path.clone(),
                    });
                }
            }
        }
    }
    Ok(match incumbent {
        Some(inc) => {
            let allocation = match map {
                Some(map) => Some(extract_allocation(map, &inc.values)?),
                None => None,
            };
            BnbResult {
                status: SolveStatus::Optimal,
                allocation,
                values: inc.values,
                cost: Some(inc.cost),
                nodes,
                gap: 0.0,
                root_bound,
                incumbent_path_bounds: inc.path,
            }
        }
        None => BnbResult {
            status: SolveStatus::Infeasible,
            allocation: None,
            values: Vec::new(),
            cost: None,
            nodes,
            gap: 0.0,
            root_bound,
            incumbent_path_bounds: Vec::new(),
        },
    })
}

// ---- scenario-level exact solving ----------------------------------------

/// Which exact method handles a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactPath {
    /// Linearised MILP solved by LP-based branch and bound.
    Milp,
    /// Branching directly on the lease set with monotone coverage bounds.
    Direct,
}

/// Predicted dense size (rows × columns) of the linearised model.
pub fn predicted_milp_size(num_bs: usize, num_sp: usize) -> usize {
    if num_bs == 0 || num_bs > 40 {
        return usize::MAX;
    }
    let subsets = (1usize << (num_bs - 1)) - 1;
    let z = num_bs * num_sp * subsets;
    let y_count = (1usize << num_bs) - num_bs - 1;
    let y_rows: usize = (2..=num_bs).map(|k| binomial(num_bs, k) * (k + 1)).sum();
    let cols = num_bs + num_bs * num_sp + y_count + z;
    let rows = 3 * z + y_rows + num_bs + num_bs * num_sp + num_sp;
    rows.saturating_mul(cols)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

pub fn exact_path(scenario: &Scenario, cfg: &crate::QuadratureConfig) -> ExactPath {
    let nb = scenario.num_bs();
    if nb - 1 > cfg.max_expansion_size || predicted_milp_size(nb, scenario.num_sp()) > DENSE_LIMIT {
        ExactPath::Direct
    } else {
        ExactPath::Milp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub path: ExactPath,
    pub result: BnbResult,
}

/// Proven-optimal leasing and slicing under the disc coverage model.
/// `coeffs` may supply precomputed (e.g. cached) coefficients.
pub fn solve_exact(
    engine: &CoverageEngine,
    coeffs: Option<&CoverageCoefficients>,
    opts: &BnbOptions,
    log: SolveLog<'_>,
) -> Result<ExactSolution, SolverError> {
    let sc = engine.scenario();
    match exact_path(sc, engine.config()) {
        ExactPath::Milp => {
            let owned;
            let coeffs = match coeffs {
                Some(c) => c,
                None => {
                    owned = precompute_coefficients(engine)?;
                    &owned
                }
            };
            let (model, map) = build_problem1(sc, coeffs)?;
            let mut result = branch_and_bound(&model, Some(&map), opts, log)?;
            if let Some(a) = &result.allocation {
                result.cost = Some(a.cost(sc));
            }
            Ok(ExactSolution {
                path: ExactPath::Milp,
                result,
            })
        }
        ExactPath::Direct => Ok(ExactSolution {
            path: ExactPath::Direct,
            result: direct_branch_and_bound(engine, opts, log)?,
        }),
    }
}

/// Weighted coverage `(πq_b²/A)·Pr{covered}` of every (BS, SP) pair when the
/// BSs in `interferers` are leased; rows for BSs outside `avail` are zero.
pub fn coverage_matrix(
    engine: &CoverageEngine,
    avail: ActiveSet,
    interferers: ActiveSet,
) -> Result<Vec<Vec<f64>>, SolverError> {
    let sc = engine.scenario();
    let mut out = vec![vec![0.0; sc.num_sp()]; sc.num_bs()];
    for b in avail.iter().filter(|&b| b < sc.num_bs()) {
        let w = sc.disc_weight(b);
        for (s, slot) in out[b].iter_mut().enumerate() {
            *slot = w * engine.per_bs_coverage(b, s, interferers)?;
        }
    }
    Ok(out)
}

/// Minimum total slice meeting every SP's target with the BSs in `avail`:
/// `min Σδ` s.t. `Σ_s δ_bs ≤ 1`, `Σ_b cov_bs δ_bs ≥ β_s`, `0 ≤ δ ≤ 1`.
/// Returns `None` when infeasible.
pub fn solve_delta_lp(
    scenario: &Scenario,
    cov: &[Vec<f64>],
    avail: ActiveSet,
) -> Result<Option<Allocation>, SolverError> {
    let (nb, ns) = (scenario.num_bs(), scenario.num_sp());
    let mut model = MilpModel::default();
    let mut vars = vec![vec![None; ns]; nb];
    for b in avail.iter().filter(|&b| b < nb) {
        for s in 0..ns {
            let v = model.add_var(format!("d_{b}_{s}"), VarKind::Continuous, 0.0, 1.0);
            model.objective.push((v, 1.0));
            vars[b][s] = Some(v);
        }
        let terms = vars[b].iter().flatten().map(|&v| (v, 1.0)).collect();
        model.add_constraint(format!("util_{b}"), terms, Relation::Le, 1.0)?;
    }
    for (s, d) in scenario.demands.iter().enumerate() {
        let terms: Vec<(usize, f64)> = (0..nb)
            .filter_map(|b| vars[b][s].map(|v| (v, cov[b][s])))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        if terms.is_empty() {
            if d.min_coverage_prob > 0.0 {
                return Ok(None);
            }
            continue;
        }
        model.add_constraint(
            format!("cover_{s}"),
            terms,
            Relation::Ge,
            d.min_coverage_prob,
        )?;
    }
    let sol = solve_lp(&model)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let mut alloc = Allocation::empty(nb, ns);
    for b in 0..nb {
        for s in 0..ns {
            if let Some(v) = vars[b][s] {
                let val = sol.values[v].clamp(0.0, 1.0);
                if val > 1e-12 {
                    alloc.slices[b][s] = val;
                    alloc.leased[b] = true;
                }
            }
        }
    }
    alloc.cleanup();
    Ok(Some(alloc))
}

fn mask_cost(sc: &Scenario, set: ActiveSet) -> f64 {
    set.iter().map(|b| sc.base_stations[b].lease_cost).sum()
}

/// Exact search over lease sets without the linearisation. A node fixes
/// some BSs leased (`F1`) and some unleased; its cost bound is `cost(F1)`,
/// and it is pruned when even the optimistic network (every undecided BS
/// available but non-interfering) cannot meet the targets.
pub fn direct_branch_and_bound(
    engine: &CoverageEngine,
    opts: &BnbOptions,
    mut log: SolveLog<'_>,
) -> Result<BnbResult, SolverError> {
    let sc = engine.scenario();
    let nb = sc.num_bs();
    let all = ActiveSet(if nb == 64 { u64::MAX } else { (1u64 << nb) - 1 });
    let budget = Budget {
        start: Instant::now(),
        opts: opts.clone(),
    };
    // (forced in, forced out, path bounds)
    let mut stack: Vec<(ActiveSet, ActiveSet, Vec<f64>)> =
        vec![(ActiveSet::EMPTY, ActiveSet::EMPTY, Vec::new())];
    let mut nodes = 0u64;
    let mut incumbent: Option<(f64, Allocation, Vec<f64>)> = None;
    let mut root_bound = None;
    while let Some((f1, f0, path)) = stack.pop() {
        let bound = mask_cost(sc, f1);
        if incumbent
            .as_ref()
            .is_some_and(|(c, _, _)| bound >= c - COST_TOL)
        {
            continue;
        }
        budget.check(nodes)?;
        nodes += 1;
        let undecided = ActiveSet(all.0 & !f1.0 & !f0.0);
        let avail = ActiveSet(f1.0 | undecided.0);
        let optimistic = solve_delta_lp(sc, &coverage_matrix(engine, avail, f1)?, avail)?;
        let mut entry = NodeLog {
            node: nodes,
            depth: f1.len() + f0.len(),
            bound: None,
            incumbent: incumbent.as_ref().map(|(c, _, _)| *c),
        };
        let Some(optimistic) = optimistic else {
            if let Some(cb) = log.as_mut() {
                cb(&entry);
            }
            continue;
        };
        if nodes == 1 {
            root_bound = Some(bound);
        }
        entry.bound = Some(bound);
        if let Some(cb) = log.as_mut() {
            cb(&entry);
        }
        let mut path = path;
        path.push(bound);
        let leaf = if undecided.is_empty() {
            Some(optimistic.clone())
        } else {
            solve_delta_lp(sc, &coverage_matrix(engine, f1, f1)?, f1)?
        };
        if let Some(alloc) = leaf {
            let cost = alloc.cost(sc);
            if incumbent
                .as_ref()
                .is_none_or(|(c, _, _)| cost < c - COST_TOL)
            {
                incumbent = Some((cost, alloc, path));
            }
            continue;
        }
        let pick = undecided
            .iter()
            .max_by(|&a, &b| {
                let (ta, tb) = (optimistic.total_slice(a), optimistic.total_slice(b));
                let (ca, cb) = (
                    sc.base_stations[a].lease_cost,
                    sc.base_stations[b].lease_cost,
                );
                ta.total_cmp(&tb).then(ca.total_cmp(&cb)).then(b.cmp(&a))
            })
            .expect("undecided set is non-empty");
        stack.push((f1, f0.with(pick), path.clone()));
        stack.push((f1.with(pick), f0, path));
    }
    Ok(match incumbent {
        Some((cost, alloc, path)) => BnbResult {
            status: SolveStatus::Optimal,
            allocation: Some(alloc),
            values: Vec::new(),
            cost: Some(cost),
            nodes,
            gap: 0.0,
            root_bound,
            incumbent_path_bounds: path,
        },
        None => BnbResult {
            status: SolveStatus::Infeasible,
            allocation: None,
            values: Vec::new(),
            cost: None,
            nodes,
            gap: 0.0,
            root_bound,
            incumbent_path_bounds: Vec::new(),
        },
    })
}

/// Brute-force optimum: lease sets are tried in order of cost, ties broken
/// by the lexicographically smallest index list, and the first set whose
/// slice LP is feasible wins.
pub fn enumerate_oracle(engine: &CoverageEngine) -> Result<BnbResult, SolverError> {
    let sc = engine.scenario();
    let nb = sc.num_bs();
    if nb > MAX_ENUMERATION_BS {
        return Err(SolverError::SizeGuard {
            size: nb,
            max: MAX_ENUMERATION_BS,
        });
    }
    let mut sets: Vec<(f64, Vec<usize>, ActiveSet)> = (0..1u64 << nb)
        .map(|m| {
            let set = ActiveSet(m);
            (mask_cost(sc, set), set.iter().collect(), set)
        })
        .collect();
    sets.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut nodes = 0;
    for (_, _, set) in sets {
        nodes += 1;
        if let Some(alloc) = solve_delta_lp(sc, &coverage_matrix(engine, set, set)?, set)? {
            return Ok(BnbResult {
                status: SolveStatus::Optimal,
                cost: Some(alloc.cost(sc)),
                allocation: Some(alloc),
                values: Vec::new(),
                nodes,
                gap: 0.0,
                root_bound: None,
                incumbent_path_bounds: Vec::new(),
            });
        }
    }
    Ok(BnbResult {
        status: SolveStatus::Infeasible,
        allocation: None,
        values: Vec::new(),
        cost: None,
        nodes,
        gap: 0.0,
        root_bound: None,
        incumbent_path_bounds: Vec::new(),
    })
}
