//! Mixed-integer linear model of the leasing/slicing problem.
//!
//! The coverage constraint of SP `s` is a polynomial in the lease variables
//! `x` and slices `δ`. Each monomial `δ_bs Π_{j∈J} x_j` is replaced by an
//! auxiliary variable: a product of binaries becomes `y_J` through
//! `y ≤ x_j`, `y ≥ Σx_j − (|J|−1)`, and the product with the slice becomes
//! `z` through `z ≤ bin`, `z ≤ δ`, `z ≥ δ − (1 − bin)`, `z ≥ 0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoverageCoefficients;
use crate::coverage::ActiveSet;
use crate::error::{CoverageError, MilpError};
use crate::scenario::{Allocation, Scenario};

/// Expansion terms smaller than this in magnitude are left out of the model.
pub const COEFFICIENT_DROP_TOL: f64 = 1e-12;
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v]).sum()
    }

    pub fn is_satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => lhs <= self.rhs + tol,
            Relation::Ge => lhs >= self.rhs - tol,
            Relation::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// A minimisation MILP.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
}

impl MilpModel {
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize, MilpError> {
        if let Some(&(v, _)) = terms.iter().find(|(v, _)| *v >= self.variables.len()) {
            return Err(MilpError::UnknownVariable(v));
        }
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    fn var(&self, id: usize) -> Result<&Variable, MilpError> {
        self.variables.get(id).ok_or(MilpError::UnknownVariable(id))
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Names of constraints and bounds violated by `values` beyond `tol`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, var) in self.variables.iter().enumerate() {
            if values[v] < var.lower - tol || values[v] > var.upper + tol {
                out.push(format!("bound of {}", var.name));
            }
        }
        for c in &self.constraints {
            if !c.is_satisfied(values, tol) {
                out.push(c.name.clone());
            }
        }
        out
    }

    /// CPLEX-style LP text of the model.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        let write_terms = |s: &mut String, terms: &[(usize, f64)]| {
            if terms.is_empty() {
                s.push_str(" 0");
            }
            for (i, &(v, a)) in terms.iter().enumerate() {
                let name = &self.variables[v].name;
                if i == 0 {
                    let _ = write!(s, " {a} {name}");
                } else if a < 0.0 {
                    let _ = write!(s, " - {} {name}", -a);
                } else {
                    let _ = write!(s, " + {a} {name}");
                }
            }
        };
        s.push_str("Minimize\n obj:");
        write_terms(&mut s, &self.objective);
        s.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(s, " {}:", c.name);
            write_terms(&mut s, &c.terms);
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(s, " {rel} {}", c.rhs);
        }
        s.push_str("Bounds\n");
        for v in &self.variables {
            let up = if v.upper.is_finite() {
                v.upper.to_string()
            } else {
                "+inf".into()
            };
            let lo = if v.lower.is_finite() {
                v.lower.to_string()
            } else {
                "-inf".into()
            };
            let _ = writeln!(s, " {lo} <= {} <= {up}", v.name);
        }
        s.push_str("Binaries\n");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Binary) {
            let _ = writeln!(s, " {}", v.name);
        }
        s.push_str("End\n");
        s
    }
}

/// One linearised monomial `δ_bs Π_{j∈J} x_j` of a coverage row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub bs: usize,
    pub sp: usize,
    pub subset: ActiveSet,
    pub aux: usize,
}

/// Bookkeeping of the auxiliary variables introduced by the gadgets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearizationMap {
    /// Sorted binary variable ids → product variable.
    pub binary_products: BTreeMap<Vec<usize>, usize>,
    /// (binary-valued variable, continuous variable) → product variable.
    pub mixed_products: BTreeMap<(usize, usize), usize>,
    pub lease_vars: Vec<usize>,
    /// `slice_vars[b][s]`.
    pub slice_vars: Vec<Vec<usize>>,
    pub terms: Vec<ProductTerm>,
    /// Sum of magnitudes of expansion coefficients left out of the model.
    pub dropped_mass: f64,
}

impl LinearizationMap {
    fn is_binary_valued(&self, model: &MilpModel, v: usize) -> bool {
        model.variables[v].kind == VarKind::Binary || self.binary_products.values().any(|&a| a == v)
    }
}

fn short(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Returns the variable standing for the product of the binaries `vars`,
/// adding it and its gadget rows on first use.
pub fn linearize_binary_product(
    model: &mut MilpModel,
    map: &mut LinearizationMap,
    vars: &[usize],
) -> Result<usize, MilpError> {
    let mut key = vars.to_vec();
    key.sort_unstable();
    key.dedup();
    if key.len() < 2 {
        return Err(MilpError::ProductArity);
    }
    for &v in &key {
        if model.var(v)?.kind != VarKind::Binary {
            return Err(MilpError::NotBinary(v));
        }
    }
    if let Some(&aux) = map.binary_products.get(&key) {
        return Ok(aux);
    }
    let name = format!(
        "y_{}",
        key.iter()
            .map(|&v| model.variables[v].name.clone())
            .collect::<Vec<_>>()
            .join("_")
    );
    let aux = model.add_var(name.clone(), VarKind::Continuous, 0.0, 1.0);
    for &v in &key {
        model.add_constraint(
            format!("{name}_le_{}", model.variables[v].name),
            vec![(aux, 1.0), (v, -1.0)],
            Relation::Le,
            0.0,
        )?;
    }
    let mut terms = vec![(aux, 1.0)];
    terms.extend(key.iter().map(|&v| (v, -1.0)));
    model.add_constraint(
        format!("{name}_ge"),
        terms,
        Relation::Ge,
        -(key.len() as f64 - 1.0),
    )?;
    map.binary_products.insert(key, aux);
    Ok(aux)
}

/// Returns the variable standing for `bin · cont`, adding it and its gadget
/// rows on first use. `bin` must be binary or a binary product.
pub fn linearize_mixed_product(
    model: &mut MilpModel,
    map: &mut LinearizationMap,
    bin: usize,
    cont: usize,
) -> Result<usize, MilpError> {
    model.var(bin)?;
    let c = model.var(cont)?.clone();
    if !map.is_binary_valued(model, bin) {
        return Err(MilpError::NotBinary(bin));
    }
    if c.lower < 0.0 || c.upper > 1.0 {
        return Err(MilpError::Bound {
            var: cont,
            lower: c.lower,
            upper: c.upper,
        });
    }
    if let Some(&aux) = map.mixed_products.get(&(bin, cont)) {
        return Ok(aux);
    }
    let name = format!("z_{}_{}", model.variables[bin].name, c.name);
    let aux = model.add_var(name.clone(), VarKind::Continuous, 0.0, 1.0);
    model.add_constraint(
        format!("{name}_le_bin"),
        vec![(aux, 1.0), (bin, -1.0)],
        Relation::Le,
        0.0,
    )?;
    model.add_constraint(
        format!("{name}_le_cont"),
        vec![(aux, 1.0), (cont, -1.0)],
        Relation::Le,
        0.0,
    )?;
    model.add_constraint(
        format!("{name}_ge"),
        vec![(aux, 1.0), (cont, -1.0), (bin, -1.0)],
        Relation::Ge,
        -1.0,
    )?;
    map.mixed_products.insert((bin, cont), aux);
    Ok(aux)
}

/// Builds the leasing/slicing MILP from precomputed coefficients.
pub fn build_problem1(
    scenario: &Scenario,
    coeffs: &CoverageCoefficients,
) -> Result<(MilpModel, LinearizationMap), MilpError> {
    let (nb, ns) = (scenario.num_bs(), scenario.num_sp());
    if coeffs.num_bs != nb || coeffs.num_sp != ns {
        return Err(CoverageError::InvalidInput(format!(
            "coefficients are for {}x{}, scenario is {nb}x{ns}",
            coeffs.num_bs, coeffs.num_sp
        ))
        .into());
    }
    let mut model = MilpModel::default();
    let mut map = LinearizationMap::default();
    for b in &scenario.base_stations {
        let x = model.add_var(format!("x_{}", short(&b.id)), VarKind::Binary, 0.0, 1.0);
        map.lease_vars.push(x);
        model.objective.push((x, b.lease_cost));
    }
    for b in &scenario.base_stations {
        let row = scenario
            .demands
            .iter()
            .map(|d| {
                model.add_var(
                    format!("d_{}_{}", short(&b.id), short(&d.sp_id)),
                    VarKind::Continuous,
                    0.0,
                    1.0,
                )
            })
            .collect();
        map.slice_vars.push(row);
    }
    for (b, bs) in scenario.base_stations.iter().enumerate() {
        let terms = map.slice_vars[b].iter().map(|&v| (v, 1.0)).collect();
        model.add_constraint(format!("util_{}", short(&bs.id)), terms, Relation::Le, 1.0)?;
        for s in 0..ns {
            let d = map.slice_vars[b][s];
            let name = format!("link_{}", model.variables[d].name);
            model.add_constraint(
                name,
                vec![(d, 1.0), (map.lease_vars[b], -1.0)],
                Relation::Le,
                0.0,
            )?;
        }
    }
    for (s, demand) in scenario.demands.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for b in 0..nb {
            let table = coeffs.table(b, s);
            let delta = map.slice_vars[b][s];
            for (local, &c) in table.coef.iter().enumerate() {
                if c.abs() < COEFFICIENT_DROP_TOL {
                    map.dropped_mass += c.abs();
                    continue;
                }
                if local == 0 {
                    row.push((delta, c));
                    continue;
                }
                let subset = table.global_set(local);
                let xs: Vec<usize> = subset.iter().map(|j| map.lease_vars[j]).collect();
                let bin = if xs.len() == 1 {
                    xs[0]
                } else {
                    linearize_binary_product(&mut model, &mut map, &xs)?
                };
                let z = linearize_mixed_product(&mut model, &mut map, bin, delta)?;
                map.terms.push(ProductTerm {
                    bs: b,
                    sp: s,
                    subset,
                    aux: z,
                });
                row.push((z, c));
            }
        }
        model.add_constraint(
            format!("cover_{}", short(&demand.sp_id)),
            row,
            Relation::Ge,
            demand.min_coverage_prob,
        )?;
    }
    Ok((model, map))
}

/// Reads an allocation off an integral solution and applies the idle-lease
/// cleanup.
pub fn extract_allocation(map: &LinearizationMap, values: &[f64]) -> Result<Allocation, MilpError> {
    let nb = map.lease_vars.len();
    let ns = map.slice_vars.first().map_or(0, Vec::len);
    let mut alloc = Allocation::empty(nb, ns);
    for (b, &x) in map.lease_vars.iter().enumerate() {
        let v = values[x];
        if (v - v.round()).abs() > INTEGRALITY_TOL {
            return Err(MilpError::NonIntegral { var: x, value: v });
        }
        alloc.leased[b] = v > 0.5;
        for (s, &d) in map.slice_vars[b].iter().enumerate() {
            let v = values[d].clamp(0.0, 1.0);
            alloc.slices[b][s] = if alloc.leased[b] && v > 1e-12 { v } else { 0.0 };
        }
    }
    alloc.cleanup();
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_gadget_is_idempotent() {
        let mut m = MilpModel::default();
        let mut map = LinearizationMap::default();
        let a = m.add_var("a", VarKind::Binary, 0.0, 1.0);
        let b = m.add_var("b", VarKind::Binary, 0.0, 1.0);
        let y1 = linearize_binary_product(&mut m, &mut map, &[a, b]).unwrap();
        let y2 = linearize_binary_product(&mut m, &mut map, &[b, a]).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(m.constraints.len(), 3);
        assert!(matches!(
            linearize_binary_product(&mut m, &mut map, &[a]),
            Err(MilpError::ProductArity)
        ));
        assert!(matches!(
            linearize_binary_product(&mut m, &mut map, &[a, 99]),
            Err(MilpError::UnknownVariable(99))
        ));
    }

    #[test]
    fn mixed_gadget_rejects_wide_continuous() {
        let mut m = MilpModel::default();
        let mut map = LinearizationMap::default();
        let x = m.add_var("x", VarKind::Binary, 0.0, 1.0);
        let c = m.add_var("c", VarKind::Continuous, 0.0, 2.0);
        assert!(matches!(
            linearize_mixed_product(&mut m, &mut map, x, c),
            Err(MilpError::Bound { .. })
        ));
        assert!(matches!(
            linearize_mixed_product(&mut m, &mut map, c, x),
            Err(MilpError::NotBinary(_))
        ));
    }

    #[test]
    fn gadget_rows_pin_products_at_integral_points() {
        let mut m = MilpModel::default();
        let mut map = LinearizationMap::default();
        let x = m.add_var("x", VarKind::Binary, 0.0, 1.0);
        let d = m.add_var("d", VarKind::Continuous, 0.0, 1.0);
        let z = linearize_mixed_product(&mut m, &mut map, x, d).unwrap();
        for (xv, dv) in [(0.0, 0.7), (1.0, 0.7), (1.0, 0.0)] {
            let mut vals = vec![0.0; 3];
            vals[x] = xv;
            vals[d] = dv;
            // Only z = x·d satisfies every row.
            for zv in [0.0, 0.35, 0.7, 1.0] {
                vals[z] = zv;
                let ok = m.violations(&vals, 1e-12).is_empty();
                assert_eq!(ok, (zv - xv * dv).abs() < 1e-12, "x={xv} d={dv} z={zv}");
            }
        }
    }

    #[test]
    fn lp_text_lists_sections() {
        let mut m = MilpModel::default();
        let x = m.add_var("x", VarKind::Binary, 0.0, 1.0);
        m.objective.push((x, 2.0));
        m.add_constraint("c1", vec![(x, 1.0)], Relation::Ge, 1.0)
            .unwrap();
        let t = m.to_lp_string();
        assert!(t.contains("Minimize\n obj: 2 x"));
        assert!(t.contains(" c1: 1 x >= 1"));
        assert!(t.contains("Binaries\n x\n"));
    }
}
