//! Conic program model, direct feasibility checker and interior-point solver.
//!
//! A [`ConicProgram`] has a linear objective over `num_vars` variables and three
//! kinds of constraints:
//!
//! - linear rows `coeffsᵀv + constant ≤ 0` or `= 0`,
//! - second-order cone rows `‖A v + b‖₂ ≤ cᵀv + e`,
//! - optional per-variable lower bounds.
//!
//! Coefficient vectors shorter than `num_vars` are implicitly zero-padded, so
//! variables can be appended to a program without rewriting existing rows.

mod cones;
mod solver;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{dot, norm2};

pub use solver::solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Equal,
}

/// `coeffsᵀv + constant (≤ | =) 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub relation: Relation,
}

impl LinearRow {
    pub fn less_eq(coeffs: Vec<f64>, constant: f64) -> Self {
        Self { coeffs, constant, relation: Relation::LessEq }
    }

    pub fn equal(coeffs: Vec<f64>, constant: f64) -> Self {
        Self { coeffs, constant, relation: Relation::Equal }
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        dot(&self.coeffs, v) + self.constant
    }

    fn violation(&self, v: &[f64]) -> f64 {
        let val = self.value(v);
        match self.relation {
            Relation::LessEq => val.max(0.0),
            Relation::Equal => val.abs(),
        }
    }
}

/// `‖A v + b‖₂ ≤ cᵀv + e`; `a` holds the rows of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRow {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub e: f64,
}

impl SocRow {
    /// `norm_side − bound_side`; nonpositive when satisfied.
    pub fn value(&self, v: &[f64]) -> f64 {
        let inner: Vec<f64> = self.a.iter().zip(&self.b).map(|(row, bi)| dot(row, v) + bi).collect();
        norm2(&inner) - (dot(&self.c, v) + self.e)
    }
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSettings {
    /// Largest accepted constraint violation of the returned point.
    pub feasibility: f64,
    /// Relative duality gap / stationarity target.
    pub optimality: f64,
    pub max_iterations: usize,
}

impl Default for ToleranceSettings {
    fn default() -> Self {
        Self { feasibility: 1e-8, optimality: 1e-8, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    /// Objective in the program's own sense.
    pub objective: f64,
    /// Worst constraint violation of `x`, as measured by [`check`].
    pub primal_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    objective: Vec<f64>,
    sense: Sense,
    linear: Vec<LinearRow>,
    cones: Vec<SocRow>,
    lower_bounds: Vec<Option<f64>>,
}

impl ConicProgram {
    /// Program with `num_vars` free variables and a zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            sense: Sense::Minimize,
            linear: Vec::new(),
            cones: Vec::new(),
            lower_bounds: vec![None; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn linear_rows(&self) -> &[LinearRow] {
        &self.linear
    }

    pub fn cone_rows(&self) -> &[SocRow] {
        &self.cones
    }

    pub fn lower_bounds(&self) -> &[Option<f64>] {
        &self.lower_bounds
    }

    /// Appends `count` free variables and returns the index of the first one.
    pub fn add_variables(&mut self, count: usize) -> usize {
        let first = self.num_vars;
        self.num_vars += count;
        self.objective.resize(self.num_vars, 0.0);
        self.lower_bounds.resize(self.num_vars, None);
        first
    }

    pub fn set_objective(&mut self, sense: Sense, mut coeffs: Vec<f64>) {
        coeffs.resize(self.num_vars.max(coeffs.len()), 0.0);
        self.sense = sense;
        self.objective = coeffs;
    }

    pub fn add_linear(&mut self, row: LinearRow) {
        self.linear.push(row);
    }

    pub fn add_cone(&mut self, row: SocRow) {
        self.cones.push(row);
    }

    pub fn set_lower_bound(&mut self, var: usize, bound: f64) {
        self.lower_bounds[var] = Some(bound);
    }

    /// Objective value at `x` in the program's own sense.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if n == 0 {
            return Err(invalid!("conic program needs at least one variable"));
        }
        if self.objective.len() != n || self.lower_bounds.len() != n {
            return Err(invalid!("objective has {} entries for {n} variables", self.objective.len()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) {
            return Err(invalid!("objective has non-finite coefficients"));
        }
        for (i, row) in self.linear.iter().enumerate() {
            if row.coeffs.len() > n || !finite(&row.coeffs) || !row.constant.is_finite() {
                return Err(invalid!("linear row {i} is malformed"));
            }
        }
        for (i, cone) in self.cones.iter().enumerate() {
            let ok = cone.a.len() == cone.b.len()
                && cone.a.iter().all(|r| r.len() <= n && finite(r))
                && cone.c.len() <= n
                && finite(&cone.b)
                && finite(&cone.c)
                && cone.e.is_finite();
            if !ok {
                return Err(invalid!("cone row {i} is malformed"));
            }
        }
        if self.lower_bounds.iter().flatten().any(|b| !b.is_finite()) {
            return Err(invalid!("lower bounds must be finite"));
        }
        Ok(())
    }
}

/// Result of [`check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub worst_violation: f64,
}

/// Evaluates every constraint of `prog` at `candidate` directly.
pub fn check(prog: &ConicProgram, candidate: &[f64], feas_tol: f64) -> Result<FeasibilityReport> {
    if candidate.len() != prog.num_vars {
        return Err(invalid!(
            "candidate has length {}, program has {} variables",
            candidate.len(),
            prog.num_vars
        ));
    }
    let worst_violation = worst_violation(prog, candidate);
    Ok(FeasibilityReport { feasible: worst_violation <= feas_tol, worst_violation })
}

pub(crate) fn worst_violation(prog: &ConicProgram, x: &[f64]) -> f64 {
    let lin = prog.linear.iter().map(|r| r.violation(x));
    let soc = prog.cones.iter().map(|c| c.value(x).max(0.0));
    let lb = prog
        .lower_bounds
        .iter()
        .zip(x)
        .filter_map(|(b, xi)| b.map(|b| (b - xi).max(0.0)));
    lin.chain(soc).chain(lb).fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
}
