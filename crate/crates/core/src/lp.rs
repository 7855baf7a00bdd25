//! Backend-neutral linear/mixed-integer program and the solver interface.
//!
//! Models are assembled as a [`LinearProgram`] and handed to a
//! [`MilpBackend`]. [`HighsBackend`] is the bundled implementation.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(name: impl Into<String>, terms: Vec<(usize, f64)>, sense: ConstraintSense, rhs: f64) -> Self {
        LinearConstraint { name: name.into(), terms, sense, rhs }
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Amount by which `values` violates the constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.sense {
            ConstraintSense::Le => (act - self.rhs).max(0.0),
            ConstraintSense::Ge => (self.rhs - act).max(0.0),
            ConstraintSense::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Vec<(usize, f64)>,
    pub direction: Direction,
}

impl LinearProgram {
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integer: bool) -> usize {
        self.vars.push(Variable { name: name.into(), lower, upper, integer });
        self.vars.len() - 1
    }

    pub fn add_constraint(&mut self, c: LinearConstraint) {
        self.constraints.push(c);
    }

    pub fn integer_count(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Largest violation of any row or column bound.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(values)).fold(0.0, f64::max);
        let cols = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    /// Order-sensitive hash of the full model; equal models built the same
    /// way share a fingerprint.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.vars {
            v.name.hash(&mut h);
            v.lower.to_bits().hash(&mut h);
            v.upper.to_bits().hash(&mut h);
            v.integer.hash(&mut h);
        }
        for c in &self.constraints {
            c.name.hash(&mut h);
            for &(v, coef) in &c.terms {
                v.hash(&mut h);
                coef.to_bits().hash(&mut h);
            }
            c.sense.hash(&mut h);
            c.rhs.to_bits().hash(&mut h);
        }
        for &(v, coef) in &self.objective {
            v.hash(&mut h);
            coef.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// CPLEX LP text format, for inspection with external tools.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let name = |i: usize| sanitize(&self.vars[i].name, i);
        let expr = |terms: &[(usize, f64)]| {
            let mut s = String::new();
            for (k, &(v, c)) in terms.iter().enumerate() {
                if k > 0 || c < 0.0 {
                    s.push_str(if c < 0.0 { " - " } else { " + " });
                }
                let _ = write!(s, "{} {}", fmt_num(c.abs()), name(v));
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        out.push_str(match self.direction {
            Direction::Minimize => "Minimize\n",
            Direction::Maximize => "Maximize\n",
        });
        let _ = writeln!(out, " obj: {}", expr(&self.objective));
        out.push_str("Subject To\n");
        for (k, c) in self.constraints.iter().enumerate() {
            let op = match c.sense {
                ConstraintSense::Le => "<=",
                ConstraintSense::Ge => ">=",
                ConstraintSense::Eq => "=",
            };
            let _ = writeln!(out, " {}: {} {} {}", sanitize(&c.name, k), expr(&c.terms), op, fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            let lo = if v.lower.is_finite() { fmt_num(v.lower) } else { "-inf".into() };
            let hi = if v.upper.is_finite() { fmt_num(v.upper) } else { "+inf".into() };
            let _ = writeln!(out, " {} <= {} <= {}", lo, name(i), hi);
        }
        let ints: Vec<String> = (0..self.vars.len()).filter(|&i| self.vars[i].integer).map(name).collect();
        if !ints.is_empty() {
            out.push_str("General\n");
            for n in ints {
                let _ = writeln!(out, " {n}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x}")
}

fn sanitize(name: &str, fallback: usize) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("v{fallback}_{s}")
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped on the time limit; a feasible incumbent may still exist.
    TimeLimit,
    Infeasible,
    Unbounded,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveLimits {
    pub time_limit: Option<f64>,
    pub mip_rel_gap: f64,
    pub feasibility_tol: f64,
    pub presolve: bool,
    /// Feasible point handed to the MILP search as its first incumbent.
    pub start: Option<Vec<f64>>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { time_limit: None, mip_rel_gap: 1e-6, feasibility_tol: 1e-9, presolve: true, start: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSolution {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Best proven bound (MILP) or the LP optimum.
    pub dual_bound: Option<f64>,
    pub mip_gap: Option<f64>,
    pub node_count: Option<i64>,
    pub seconds: f64,
}

/// A MILP/LP solver. Implementations must be usable from several threads
/// at once; every call owns its solver instance.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Solve `program`; when `relax` is set, integrality is dropped.
    fn solve(&self, program: &LinearProgram, relax: bool, limits: &SolveLimits) -> Result<BackendSolution>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl MilpBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, program: &LinearProgram, relax: bool, limits: &SolveLimits) -> Result<BackendSolution> {
        let start = Instant::now();
        let mut pb = RowProblem::default();
        let mut cost = vec![0.0; program.vars.len()];
        for &(v, c) in &program.objective {
            cost[v] += c;
        }
        let cols: Vec<_> = program
            .vars
            .iter()
            .zip(&cost)
            .map(|(v, &c)| {
                if v.integer && !relax {
                    pb.add_integer_column(c, v.lower..=v.upper)
                } else {
                    pb.add_column(c, v.lower..=v.upper)
                }
            })
            .collect();
        for c in &program.constraints {
            let terms: Vec<_> = c.terms.iter().map(|&(v, coef)| (cols[v], coef)).collect();
            match c.sense {
                ConstraintSense::Le => pb.add_row(f64::NEG_INFINITY..=c.rhs, terms),
                ConstraintSense::Ge => pb.add_row(c.rhs..=f64::INFINITY, terms),
                ConstraintSense::Eq => pb.add_row(c.rhs..=c.rhs, terms),
            }
        }
        let sense = match program.direction {
            Direction::Minimize => Sense::Minimise,
            Direction::Maximize => Sense::Maximise,
        };
        let mut model = pb.try_optimise(sense).map_err(|s| Error::Backend(format!("load failed: {s:?}")))?;
        model.make_quiet();
        model.set_option("threads", 1);
        if !limits.presolve {
            model.set_option("presolve", "off");
        }
        model.set_option("primal_feasibility_tolerance", limits.feasibility_tol);
        model.set_option("dual_feasibility_tolerance", limits.feasibility_tol);
        model.set_option("mip_feasibility_tolerance", limits.feasibility_tol);
        model.set_option("mip_rel_gap", limits.mip_rel_gap);
        if let Some(t) = limits.time_limit {
            model.set_option("time_limit", t);
        }
        let is_mip = !relax && program.integer_count() > 0;
        if let (true, Some(start)) = (is_mip, &limits.start) {
            if model.try_set_solution(Some(start), None, None, None).is_err() {
                log::warn!("backend rejected the start point");
            }
        }
        let solved = model.try_solve().map_err(|s| Error::Backend(format!("solve failed: {s:?}")))?;

        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit => SolveStatus::TimeLimit,
            _ => SolveStatus::Failed,
        };
        let has_primal = status == SolveStatus::Optimal
            || (status == SolveStatus::TimeLimit
                && solved.int_info_value(c"primal_solution_status").map(|v| v == 2).unwrap_or(false));
        let values = has_primal.then(|| solved.get_solution().columns().to_vec());
        let objective = values.as_ref().map(|v| program.objective_value(v));
        let (dual_bound, mip_gap, node_count) = if is_mip {
            let mut nodes: i64 = -1;
            // SAFETY: `solved` owns a live Highs instance; the key is a
            // NUL-terminated int64 info name.
            let st = unsafe {
                highs_sys::Highs_getInt64InfoValue(solved.as_ptr(), c"mip_node_count".as_ptr(), &mut nodes)
            };
            (
                solved.double_info_value(c"mip_dual_bound").ok(),
                Some(solved.mip_gap()),
                (st == 0).then_some(nodes),
            )
        } else {
            (objective, None, None)
        };
        Ok(BackendSolution {
            status,
            values,
            objective,
            dual_bound,
            mip_gap,
            node_count,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}
