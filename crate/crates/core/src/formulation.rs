//! Mixed-integer linear model of the design problem.
//!
//! Variables are `z` (one per edge), the upper triangle of `X = L~(z)^{-1}`
//! and products `y_{l,m,q} = z_l X_{mq}` for `m` a non-reference endpoint of
//! `l`. The identity `L~(z) X = I` is linear in `y`; every product is tied to
//! `(z, X)` by its McCormick envelope, which is exact at binary `z`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cuts::CutInequality;
use crate::error::{Error, Result};
use crate::graph::PowerNetwork;
use crate::lp::{ConstraintSense, LinearConstraint, LinearProgram};
use crate::problem::{DesignMode, DesignProblem};

/// Position of `X_ij` in the packed upper triangle of an `n x n` matrix.
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `(i, j)` with `i <= j` for every packed position, in packed order.
pub fn packed_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSource {
    Unset,
    Lemma1,
    Lemma2,
    Cor1,
    Cor2,
    LpSweep,
    MMatrix,
    Naive,
    WorstCase,
    /// Entry couples two independent sub-networks, so it is exactly zero.
    Block,
}

/// Entrywise interval `[lower, upper]` on the symmetric matrix `X`, with the
/// origin of each side.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundBox {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_src: Vec<BoundSource>,
    upper_src: Vec<BoundSource>,
}

impl BoundBox {
    /// `(-inf, +inf)` everywhere.
    pub fn unbounded(n: usize) -> Self {
        let len = packed_len(n);
        BoundBox {
            n,
            lower: vec![f64::NEG_INFINITY; len],
            upper: vec![f64::INFINITY; len],
            lower_src: vec![BoundSource::Unset; len],
            upper_src: vec![BoundSource::Unset; len],
        }
    }

    /// `X >= 0` and `X <= total`: valid for any connected topology whose
    /// lines sum to at most `total` reactance.
    pub fn naive(n: usize, total_reactance: f64) -> Self {
        let len = packed_len(n);
        BoundBox {
            n,
            lower: vec![0.0; len],
            upper: vec![total_reactance; len],
            lower_src: vec![BoundSource::Naive; len],
            upper_src: vec![BoundSource::Naive; len],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[packed_index(self.n, i, j)]
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(self.n, i, j)]
    }

    pub fn lower_source(&self, i: usize, j: usize) -> BoundSource {
        self.lower_src[packed_index(self.n, i, j)]
    }

    pub fn upper_source(&self, i: usize, j: usize) -> BoundSource {
        self.upper_src[packed_index(self.n, i, j)]
    }

    /// Raise the lower bound if `value` is tighter; returns whether it was.
    pub fn raise_lower(&mut self, i: usize, j: usize, value: f64, src: BoundSource) -> bool {
        let k = packed_index(self.n, i, j);
        if value > self.lower[k] {
            self.lower[k] = value;
            self.lower_src[k] = src;
            true
        } else {
            false
        }
    }

    /// Lower the upper bound if `value` is tighter; returns whether it was.
    pub fn lower_upper(&mut self, i: usize, j: usize, value: f64, src: BoundSource) -> bool {
        let k = packed_index(self.n, i, j);
        if value < self.upper[k] {
            self.upper[k] = value;
            self.upper_src[k] = src;
            true
        } else {
            false
        }
    }

    /// Overwrite both sides of one entry.
    pub fn set(&mut self, i: usize, j: usize, lower: (f64, BoundSource), upper: (f64, BoundSource)) {
        let k = packed_index(self.n, i, j);
        (self.lower[k], self.lower_src[k]) = lower;
        (self.upper[k], self.upper_src[k]) = upper;
    }

    /// Entrywise intersection with `other`.
    pub fn intersect(&mut self, other: &BoundBox) {
        for (i, j) in packed_pairs(self.n) {
            self.raise_lower(i, j, other.lower(i, j), other.lower_source(i, j));
            self.lower_upper(i, j, other.upper(i, j), other.upper_source(i, j));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn is_consistent(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l <= u)
    }

    pub fn lower_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.lower(i, j))
    }

    pub fn upper_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.upper(i, j))
    }

    /// Largest amount by which `x` leaves the box.
    pub fn excess(&self, x: &DMatrix<f64>) -> f64 {
        packed_pairs(self.n)
            .into_iter()
            .map(|(i, j)| {
                let v = x[(i, j)];
                (self.lower(i, j) - v).max(v - self.upper(i, j)).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &DMatrix<f64>, tol: f64) -> bool {
        self.excess(x) <= tol
    }

    /// Sum of interval widths (infinite if any side is open).
    pub fn total_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).sum()
    }

    /// Count of entries per `(side, source)`.
    pub fn provenance_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (side, srcs) in [("lower", &self.lower_src), ("upper", &self.upper_src)] {
            for s in srcs.iter() {
                let key = format!("{side}:{}", serde_json::to_value(s).unwrap().as_str().unwrap_or("?"));
                *out.entry(key).or_insert(0) += 1;
            }
        }
        out
    }
}

/// A product variable `y = z_edge * X_{row, col}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductVar {
    pub edge: usize,
    pub row: usize,
    pub col: usize,
    pub var: usize,
}

/// Assembled model together with its variable layout.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub program: LinearProgram,
    pub dim: usize,
    /// Variable of each edge's `z`; fixed edges have bounds `[1, 1]`.
    pub z_vars: Vec<usize>,
    /// Variable of each packed `X` entry.
    pub x_vars: Vec<usize>,
    pub y_vars: Vec<ProductVar>,
    pub fixed: Vec<bool>,
    pub cut_count: usize,
}

impl MilpModel {
    pub fn x_var(&self, i: usize, j: usize) -> usize {
        self.x_vars[packed_index(self.dim, i, j)]
    }

    pub fn x_matrix(&self, values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| values[self.x_var(i, j)])
    }

    pub fn z_values(&self, values: &[f64]) -> Vec<f64> {
        self.z_vars.iter().map(|&v| values[v]).collect()
    }

    /// `max |y - z X|` over all product variables.
    pub fn product_gap(&self, values: &[f64]) -> f64 {
        self.y_vars
            .iter()
            .map(|p| (values[p.var] - values[self.z_vars[p.edge]] * values[self.x_var(p.row, p.col)]).abs())
            .fold(0.0, f64::max)
    }

    /// `||L~(z) X - I||_inf` (max entry) evaluated from `z` and `X` directly.
    pub fn identity_residual(&self, network: &PowerNetwork, values: &[f64]) -> f64 {
        let lap = network.reduced_laplacian(&self.z_values(values));
        let r = lap * self.x_matrix(values) - DMatrix::identity(self.dim, self.dim);
        r.amax()
    }

    /// Append a cut, folding terms on fixed edges into the right-hand side.
    pub fn add_cut(&mut self, cut: &CutInequality) {
        let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
        let mut rhs = -cut.constant;
        for &((i, j), c) in &cut.x_coefs {
            *terms.entry(self.x_var(i, j)).or_insert(0.0) += c;
        }
        for &(l, c) in &cut.z_coefs {
            if self.fixed[l] {
                rhs -= c;
            } else {
                *terms.entry(self.z_vars[l]).or_insert(0.0) += c;
            }
        }
        let name = format!("cut{}", self.cut_count);
        self.cut_count += 1;
        self.program.add_constraint(LinearConstraint::new(
            name,
            terms.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            ConstraintSense::Ge,
            rhs,
        ));
    }

    /// Copy of the model with every `z` fixed to `mask`.
    pub fn with_fixed_selection(&self, mask: &[bool]) -> LinearProgram {
        let mut lp = self.program.clone();
        for (l, &v) in self.z_vars.iter().enumerate() {
            let val = if mask[l] { 1.0 } else { 0.0 };
            lp.vars[v].lower = val;
            lp.vars[v].upper = val;
            lp.vars[v].integer = false;
        }
        lp
    }
}

/// Reduced incidence vector of edge `l` as sparse `(row, sign)` pairs.
pub fn reduced_incidence(network: &PowerNetwork, l: usize) -> Vec<(usize, f64)> {
    let e = &network.edges()[l];
    let mut out = Vec::with_capacity(2);
    if e.from != 0 {
        out.push((e.from - 1, 1.0));
    }
    if e.to != 0 {
        out.push((e.to - 1, -1.0));
    }
    out
}

/// Bounds derived along different paths can cross by roundoff when an entry
/// is pinned; such intervals collapse to their midpoint.
const CROSSING_TOL: f64 = 1e-9;

fn require_finite(lo: f64, hi: f64, what: &str) -> Result<(f64, f64)> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::MissingBounds(format!("{what} has interval [{lo}, {hi}]")));
    }
    if lo <= hi {
        return Ok((lo, hi));
    }
    if lo - hi <= CROSSING_TOL * (1.0 + lo.abs()) {
        let mid = 0.5 * (lo + hi);
        return Ok((mid, mid));
    }
    Err(Error::Infeasible(format!("{what} has empty interval [{lo}, {hi}]")))
}

/// Envelope of `y = z x` for binary `z` and `x in [lo, hi]`.
pub fn mccormick_group(y: usize, z: usize, x: usize, lo: f64, hi: f64) -> Result<[LinearConstraint; 4]> {
    let (lo, hi) = require_finite(lo, hi, &format!("product variable {y}"))?;
    use ConstraintSense::{Ge, Le};
    Ok([
        LinearConstraint::new(format!("mc_a_{y}"), vec![(y, 1.0), (z, -lo)], Ge, 0.0),
        LinearConstraint::new(format!("mc_b_{y}"), vec![(y, 1.0), (x, -1.0), (z, -hi)], Ge, -hi),
        LinearConstraint::new(format!("mc_c_{y}"), vec![(y, 1.0), (z, -hi)], Le, 0.0),
        LinearConstraint::new(format!("mc_d_{y}"), vec![(y, 1.0), (x, -1.0), (z, -lo)], Le, -lo),
    ])
}

/// Rows of `L~(z) X = I`. `term(l, m, q)` yields the variable standing for
/// `z_l X_{mq}` (a product variable, or `X_{mq}` itself when `z_l` is fixed).
fn identity_rows(
    n: usize,
    incidence: &[Vec<(usize, f64)>],
    susceptance: &[f64],
    term: impl Fn(usize, usize, usize) -> usize,
) -> Vec<LinearConstraint> {
    let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (l, inc) in incidence.iter().enumerate() {
        for &(p, _) in inc {
            by_row[p].push(l);
        }
    }
    let mut rows = Vec::with_capacity(n * n);
    for p in 0..n {
        for q in 0..n {
            let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
            for &l in &by_row[p] {
                let ap = incidence[l].iter().find(|&&(r, _)| r == p).map(|&(_, s)| s).unwrap_or(0.0);
                for &(m, am) in &incidence[l] {
                    *terms.entry(term(l, m, q)).or_insert(0.0) += susceptance[l] * ap * am;
                }
            }
            rows.push(LinearConstraint::new(
                format!("id_{p}_{q}"),
                terms.into_iter().filter(|&(_, c)| c != 0.0).collect(),
                ConstraintSense::Eq,
                if p == q { 1.0 } else { 0.0 },
            ));
        }
    }
    rows
}

/// Cardinality constraint over the free `z` variables, given the model's
/// layout. Radial mode fixes the count to `N`; the other modes cap it and
/// require at least `N` lines.
pub fn budget_constraint(problem: &DesignProblem, z_vars: &[usize], fixed: &[bool]) -> Result<Vec<LinearConstraint>> {
    let n = problem.dim();
    let free: Vec<(usize, f64)> =
        z_vars.iter().zip(fixed).filter(|(_, &f)| !f).map(|(&v, _)| (v, 1.0)).collect();
    let fixed_count = fixed.iter().filter(|&&f| f).count();
    let max_total = match problem.mode {
        DesignMode::Radial => n,
        DesignMode::Meshed { budget } => budget,
        DesignMode::Augment { additional } => problem.network.existing_mask().iter().filter(|&&e| e).count() + additional,
    };
    if max_total < n {
        return Err(Error::Infeasible(format!("cannot span {} nodes with at most {max_total} lines", n + 1)));
    }
    if fixed_count > max_total {
        return Err(Error::Infeasible(format!(
            "{fixed_count} lines are forced (existing or bridges) but at most {max_total} may be used"
        )));
    }
    if fixed_count + free.len() < n {
        return Err(Error::Infeasible(format!("cannot span {} nodes with {} candidate lines", n + 1, fixed_count + free.len())));
    }
    let mut out = Vec::new();
    if free.is_empty() {
        return Ok(out);
    }
    let cap = (max_total - fixed_count) as f64;
    let floor = n.saturating_sub(fixed_count) as f64;
    match problem.mode {
        DesignMode::Radial => {
            out.push(LinearConstraint::new("budget", free, ConstraintSense::Eq, cap));
        }
        _ => {
            if (cap as usize) < free.len() {
                out.push(LinearConstraint::new("budget", free.clone(), ConstraintSense::Le, cap));
            }
            if floor > 0.0 {
                out.push(LinearConstraint::new("span", free, ConstraintSense::Ge, floor));
            }
        }
    }
    Ok(out)
}

/// Inputs of the valid inequalities that hold for every connected feasible
/// topology.
#[derive(Debug, Clone)]
pub struct AprioriContext {
    /// `L~_f^{-1}` for the all-candidates graph.
    pub full_inverse: DMatrix<f64>,
    /// `(near, far, reactance)` per bridge, full node indices.
    pub bridges: Vec<(usize, usize, f64)>,
    /// Shortest-path reactances over lines present in every feasible
    /// topology (augment mode), full node indices.
    pub fixed_paths: Option<DMatrix<f64>>,
    pub epsilon: f64,
}

/// Valid inequalities over `X` (variables `x_base + packed index`):
/// effective resistances never drop below the all-candidates value, bridges
/// and fixed paths cap the resistance of their endpoints, and
/// `X_ii >= X_ij` for all ordered pairs.
pub fn apriori_valid_inequalities(n: usize, ctx: &AprioriContext, x_base: usize) -> Vec<LinearConstraint> {
    use ConstraintSense::{Ge, Le};
    let x = |i: usize, j: usize| x_base + packed_index(n, i, j);
    let lf = &ctx.full_inverse;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let r = lf[(i, i)] + lf[(j, j)] - 2.0 * lf[(i, j)];
            out.push(LinearConstraint::new(
                format!("res_lo_{i}_{j}"),
                vec![(x(i, i), 1.0), (x(j, j), 1.0), (x(i, j), -2.0)],
                Ge,
                r,
            ));
        }
    }
    let resistance_cap = |a: usize, b: usize, cap: f64, tag: &str| -> Option<LinearConstraint> {
        // full indices; the reference contributes no X entry
        match (a, b) {
            (0, 0) => None,
            (0, k) | (k, 0) => Some(LinearConstraint::new(format!("{tag}_{a}_{b}"), vec![(x(k - 1, k - 1), 1.0)], Le, cap)),
            (a, b) => Some(LinearConstraint::new(
                format!("{tag}_{a}_{b}"),
                vec![(x(a - 1, a - 1), 1.0), (x(b - 1, b - 1), 1.0), (x(a - 1, b - 1), -2.0)],
                Le,
                cap,
            )),
        }
    };
    for &(near, far, reactance) in &ctx.bridges {
        out.extend(resistance_cap(near.min(far), near.max(far), reactance + ctx.epsilon, "bridge"));
    }
    if let Some(d) = &ctx.fixed_paths {
        for a in 0..=n {
            for b in a + 1..=n {
                if d[(a, b)].is_finite() {
                    out.extend(resistance_cap(a, b, d[(a, b)] + ctx.epsilon, "path"));
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(LinearConstraint::new(
                    format!("mm_{i}_{j}"),
                    vec![(x(i, i), 1.0), (x(i, j), -1.0)],
                    Ge,
                    0.0,
                ));
            }
        }
    }
    out
}

/// Build the full model. `apriori` adds the valid inequalities; bounds must
/// be finite on every entry.
pub fn assemble(
    problem: &DesignProblem,
    bounds: &BoundBox,
    apriori: Option<&AprioriContext>,
    cuts: &[CutInequality],
) -> Result<MilpModel> {
    let network = &problem.network;
    let n = problem.dim();
    let m = network.edge_count();
    if bounds.dim() != n {
        return Err(Error::Config(format!("bound box has dimension {}, expected {n}", bounds.dim())));
    }
    let fixed = problem.fixed_mask();
    let mut program = LinearProgram::default();

    let z_vars: Vec<usize> = (0..m)
        .map(|l| {
            if fixed[l] {
                program.add_var(format!("z{l}"), 1.0, 1.0, false)
            } else {
                program.add_var(format!("z{l}"), 0.0, 1.0, true)
            }
        })
        .collect();
    let mut x_vars = Vec::with_capacity(packed_len(n));
    for (i, j) in packed_pairs(n) {
        let (lo, hi) = require_finite(bounds.lower(i, j), bounds.upper(i, j), &format!("X[{i},{j}]"))?;
        x_vars.push(program.add_var(format!("x{i}_{j}"), lo, hi, false));
    }

    let incidence: Vec<Vec<(usize, f64)>> = (0..m).map(|l| reduced_incidence(network, l)).collect();
    let susceptance: Vec<f64> = network.edges().iter().map(|e| e.susceptance).collect();

    let mut y_vars = Vec::new();
    let mut y_lookup: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut mccormick = Vec::new();
    for l in 0..m {
        if fixed[l] {
            continue;
        }
        for &(row, _) in &incidence[l] {
            for col in 0..n {
                let (lo, hi) = require_finite(bounds.lower(row, col), bounds.upper(row, col), "X")?;
                let var = program.add_var(format!("y{l}_{row}_{col}"), lo.min(0.0), hi.max(0.0), false);
                let xv = x_vars[packed_index(n, row, col)];
                mccormick.extend(mccormick_group(var, z_vars[l], xv, lo, hi)?);
                y_vars.push(ProductVar { edge: l, row, col, var });
                y_lookup.insert((l, row, col), var);
            }
        }
    }

    let weights = problem.reduced_weights();
    for (k, (i, j)) in packed_pairs(n).into_iter().enumerate() {
        let c = if i == j { weights[(i, i)] } else { weights[(i, j)] + weights[(j, i)] };
        if c != 0.0 {
            program.objective.push((x_vars[k], c));
        }
    }

    let term = |l: usize, row: usize, col: usize| match y_lookup.get(&(l, row, col)) {
        Some(&v) => v,
        None => x_vars[packed_index(n, row, col)],
    };
    for row in identity_rows(n, &incidence, &susceptance, term) {
        program.add_constraint(row);
    }
    for c in mccormick {
        program.add_constraint(c);
    }
    for c in budget_constraint(problem, &z_vars, &fixed)? {
        program.add_constraint(c);
    }
    if let Some(ctx) = apriori {
        let base = x_vars[0];
        for c in apriori_valid_inequalities(n, ctx, base) {
            program.add_constraint(c);
        }
    }

    let mut model = MilpModel { program, dim: n, z_vars, x_vars, y_vars, fixed, cut_count: 0 };
    for cut in cuts {
        model.add_cut(cut);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StabilityObjective;
    use crate::graph::uniform_network;
    use crate::lp::{HighsBackend, MilpBackend, SolveLimits, SolveStatus};
    use crate::problem::SolveOptions;

    #[test]
    fn packed_layout_is_row_major_upper() {
        let n = 4;
        let pairs = packed_pairs(n);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            assert_eq!(packed_index(n, i, j), k);
            assert_eq!(packed_index(n, j, i), k);
        }
        assert_eq!(pairs.len(), packed_len(n));
    }

    fn eval(c: &LinearConstraint, vals: &[f64]) -> bool {
        c.violation(vals) <= 1e-12
    }

    #[test]
    fn mccormick_exact_at_binary_z() {
        // vars: y=0, z=1, x=2
        let g = mccormick_group(0, 1, 2, 0.0, 1.0).unwrap();
        for x in [0.0, 0.3, 1.0] {
            let ok = |y: f64, z: f64| g.iter().all(|c| eval(c, &[y, z, x]));
            assert!(ok(0.0, 0.0) && !ok(0.1, 0.0));
            assert!(ok(x, 1.0) && !ok(x + 0.1, 1.0) && !ok(x - 0.1, 1.0));
        }
        // degenerate interval pins y = 2z
        let g = mccormick_group(0, 1, 2, 2.0, 2.0).unwrap();
        assert!(g.iter().all(|c| eval(c, &[1.0, 0.5, 2.0])));
        assert!(!g.iter().all(|c| eval(c, &[1.1, 0.5, 2.0])));
        // fractional point: y in [0, 0.5]
        let g = mccormick_group(0, 1, 2, 0.0, 1.0).unwrap();
        let feasible = |y: f64| g.iter().all(|c| eval(c, &[y, 0.5, 0.5]));
        assert!(feasible(0.0) && feasible(0.25) && feasible(0.5));
        assert!(!feasible(-0.01) && !feasible(0.51));
    }

    #[test]
    fn mccormick_needs_finite_bounds() {
        let err = mccormick_group(0, 1, 2, 0.0, f64::INFINITY).unwrap_err();
        assert!(err.to_string().contains("bound tightening must run first"));
    }

    fn triangle_problem(mode: DesignMode) -> DesignProblem {
        let net = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 1.0, false), (1, 3, 1.0, false)]).unwrap();
        let obj = StabilityObjective::from_reduced_weights(&DMatrix::identity(2, 2));
        DesignProblem::new(net, obj, mode, SolveOptions::default()).unwrap()
    }

    #[test]
    fn triangle_model_layout_and_radial_optimum() {
        let p = triangle_problem(DesignMode::Radial);
        let model = assemble(&p, &BoundBox::naive(2, 3.0), None, &[]).unwrap();
        assert_eq!(model.program.integer_count(), 3);
        assert_eq!(model.x_vars.len(), 3);
        assert!(model.y_vars.len() <= 12);
        // edges (1,2),(1,3) touch the reference: one endpoint row each
        assert_eq!(model.y_vars.len(), 8);
        assert_eq!(model.program.fingerprint(), assemble(&p, &BoundBox::naive(2, 3.0), None, &[]).unwrap().program.fingerprint());
        let sol = HighsBackend.solve(&model.program, false, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let v = sol.values.unwrap();
        assert!((sol.objective.unwrap() - 2.0).abs() < 1e-8);
        let z = model.z_values(&v);
        assert!(z[0] > 0.5 && z[1] > 0.5 && z[2] < 0.5);
        assert!(model.product_gap(&v) < 1e-8);
        assert!(model.identity_residual(&p.network, &v) < 1e-7);
    }

    #[test]
    fn single_edge_is_scalar() {
        let net = uniform_network(2, &[(1, 2, 4.0, false)]).unwrap();
        let p = DesignProblem::new(net, StabilityObjective::coherence(2), DesignMode::Radial, SolveOptions::default())
            .unwrap();
        // the only edge is a bridge: fixed, substituted, no product variables
        let model = assemble(&p, &BoundBox::naive(1, 1.0), None, &[]).unwrap();
        assert!(model.y_vars.is_empty());
        let sol = HighsBackend.solve(&model.program, false, &SolveLimits::default()).unwrap();
        assert!((sol.values.unwrap()[model.x_var(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn budget_rules() {
        let p = triangle_problem(DesignMode::Meshed { budget: 1 });
        let err = budget_constraint(&p, &[0, 1, 2], &[false; 3]).unwrap_err();
        assert!(err.to_string().contains("cannot span"));
        let p = triangle_problem(DesignMode::Radial);
        let rows = budget_constraint(&p, &[0, 1, 2], &[false; 3]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sense, ConstraintSense::Eq);
        assert_eq!(rows[0].rhs, 2.0);
        // full budget: cap is vacuous, only the spanning floor remains
        let p = triangle_problem(DesignMode::Meshed { budget: 3 });
        let rows = budget_constraint(&p, &[0, 1, 2], &[false; 3]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sense, ConstraintSense::Ge);
    }

    #[test]
    fn apriori_rows_on_triangle() {
        let lf = DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        let ctx = AprioriContext { full_inverse: lf, bridges: vec![], fixed_paths: None, epsilon: 1e-6 };
        let rows = apriori_valid_inequalities(2, &ctx, 0);
        let res: Vec<_> = rows.iter().filter(|r| r.name.starts_with("res_lo")).collect();
        assert_eq!(res.len(), 1);
        assert!((res[0].rhs - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rows.iter().filter(|r| r.name.starts_with("bridge")).count(), 0);
        assert_eq!(rows.iter().filter(|r| r.name.starts_with("mm_")).count(), 2);
    }
}
