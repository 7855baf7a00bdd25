//! Entrywise bounds on `X = L~(z)^{-1}` valid for every feasible topology.
//!
//! Augmentation uses the PSD sandwich `L~_f^{-1} <= X <= L~_e^{-1}` and
//! shortest-path resistance caps; new designs start from diagonal lower
//! bounds, nonnegativity and bridge arguments. Upper bounds are then
//! tightened by one linear program per entry.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::invert_spd;
use crate::error::{Error, Result};
use crate::formulation::{
    apriori_valid_inequalities, packed_len, packed_pairs, AprioriContext, BoundBox, BoundSource,
};
use crate::heuristics::{greedy_add, swap_improve, spanning_completion};
use crate::lp::{ConstraintSense, Direction, LinearConstraint, LinearProgram, MilpBackend, SolveLimits, SolveStatus};
use crate::problem::{DesignMode, DesignProblem, TraceWindow};

fn mask_values(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}

/// Bounds from `L~_f^{-1} <= X <= L~_e^{-1}` (arguments are the inverses).
pub fn augmentation_bounds(existing_inverse: &DMatrix<f64>, full_inverse: &DMatrix<f64>) -> BoundBox {
    let n = full_inverse.nrows();
    let (le, lf) = (existing_inverse, full_inverse);
    let mut b = BoundBox::unbounded(n);
    let gap = |i: usize| (le[(i, i)] - lf[(i, i)]).max(0.0);
    for (i, j) in packed_pairs(n) {
        if i == j {
            b.raise_lower(i, i, lf[(i, i)], BoundSource::Lemma1);
            b.lower_upper(i, i, le[(i, i)], BoundSource::Lemma1);
        } else {
            let root = (gap(i) * gap(j)).sqrt();
            b.lower_upper(i, j, lf[(i, j)] + root, BoundSource::Lemma1);
            b.raise_lower(i, j, le[(i, j)] - root, BoundSource::Lemma1);
        }
    }
    b
}

/// `X_ij >= (Lf_ii + Lf_jj - d_ij - eps) / 2` for `i != j`, where `d` holds
/// shortest-path reactances between full node indices. Pairs without a path
/// are skipped.
pub fn resistance_lower_bounds(full_inverse: &DMatrix<f64>, paths: &DMatrix<f64>, epsilon: f64) -> Vec<((usize, usize), f64)> {
    let n = full_inverse.nrows();
    let lf = full_inverse;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = paths[(i + 1, j + 1)];
            if d.is_finite() {
                out.push(((i, j), (lf[(i, i)] + lf[(j, j)] - d - epsilon) / 2.0));
            }
        }
    }
    out
}

/// Lower bounds for a fresh design: `diag(L~_f^{-1})`, nonnegativity,
/// bridge bounds, and in radial mode with a degree-one reference the
/// reactance of the reference line. Upper bounds stay open.
pub fn new_design_bounds(problem: &DesignProblem, full_inverse: &DMatrix<f64>) -> BoundBox {
    let n = problem.dim();
    let eps = problem.options.epsilon;
    let lf = full_inverse;
    let mut b = BoundBox::unbounded(n);
    for (i, j) in packed_pairs(n) {
        if i == j {
            b.raise_lower(i, i, lf[(i, i)], BoundSource::Lemma1);
        } else {
            b.raise_lower(i, j, 0.0, BoundSource::MMatrix);
        }
    }
    for c in problem.critical_edges() {
        if c.near == 0 {
            continue;
        }
        let (i, j) = (c.near - 1, c.far - 1);
        let d = problem.network.edges()[c.edge].reactance();
        b.raise_lower(i, j, (lf[(i, i)] + lf[(j, j)] - d - eps) / 2.0, BoundSource::Cor1);
    }
    if problem.mode == DesignMode::Radial {
        let incident: Vec<usize> =
            (0..problem.network.edge_count()).filter(|&l| problem.network.edges()[l].from == 0).collect();
        if incident.len() == 1 {
            let d = problem.network.edges()[incident[0]].reactance();
            for (i, j) in packed_pairs(n) {
                b.raise_lower(i, j, d - eps, BoundSource::Cor2);
            }
        }
    }
    b
}

/// Sum of the `n` largest reactances: no simple path is longer, so no
/// effective resistance is larger.
pub fn worst_case_resistance(problem: &DesignProblem) -> f64 {
    let mut x: Vec<f64> = problem.network.edges().iter().map(|e| e.reactance()).collect();
    x.sort_by(|a, b| b.total_cmp(a));
    x.iter().take(problem.dim()).sum()
}

/// Everything the LP sweep needs.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub weights: DMatrix<f64>,
    /// Current box; finite sides become variable bounds.
    pub bounds: BoundBox,
    pub apriori: AprioriContext,
    pub window_upper: Option<f64>,
    pub window_lower: Option<f64>,
}

fn sweep_program(ctx: &SweepContext) -> LinearProgram {
    let n = ctx.bounds.dim();
    let mut lp = LinearProgram::default();
    for (i, j) in packed_pairs(n) {
        lp.add_var(format!("x{i}_{j}"), ctx.bounds.lower(i, j), ctx.bounds.upper(i, j), false);
    }
    for c in apriori_valid_inequalities(n, &ctx.apriori, 0) {
        lp.add_constraint(c);
    }
    let trace: Vec<(usize, f64)> = packed_pairs(n)
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| (k, if i == j { ctx.weights[(i, i)] } else { ctx.weights[(i, j)] + ctx.weights[(j, i)] }))
        .filter(|&(_, c)| c != 0.0)
        .collect();
    if let Some(cap) = ctx.window_upper {
        lp.add_constraint(LinearConstraint::new("window_hi", trace.clone(), ConstraintSense::Le, cap));
    }
    if let Some(floor) = ctx.window_lower {
        lp.add_constraint(LinearConstraint::new("window_lo", trace, ConstraintSense::Ge, floor));
    }
    lp
}

fn slack(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

/// Optimise every entry of `X` over the sweep polytope, in parallel.
/// Returns one value per packed entry.
fn sweep(ctx: &SweepContext, backend: &dyn MilpBackend, direction: Direction, limits: &SolveLimits) -> Result<Vec<f64>> {
    let base = sweep_program(ctx);
    let n = ctx.bounds.dim();
    (0..packed_len(n))
        .into_par_iter()
        .map(|k| {
            let mut lp = base.clone();
            lp.direction = direction;
            lp.objective = vec![(k, 1.0)];
            let sol = backend.solve(&lp, true, limits)?;
            match sol.status {
                SolveStatus::Optimal => Ok(sol.objective.unwrap_or(0.0)),
                SolveStatus::Unbounded => {
                    let (i, j) = packed_pairs(n)[k];
                    Err(Error::UnboundedSweep(format!("entry ({i}, {j}) is unbounded")))
                }
                SolveStatus::Infeasible => Err(Error::Infeasible("bound sweep polytope is empty".into())),
                s => Err(Error::Backend(format!("bound sweep LP ended with {s:?}"))),
            }
        })
        .collect()
}

/// Upper bounds from one maximisation LP per entry.
pub fn lp_bound_sweep(ctx: &SweepContext, backend: &dyn MilpBackend, limits: &SolveLimits) -> Result<BoundBox> {
    let n = ctx.bounds.dim();
    let maxima = sweep(ctx, backend, Direction::Maximize, limits)?;
    let mut out = ctx.bounds.clone();
    for (k, (i, j)) in packed_pairs(n).into_iter().enumerate() {
        out.lower_upper(i, j, maxima[k] + slack(maxima[k]), BoundSource::LpSweep);
    }
    Ok(out)
}

/// Lower bounds from one minimisation LP per entry; only useful with a
/// lower trace window.
pub fn lp_lower_sweep(ctx: &SweepContext, backend: &dyn MilpBackend, limits: &SolveLimits) -> Result<BoundBox> {
    let n = ctx.bounds.dim();
    let minima = sweep(ctx, backend, Direction::Minimize, limits)?;
    let mut out = ctx.bounds.clone();
    for (k, (i, j)) in packed_pairs(n).into_iter().enumerate() {
        out.raise_lower(i, j, minima[k] - slack(minima[k]), BoundSource::LpSweep);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundPath {
    Augmentation,
    NewDesign,
    Naive,
}

/// Bounds, the inequalities used to derive them, and bookkeeping.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub bounds: BoundBox,
    pub apriori: Option<AprioriContext>,
    pub path: BoundPath,
    pub window_upper: Option<f64>,
    pub lp_count: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundEntry {
    pub i: u32,
    pub j: u32,
    pub lower: f64,
    pub upper: f64,
    pub lower_source: BoundSource,
    pub upper_source: BoundSource,
}

impl BoundsReport {
    /// Per-entry intervals labelled with node ids.
    pub fn entries(&self, problem: &DesignProblem) -> Vec<BoundEntry> {
        let b = &self.bounds;
        packed_pairs(b.dim())
            .into_iter()
            .map(|(i, j)| BoundEntry {
                i: problem.network.node_id(i + 1),
                j: problem.network.node_id(j + 1),
                lower: b.lower(i, j),
                upper: b.upper(i, j),
                lower_source: b.lower_source(i, j),
                upper_source: b.upper_source(i, j),
            })
            .collect()
    }
}

/// `X >= 0`, `X <= sum of all reactances`, no valid inequalities.
pub fn naive_bounds(problem: &DesignProblem) -> BoundsReport {
    let total: f64 = problem.network.edges().iter().map(|e| e.reactance()).sum();
    BoundsReport {
        bounds: BoundBox::naive(problem.dim(), total),
        apriori: None,
        path: BoundPath::Naive,
        window_upper: None,
        lp_count: 0,
        seconds: 0.0,
    }
}

/// Objective cap used by the sweep.
fn trace_window(problem: &DesignProblem, bounds: &BoundBox, existing_inverse: Option<&DMatrix<f64>>) -> Result<f64> {
    let w = problem.reduced_weights();
    let n = problem.dim();
    match problem.options.trace_window {
        TraceWindow::Global => {
            if let Some(le) = existing_inverse {
                // the objective only decreases as lines are added
                let f = (&w * le).trace();
                return Ok(f + slack(f));
            }
            let mut cap = 0.0;
            for i in 0..n {
                let ui = bounds.upper(i, i);
                let mut ci = w[(i, i)];
                for j in 0..n {
                    if j != i {
                        ci += w[(i, j)].max(0.0);
                    }
                }
                cap += ci.max(0.0) * ui;
            }
            Ok(cap + slack(cap))
        }
        TraceWindow::Incumbent => {
            let mask = incumbent_topology(problem)?;
            let x = invert_spd(&problem.network.reduced_laplacian(&mask_values(&mask)))?;
            let f = (&w * x).trace();
            Ok(f + slack(f))
        }
    }
}

/// Swap rounds spent polishing the heuristic topology.
const SWAP_ROUNDS: usize = 50;

/// A cheap feasible topology: forced lines completed to a spanning tree,
/// grown greedily up to the budget (not in radial mode), then improved by
/// single-line swaps.
pub fn incumbent_topology(problem: &DesignProblem) -> Result<Vec<bool>> {
    let net = &problem.network;
    let fixed = problem.fixed_mask();
    let weights = problem.reduced_weights();
    let (_, max_edges) = problem.edge_count_range();
    let mut mask = spanning_completion(net, &fixed)?;
    let used = mask.iter().filter(|&&m| m).count();
    if used > max_edges {
        return Err(Error::Infeasible(format!("no spanning topology within {max_edges} lines")));
    }
    if problem.mode != DesignMode::Radial {
        let candidates: Vec<usize> = (0..net.edge_count()).filter(|&l| !mask[l]).collect();
        mask = greedy_add(net, &weights, &mask, &candidates, max_edges - used)?.0;
    }
    let movable: Vec<bool> = fixed.iter().map(|&f| !f).collect();
    Ok(swap_improve(net, &weights, &mask, &movable, SWAP_ROUNDS)?.0)
}

/// Shortest paths over the lines present in every feasible topology
/// (augment mode).
fn fixed_paths(problem: &DesignProblem) -> Option<DMatrix<f64>> {
    match problem.mode {
        DesignMode::Augment { .. } => Some(problem.network.shortest_path_reactances(&problem.fixed_mask())),
        _ => None,
    }
}

/// Full bound computation for a problem: closed-form bounds for its mode,
/// then the LP sweep.
pub fn compute_bounds(problem: &DesignProblem, backend: &dyn MilpBackend) -> Result<BoundsReport> {
    let start = Instant::now();
    let net = &problem.network;
    let n = problem.dim();
    let eps = problem.options.epsilon;
    let full_inverse = invert_spd(&net.reduced_laplacian(&vec![1.0; net.edge_count()]))?;

    let existing_inverse = match problem.mode {
        DesignMode::Augment { .. } => {
            let existing = mask_values(&problem.fixed_mask());
            invert_spd(&net.reduced_laplacian(&existing)).ok()
        }
        _ => None,
    };
    let (mut bounds, path) = match &existing_inverse {
        Some(le) => {
            let mut b = augmentation_bounds(le, &full_inverse);
            let paths = net.shortest_path_reactances(&problem.fixed_mask());
            for ((i, j), v) in resistance_lower_bounds(&full_inverse, &paths, eps) {
                b.raise_lower(i, j, v, BoundSource::Lemma2);
            }
            (b, BoundPath::Augmentation)
        }
        None => (new_design_bounds(problem, &full_inverse), BoundPath::NewDesign),
    };
    let worst = worst_case_resistance(problem);
    for (i, j) in packed_pairs(n) {
        bounds.raise_lower(i, j, 0.0, BoundSource::MMatrix);
        bounds.lower_upper(i, j, worst, BoundSource::WorstCase);
    }

    let bridges = problem
        .critical_edges()
        .iter()
        .map(|c| (c.near, c.far, net.edges()[c.edge].reactance()))
        .collect();
    let apriori = AprioriContext { full_inverse, bridges, fixed_paths: fixed_paths(problem), epsilon: eps };
    let window = trace_window(problem, &bounds, existing_inverse.as_ref())?;
    let ctx = SweepContext {
        weights: problem.reduced_weights(),
        bounds,
        apriori: apriori.clone(),
        window_upper: Some(window),
        window_lower: None,
    };
    let limits = SolveLimits { time_limit: None, ..Default::default() };
    let swept = lp_bound_sweep(&ctx, backend, &limits)?;
    Ok(BoundsReport {
        bounds: swept,
        apriori: Some(apriori),
        path,
        window_upper: Some(window),
        lp_count: packed_len(n),
        seconds: start.elapsed().as_secs_f64(),
    })
}
