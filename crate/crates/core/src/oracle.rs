//! Brute-force ground truth and solution verification.
//!
//! Enumeration inverts `L~(z)` for every admissible connected selection and
//! shares no model-building code with the MILP path.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::invert_spd;
use crate::error::{Error, Result};
use crate::formulation::BoundBox;
use crate::problem::{DesignMode, DesignProblem};

pub const MAX_EDGES: usize = 22;
pub const WARN_EDGES: usize = 16;
pub const RANKED_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSelection {
    pub edges: Vec<usize>,
    pub objective: f64,
}

fn rank_order(a: &RankedSelection, b: &RankedSelection) -> Ordering {
    a.objective.total_cmp(&b.objective).then_with(|| a.edges.cmp(&b.edges))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumerationReport {
    pub best: Option<RankedSelection>,
    /// Best selections in order, capped at [`RANKED_CAP`]; empty unless
    /// requested.
    pub ranked: Vec<RankedSelection>,
    pub feasible_count: u64,
    pub examined: u64,
}

impl EnumerationReport {
    pub fn is_feasible(&self) -> bool {
        self.best.is_some()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.objective)
    }

    /// `rank,objective,edges` with edges as `from-to` node-id pairs.
    pub fn write_csv<W: Write>(&self, problem: &DesignProblem, mut out: W) -> Result<()> {
        writeln!(out, "rank,objective,edges")?;
        for (r, sel) in self.ranked.iter().enumerate() {
            let edges: Vec<String> = sel
                .edges
                .iter()
                .map(|&l| {
                    let e = &problem.network.edges()[l];
                    format!("{}-{}", problem.network.node_id(e.from), problem.network.node_id(e.to))
                })
                .collect();
            writeln!(out, "{},{:.17e},{}", r + 1, sel.objective, edges.join(";"))?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Partial {
    ranked: Vec<RankedSelection>,
    best: Option<RankedSelection>,
    feasible: u64,
    examined: u64,
}

impl Partial {
    fn push(&mut self, sel: RankedSelection, keep_all: bool) {
        if self.best.as_ref().map_or(true, |b| rank_order(&sel, b) == Ordering::Less) {
            self.best = Some(sel.clone());
        }
        if keep_all {
            self.ranked.push(sel);
            if self.ranked.len() >= 2 * RANKED_CAP {
                self.ranked.sort_by(rank_order);
                self.ranked.truncate(RANKED_CAP);
            }
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.feasible += other.feasible;
        self.examined += other.examined;
        if let Some(b) = other.best {
            if self.best.as_ref().map_or(true, |s| rank_order(&b, s) == Ordering::Less) {
                self.best = Some(b);
            }
        }
        self.ranked.extend(other.ranked);
        self.ranked.sort_by(rank_order);
        self.ranked.truncate(RANKED_CAP);
        self
    }
}

/// Exact optimum over every selection admitted by the problem's mode.
pub fn enumerate_optimal(problem: &DesignProblem, keep_all: bool) -> Result<EnumerationReport> {
    let net = &problem.network;
    let m = net.edge_count();
    // existing lines belong to every augmentation; all other lines are free
    let always: Vec<bool> = match problem.mode {
        DesignMode::Augment { .. } => net.existing_mask(),
        _ => vec![false; m],
    };
    let free: Vec<usize> = (0..m).filter(|&l| !always[l]).collect();
    let f = free.len();
    if f > MAX_EDGES {
        return Err(Error::Config(format!("enumeration is capped at {MAX_EDGES} free candidate lines, got {f}")));
    }
    if f > WARN_EDGES {
        log::warn!("enumerating 2^{f} selections; this may take a while");
    }
    let n = problem.dim();
    let base = always.iter().filter(|&&a| a).count();
    let weights = problem.reduced_weights();
    let total: u64 = 1 << f;
    let chunk: u64 = 1 << 12;
    let chunks = total.div_ceil(chunk);

    let result = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut part = Partial::default();
            let mut mask = always.clone();
            let mut z = vec![0.0; m];
            let mut degree = vec![0usize; net.node_count()];
            for bits in c * chunk..((c + 1) * chunk).min(total) {
                part.examined += 1;
                if base + (bits.count_ones() as usize) < n {
                    continue;
                }
                for (k, &l) in free.iter().enumerate() {
                    mask[l] = bits >> k & 1 == 1;
                }
                degree.iter_mut().for_each(|d| *d = 0);
                for l in 0..m {
                    z[l] = if mask[l] { 1.0 } else { 0.0 };
                    if mask[l] {
                        degree[net.edges()[l].from] += 1;
                        degree[net.edges()[l].to] += 1;
                    }
                }
                if degree.iter().any(|&d| d == 0) || !problem.admits(&mask) || !net.is_connected(&z) {
                    continue;
                }
                let Ok(x) = invert_spd(&net.reduced_laplacian(&z)) else { continue };
                part.feasible += 1;
                let edges: Vec<usize> = (0..m).filter(|&l| mask[l]).collect();
                part.push(RankedSelection { edges, objective: (&weights * x).trace() }, keep_all);
            }
            part
        })
        .reduce(Partial::default, Partial::merge);

    Ok(EnumerationReport {
        best: result.best,
        ranked: if keep_all { result.ranked } else { Vec::new() },
        feasible_count: result.feasible,
        examined: result.examined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRecord {
    pub budget_ok: bool,
    pub fixed_edges_ok: bool,
    pub connected: bool,
    pub identity_residual: f64,
    pub identity_ok: bool,
    pub objective_recomputed: Option<f64>,
    pub objective_error: Option<f64>,
    pub objective_ok: bool,
    pub box_excess: Option<f64>,
    pub in_box: Option<bool>,
    pub failures: Vec<String>,
}

impl VerificationRecord {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check a reported selection, its `X` and objective.
pub fn verify_solution(
    problem: &DesignProblem,
    mask: &[bool],
    x: &DMatrix<f64>,
    objective: f64,
    bounds: Option<&BoundBox>,
) -> VerificationRecord {
    let net = &problem.network;
    let mut failures = Vec::new();
    let budget_ok = problem.admits(mask);
    let fixed_edges_ok = match problem.mode {
        crate::problem::DesignMode::Augment { .. } => {
            net.existing_mask().iter().zip(mask).all(|(&e, &s)| !e || s)
        }
        _ => true,
    };
    if !budget_ok {
        failures.push("selection violates the budget or mode".to_string());
    }
    if !fixed_edges_ok {
        failures.push("an existing line was dropped".to_string());
    }
    let z: Vec<f64> = mask.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let connected = net.is_connected(&z);
    if !connected {
        failures.push("selection does not span the network".to_string());
    }
    let lap = net.reduced_laplacian(&z);
    let n = problem.dim();
    let identity_residual = if x.nrows() == n && x.ncols() == n {
        (&lap * x - DMatrix::identity(n, n)).amax()
    } else {
        f64::INFINITY
    };
    let identity_ok = identity_residual <= problem.options.identity_tol;
    if !identity_ok {
        failures.push(format!("identity residual {identity_residual:.3e} exceeds {:.1e}", problem.options.identity_tol));
    }
    let objective_recomputed = invert_spd(&lap).ok().map(|inv| (problem.reduced_weights() * inv).trace());
    let objective_error = objective_recomputed.map(|f| (f - objective).abs() / f.abs().max(1.0));
    let objective_ok = objective_error.is_some_and(|e| e <= 1e-9);
    if !objective_ok {
        failures.push(format!("objective mismatch: reported {objective}, recomputed {objective_recomputed:?}"));
    }
    let box_excess = bounds.map(|b| b.excess(x));
    let in_box = box_excess.map(|e| e <= 1e-9);
    if in_box == Some(false) {
        failures.push(format!("X leaves the bound box by {:.3e}", box_excess.unwrap_or(0.0)));
    }
    VerificationRecord {
        budget_ok,
        fixed_edges_ok,
        connected,
        identity_residual,
        identity_ok,
        objective_recomputed,
        objective_error,
        objective_ok,
        box_excess,
        in_box,
        failures,
    }
}
