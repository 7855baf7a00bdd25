//! Greedy augmentation and the supermodularity analysis behind its
//! guarantee.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{evaluate_selection, SolutionStatus, TopologySolution};
use crate::dynamics::{invert_spd, StabilityObjective};
use crate::error::{Error, Result};
use crate::graph::PowerNetwork;
use crate::heuristics::greedy_add;
use crate::problem::{DesignMode, DesignProblem};

/// Add `K_add` candidate lines one at a time, each the best single
/// addition.
pub fn greedy_augment(problem: &DesignProblem) -> Result<TopologySolution> {
    let DesignMode::Augment { additional } = problem.mode else {
        return Err(Error::Config("greedy augmentation needs augment mode".into()));
    };
    let net = &problem.network;
    let existing = net.existing_mask();
    if !net.mask_connected(&existing) {
        return Err(Error::DisconnectedExisting);
    }
    let candidates: Vec<usize> = (0..net.edge_count()).filter(|&l| !existing[l]).collect();
    let (mask, steps) = greedy_add(net, &problem.reduced_weights(), &existing, &candidates, additional)?;
    let mut sol = evaluate_selection(problem, &mask, SolutionStatus::Heuristic)?;
    sol.greedy_steps = steps;
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleResult {
    /// Candidate edges `(i, j)` and `(m, n)` and weight edge `(k, l)`, node ids.
    pub first: (u32, u32),
    pub second: (u32, u32),
    pub weight_edge: (u32, u32),
    pub values: [f64; 3],
}

impl TripleResult {
    pub fn holds(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn margin(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermodularityReport {
    pub triples_checked: usize,
    pub triples_holding: usize,
    /// Every triple satisfies all three strict inequalities (vacuous when
    /// there are none).
    pub all_hold: bool,
    pub min_margin: Option<f64>,
    /// The triple attaining the minimal margin.
    pub witness: Option<TripleResult>,
    /// Every triple, when requested.
    pub triples: Vec<TripleResult>,
}

/// Evaluate the three sufficient conditions for every ordered pair of
/// distinct candidate edges and every weight edge `w_kl > 0`. Edges are
/// taken in their stored orientation; entries involving the reference are
/// zero.
pub fn supermodularity_check(
    network: &PowerNetwork,
    existing_inverse: &DMatrix<f64>,
    objective: &StabilityObjective,
    candidates: &[usize],
    keep_all: bool,
) -> SupermodularityReport {
    let g = |a: usize, b: usize| if a == 0 || b == 0 { 0.0 } else { existing_inverse[(a - 1, b - 1)] };
    let weight_edges = objective.weight_edges();
    let id = |v: usize| network.node_id(v);
    let mut checked = 0;
    let mut holding = 0;
    let mut witness: Option<TripleResult> = None;
    let mut triples = Vec::new();
    for &e1 in candidates {
        for &e2 in candidates {
            if e1 == e2 {
                continue;
            }
            let (i, j) = (network.edges()[e1].from, network.edges()[e1].to);
            let (m, n) = (network.edges()[e2].from, network.edges()[e2].to);
            for &(k, l, _) in &weight_edges {
                let values = [
                    (g(i, k) - g(i, l)) - (g(j, k) - g(j, l)),
                    (g(m, k) - g(m, l)) - (g(n, k) - g(n, l)),
                    (g(i, m) - g(i, n)) - (g(j, m) - g(j, n)),
                ];
                let t = TripleResult { first: (id(i), id(j)), second: (id(m), id(n)), weight_edge: (id(k), id(l)), values };
                checked += 1;
                if t.holds() {
                    holding += 1;
                }
                if witness.as_ref().map_or(true, |w| t.margin() < w.margin()) {
                    witness = Some(t.clone());
                }
                if keep_all {
                    triples.push(t);
                }
            }
        }
    }
    SupermodularityReport {
        triples_checked: checked,
        triples_holding: holding,
        all_hold: holding == checked,
        min_margin: witness.as_ref().map(TripleResult::margin),
        witness,
        triples,
    }
}

/// Supermodularity report for an augmentation problem.
pub fn supermodularity_for(problem: &DesignProblem, keep_all: bool) -> Result<SupermodularityReport> {
    let net = &problem.network;
    let existing = net.existing_mask();
    let z: Vec<f64> = existing.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
    let le = invert_spd(&net.reduced_laplacian(&z)).map_err(|_| Error::DisconnectedExisting)?;
    let candidates: Vec<usize> = (0..net.edge_count()).filter(|&l| !existing[l]).collect();
    Ok(supermodularity_check(net, &le, &problem.objective, &candidates, keep_all))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreedyGuarantee {
    /// `(f(A^g) - f(A*)) / (f(0) - f(A*))`.
    pub ratio: f64,
    pub within_bound: bool,
    /// `f(0) = f(A*)`: the ratio is undefined and reported as 0.
    pub degenerate: bool,
}

/// Relative greedy suboptimality against the `1/e` bound.
pub fn greedy_guarantee(f_empty: f64, f_greedy: f64, f_opt: f64) -> GreedyGuarantee {
    let denom = f_empty - f_opt;
    if denom.abs() <= 1e-15 * f_empty.abs().max(1.0) {
        return GreedyGuarantee { ratio: 0.0, within_bound: true, degenerate: true };
    }
    let ratio = (f_greedy - f_opt) / denom;
    GreedyGuarantee { ratio, within_bound: ratio <= (-1.0f64).exp() + 1e-9, degenerate: false }
}
