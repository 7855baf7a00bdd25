//! Splitting a design task into independent sub-networks, and node-level
//! edits of a task.
//!
//! Removing the reference node leaves the non-reference nodes in components
//! `C_1, ..., C_p`. Every selection then has a block-diagonal `L~(z)`, so
//! `X` and `trace(W~ X)` separate whenever the weights do and the budget
//! does not couple the blocks.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{solve_single, SolutionStatus, SolveStats, TopologySolution};
use crate::dynamics::{ObjectivePreset, StabilityObjective};
use crate::error::{Error, Result};
use crate::formulation::{BoundBox, BoundSource};
use crate::graph::{EdgeSpec, Node, NodeKind, PowerNetwork, UnionFind};
use crate::lp::MilpBackend;
use crate::oracle::verify_solution;
use crate::problem::{DesignMode, DesignProblem};
use crate::tightening::BoundsReport;

/// One independent part of a design task.
#[derive(Debug, Clone)]
pub struct SubProblem {
    pub problem: DesignProblem,
    /// Sub-network edge index to original edge index.
    pub edge_map: Vec<usize>,
    /// Sub-network reduced index to original reduced index.
    pub reduced_map: Vec<usize>,
}

/// Groups of non-reference nodes joined by a line that avoids the reference
/// or by a nonzero reduced weight, each as sorted internal node indices.
fn components(network: &PowerNetwork, weights: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = network.node_count();
    let mut uf = UnionFind::new(n);
    for e in network.edges() {
        if e.from != 0 {
            uf.union(e.from, e.to);
        }
    }
    for i in 0..weights.nrows() {
        for j in i + 1..weights.ncols() {
            if weights[(i, j)] != 0.0 || weights[(j, i)] != 0.0 {
                uf.union(i + 1, j + 1);
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in 1..n {
        let r = uf.find(v);
        match roots.iter().position(|&x| x == r) {
            Some(k) => out[k].push(v),
            None => {
                roots.push(r);
                out.push(vec![v]);
            }
        }
    }
    out
}

fn identity_part(problem: &DesignProblem) -> SubProblem {
    SubProblem {
        problem: problem.clone(),
        edge_map: (0..problem.network.edge_count()).collect(),
        reduced_map: (0..problem.dim()).collect(),
    }
}

/// Independent parts of `problem`; a single identity part when the task
/// does not separate exactly.
pub fn parallel_decomposition(problem: &DesignProblem) -> Result<Vec<SubProblem>> {
    let net = &problem.network;
    let weights = problem.reduced_weights();
    let comps = components(net, &weights);
    if comps.len() < 2 {
        return Ok(vec![identity_part(problem)]);
    }
    let coupled = match problem.mode {
        DesignMode::Radial => false,
        DesignMode::Meshed { budget } => budget < net.edge_count(),
        DesignMode::Augment { additional } => additional < net.edges().iter().filter(|e| !e.existing).count(),
    };
    if coupled {
        return Ok(vec![identity_part(problem)]);
    }

    let mut parts = Vec::with_capacity(comps.len());
    for comp in &comps {
        let members: HashSet<usize> = comp.iter().copied().collect();
        let mut nodes = vec![net.nodes()[0].clone()];
        nodes.extend(comp.iter().map(|&v| net.nodes()[v].clone()));
        let specs: Vec<EdgeSpec> = net
            .edges()
            .iter()
            .filter(|e| members.contains(&e.to))
            .map(|e| EdgeSpec {
                from: net.node_id(e.from),
                to: net.node_id(e.to),
                susceptance: e.susceptance,
                existing: e.existing,
            })
            .collect();
        let sub_net = PowerNetwork::new(nodes, net.reference_id(), specs)?;
        let edge_map = sub_net
            .edges()
            .iter()
            .map(|e| {
                let a = net.node_index(sub_net.node_id(e.from)).expect("node kept");
                let b = net.node_index(sub_net.node_id(e.to)).expect("node kept");
                net.edge_between(a, b).expect("edge kept")
            })
            .collect::<Vec<_>>();
        let reduced_map: Vec<usize> = (1..sub_net.node_count())
            .map(|v| net.node_index(sub_net.node_id(v)).expect("node kept") - 1)
            .collect();
        let sub_w = weights.select_rows(&reduced_map).select_columns(&reduced_map);
        let mode = match problem.mode {
            DesignMode::Radial => DesignMode::Radial,
            DesignMode::Meshed { .. } => DesignMode::Meshed { budget: sub_net.edge_count() },
            DesignMode::Augment { .. } => {
                DesignMode::Augment { additional: sub_net.edges().iter().filter(|e| !e.existing).count() }
            }
        };
        let sub = DesignProblem::new(
            sub_net,
            StabilityObjective::from_reduced_weights(&sub_w),
            mode,
            problem.options.clone(),
        )?;
        parts.push(SubProblem { problem: sub, edge_map, reduced_map });
    }
    Ok(parts)
}

fn status_rank(s: SolutionStatus) -> u8 {
    match s {
        SolutionStatus::Optimal => 0,
        SolutionStatus::TimeLimit => 1,
        SolutionStatus::Heuristic => 2,
    }
}

/// Solve every part in parallel and reassemble a solution of `problem`.
pub(super) fn solve_parts(
    problem: &DesignProblem,
    parts: &[SubProblem],
    backend: &dyn MilpBackend,
) -> Result<TopologySolution> {
    let start = Instant::now();
    let solved: Vec<TopologySolution> =
        parts.par_iter().map(|p| solve_single(&p.problem, backend)).collect::<Result<_>>()?;

    let n = problem.dim();
    let mut mask = vec![false; problem.network.edge_count()];
    let mut x = DMatrix::zeros(n, n);
    let mut bounds = BoundBox::unbounded(n);
    for i in 0..n {
        for j in i..n {
            bounds.set(i, j, (0.0, BoundSource::Block), (0.0, BoundSource::Block));
        }
    }
    let mut status = SolutionStatus::Optimal;
    let mut objective = 0.0;
    let mut dual_bound = Some(0.0);
    let mut stats = SolveStats { subproblems: parts.len(), ..Default::default() };
    let mut cut_log = Vec::new();
    let mut lp_count = 0;
    let mut bound_seconds = 0.0;
    let max_opt = |a: &mut Option<f64>, b: Option<f64>| {
        if let Some(b) = b {
            *a = Some(a.map_or(b, |v: f64| v.max(b)));
        }
    };
    for (part, sol) in parts.iter().zip(&solved) {
        for (l, &sel) in sol.mask.iter().enumerate() {
            mask[part.edge_map[l]] = sel;
        }
        let map = &part.reduced_map;
        for a in 0..map.len() {
            for b in 0..map.len() {
                x[(map[a], map[b])] = sol.x[(a, b)];
            }
        }
        if let Some(rep) = &sol.bounds {
            for a in 0..map.len() {
                for b in a..map.len() {
                    let (i, j) = (map[a].min(map[b]), map[a].max(map[b]));
                    bounds.set(
                        i,
                        j,
                        (rep.bounds.lower(a, b), rep.bounds.lower_source(a, b)),
                        (rep.bounds.upper(a, b), rep.bounds.upper_source(a, b)),
                    );
                }
            }
            lp_count += rep.lp_count;
            bound_seconds += rep.seconds;
            stats.bound_path = Some(rep.path);
        }
        if status_rank(sol.status) > status_rank(status) {
            status = sol.status;
        }
        objective += sol.objective;
        dual_bound = match (dual_bound, sol.dual_bound) {
            (Some(d), Some(s)) => Some(d + s),
            _ => None,
        };
        let st = &sol.stats;
        stats.cut_rounds = stats.cut_rounds.max(st.cut_rounds);
        stats.cuts_added += st.cuts_added;
        stats.cuts_rejected += st.cuts_rejected;
        stats.node_count = match (stats.node_count, st.node_count) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        stats.variables += st.variables;
        stats.constraints += st.constraints;
        stats.integer_variables += st.integer_variables;
        stats.milp_seconds += st.milp_seconds;
        max_opt(&mut stats.incumbent_product_gap, st.incumbent_product_gap);
        max_opt(&mut stats.incumbent_identity_residual, st.incumbent_identity_residual);
        max_opt(&mut stats.polished_product_gap, st.polished_product_gap);
        max_opt(&mut stats.polished_identity_residual, st.polished_identity_residual);
        cut_log.extend(sol.cut_log.iter().cloned());
    }
    let rounds = solved.iter().map(|s| s.stats.relaxation_objectives.len()).max().unwrap_or(0);
    stats.relaxation_objectives = (0..rounds)
        .map(|r| {
            solved
                .iter()
                .map(|s| {
                    let ro = &s.stats.relaxation_objectives;
                    ro.get(r).or(ro.last()).copied().unwrap_or(0.0)
                })
                .sum()
        })
        .collect();
    stats.bound_provenance = bounds.provenance_counts();
    stats.bound_lp_count = lp_count;
    stats.bound_seconds = bound_seconds;
    stats.total_seconds = start.elapsed().as_secs_f64();

    let verification = verify_solution(problem, &mask, &x, objective, Some(&bounds));
    if !verification.passed() {
        log::warn!("verification failed: {:?}", verification.failures);
    }
    let gap = dual_bound.map(|d| ((objective - d) / objective.abs().max(1e-12)).max(0.0));
    let h2_squared = super::h2_of_selection(problem, &mask).ok();
    Ok(TopologySolution {
        status,
        mask,
        x,
        objective,
        h2_squared,
        dual_bound,
        gap,
        stats: stats.clone(),
        verification,
        bounds: Some(BoundsReport {
            bounds,
            apriori: None,
            path: stats.bound_path.unwrap_or(crate::tightening::BoundPath::Naive),
            window_upper: None,
            lp_count,
            seconds: bound_seconds,
        }),
        cut_log,
        greedy_steps: Vec::new(),
    })
}

/// A node to add together with its incident candidate lines.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAddition {
    pub node: Node,
    pub edges: Vec<EdgeSpec>,
}

/// Task with nodes removed (with their lines) and nodes added. Coherence
/// objectives are rebuilt for the new node set; custom weights keep the
/// pairs between surviving nodes.
pub fn node_change(problem: &DesignProblem, remove: &[u32], additions: &[NodeAddition]) -> Result<DesignProblem> {
    let net = &problem.network;
    if remove.contains(&net.reference_id()) {
        return Err(Error::Config(format!("cannot remove the reference node {}", net.reference_id())));
    }
    for id in remove {
        if net.node_index(*id).is_none() {
            return Err(Error::Config(format!("node {id} is not in the network")));
        }
    }
    let gone: HashSet<u32> = remove.iter().copied().collect();
    let mut nodes: Vec<Node> = net.nodes().iter().filter(|n| !gone.contains(&n.id)).cloned().collect();
    let mut specs: Vec<EdgeSpec> = net
        .edges()
        .iter()
        .filter(|e| !gone.contains(&net.node_id(e.from)) && !gone.contains(&net.node_id(e.to)))
        .map(|e| EdgeSpec {
            from: net.node_id(e.from),
            to: net.node_id(e.to),
            susceptance: e.susceptance,
            existing: e.existing,
        })
        .collect();
    for add in additions {
        nodes.push(add.node.clone());
        specs.extend(add.edges.iter().cloned());
    }
    let new_net = PowerNetwork::new(nodes, net.reference_id(), specs)?;

    let objective = match problem.objective.preset() {
        ObjectivePreset::Coherence if new_net.has_zero_injection() => {
            let machines: Vec<usize> = (0..new_net.node_count())
                .filter(|&i| new_net.nodes()[i].kind == NodeKind::Machine)
                .collect();
            StabilityObjective::coherence_over(new_net.node_count(), &machines)
        }
        ObjectivePreset::Coherence => StabilityObjective::coherence(new_net.node_count()),
        ObjectivePreset::Custom => {
            let pairs: Vec<(usize, usize, f64)> = problem
                .objective
                .weight_edges()
                .into_iter()
                .filter_map(|(k, l, w)| {
                    let a = new_net.node_index(net.node_id(k))?;
                    let b = new_net.node_index(net.node_id(l))?;
                    Some((a, b, w))
                })
                .collect();
            StabilityObjective::custom(new_net.node_count(), &pairs, &[])?
        }
    };
    DesignProblem::new(new_net, objective, problem.mode, problem.options.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::uniform_network;
    use crate::oracle::enumerate_optimal;
    use crate::problem::SolveOptions;

    /// Two triangles hanging off reference node 1: {2, 3} and {4, 5}.
    fn bowtie(mode: DesignMode) -> DesignProblem {
        let net = uniform_network(
            5,
            &[
                (1, 2, 1.0, false),
                (1, 3, 2.0, false),
                (2, 3, 1.0, false),
                (1, 4, 1.0, false),
                (1, 5, 0.5, false),
                (4, 5, 3.0, false),
            ],
        )
        .unwrap();
        let mut w = DMatrix::identity(4, 4);
        w[(0, 1)] = 0.5;
        w[(1, 0)] = 0.5;
        DesignProblem::new(net, StabilityObjective::from_reduced_weights(&w), mode, SolveOptions::default()).unwrap()
    }

    #[test]
    fn splits_into_two_parts() {
        let parts = parallel_decomposition(&bowtie(DesignMode::Radial)).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].reduced_map, vec![0, 1]);
        assert_eq!(parts[1].reduced_map, vec![2, 3]);
        assert_eq!(parts[0].edge_map.len(), 3);
        let w0 = parts[0].problem.reduced_weights();
        assert_eq!(w0[(0, 1)], 0.5);
    }

    #[test]
    fn coupled_budget_or_weights_do_not_split() {
        assert_eq!(parallel_decomposition(&bowtie(DesignMode::Meshed { budget: 5 })).unwrap().len(), 1);
        assert_eq!(parallel_decomposition(&bowtie(DesignMode::Meshed { budget: 6 })).unwrap().len(), 2);
        let p = bowtie(DesignMode::Radial);
        let coh = DesignProblem::new(
            p.network.clone(),
            StabilityObjective::coherence(5),
            DesignMode::Radial,
            SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(parallel_decomposition(&coh).unwrap().len(), 1);
    }

    #[test]
    fn decomposed_solve_matches_oracle() {
        let p = bowtie(DesignMode::Radial);
        let sol = super::super::solve(&p).unwrap();
        assert_eq!(sol.stats.subproblems, 2);
        let best = enumerate_optimal(&p, false).unwrap().best_objective().unwrap();
        assert!((sol.objective - best).abs() <= 1e-7 * best);
        assert!(sol.verification.passed(), "{:?}", sol.verification);
        let whole = super::super::solve(&p.with_options(SolveOptions { decompose: false, ..Default::default() }))
            .unwrap();
        assert!((whole.objective - sol.objective).abs() <= 1e-7 * best);
    }

    #[test]
    fn node_change_rules() {
        let p = DesignProblem::new(
            uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 1.0, false), (1, 3, 1.0, false)]).unwrap(),
            StabilityObjective::coherence(3),
            DesignMode::Radial,
            SolveOptions::default(),
        )
        .unwrap();
        assert!(node_change(&p, &[1], &[]).is_err());
        let smaller = node_change(&p, &[3], &[]).unwrap();
        assert_eq!(smaller.network.node_count(), 2);
        assert_eq!(smaller.objective, StabilityObjective::coherence(2));
        let add = NodeAddition {
            node: Node { id: 9, inertia: 2.0, damping: 1.0, kind: NodeKind::Machine },
            edges: vec![EdgeSpec { from: 9, to: 2, susceptance: 4.0, existing: false }],
        };
        let bigger = node_change(&p, &[], &[add]).unwrap();
        assert_eq!(bigger.network.node_count(), 4);
        assert_eq!(bigger.network.edge_count(), 4);
    }
}
