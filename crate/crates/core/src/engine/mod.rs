//! End-to-end solve: bounds, model, cutting-plane rounds, integer solve,
//! polishing and verification.

mod decompose;
mod greedy;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cuts::{assemble_y, random_cuts, separate, CutLogEntry, CutPool, SeparationConfig};
use crate::dynamics::{invert_spd, kron_state_matrices, observability_gramian, state_matrices};
use crate::error::{Error, Result};
use crate::formulation::{assemble, MilpModel};
use crate::lp::{HighsBackend, MilpBackend, SolveLimits, SolveStatus};
use crate::oracle::{verify_solution, VerificationRecord};
use crate::problem::DesignProblem;
use crate::tightening::{compute_bounds, incumbent_topology, lp_lower_sweep, naive_bounds, BoundPath, BoundsReport, SweepContext};

pub use decompose::{node_change, parallel_decomposition, NodeAddition, SubProblem};
pub use greedy::{
    greedy_augment, greedy_guarantee, supermodularity_check, supermodularity_for, GreedyGuarantee, SupermodularityReport, TripleResult,
};
pub use report::{artifact, solution_summary, ARTIFACT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionStatus {
    Optimal,
    /// Time limit reached; the incumbent is feasible but not proven optimal.
    TimeLimit,
    /// Produced by a heuristic; no optimality claim.
    Heuristic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub bound_path: Option<BoundPath>,
    pub bound_provenance: BTreeMap<String, usize>,
    pub bound_lp_count: usize,
    pub bound_seconds: f64,
    pub relaxation_objectives: Vec<f64>,
    pub cut_rounds: usize,
    pub cuts_added: usize,
    pub cuts_rejected: usize,
    pub node_count: Option<i64>,
    pub variables: usize,
    pub constraints: usize,
    pub integer_variables: usize,
    pub milp_seconds: f64,
    pub total_seconds: f64,
    /// `max |y - z X|` at the raw backend incumbent.
    pub incumbent_product_gap: Option<f64>,
    /// `||L~(z) X - I||` at the raw backend incumbent.
    pub incumbent_identity_residual: Option<f64>,
    /// Same quantities after re-solving with `z` fixed to the rounded binaries.
    pub polished_product_gap: Option<f64>,
    pub polished_identity_residual: Option<f64>,
    pub subproblems: usize,
}

#[derive(Debug, Clone)]
pub struct TopologySolution {
    pub status: SolutionStatus,
    pub mask: Vec<bool>,
    /// `X = L~(z)^{-1}` as produced by the model.
    pub x: DMatrix<f64>,
    /// `trace(W~ X)`.
    pub objective: f64,
    /// Squared H2 norm from the Gramian, when it could be computed.
    pub h2_squared: Option<f64>,
    pub dual_bound: Option<f64>,
    pub gap: Option<f64>,
    pub stats: SolveStats,
    pub verification: VerificationRecord,
    pub bounds: Option<BoundsReport>,
    pub cut_log: Vec<CutLogEntry>,
    pub greedy_steps: Vec<crate::heuristics::GreedyStep>,
}

impl TopologySolution {
    pub fn selected(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&l| self.mask[l]).collect()
    }
}

/// Squared H2 norm of the selected topology, through the Kron-reduced
/// dynamics when passive nodes are present.
pub fn h2_of_selection(problem: &DesignProblem, mask: &[bool]) -> Result<f64> {
    let z: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let ss = if problem.network.has_zero_injection() {
        kron_state_matrices(&problem.network, &z, &problem.objective)?
    } else {
        state_matrices(&problem.network, &z, &problem.objective)?
    };
    Ok(observability_gramian(&ss)?.h2_squared)
}

/// Solve with the bundled HiGHS backend.
pub fn solve(problem: &DesignProblem) -> Result<TopologySolution> {
    solve_with(problem, &HighsBackend)
}

/// Solve, splitting into independent sub-networks when that is exact.
pub fn solve_with(problem: &DesignProblem, backend: &dyn MilpBackend) -> Result<TopologySolution> {
    if problem.options.decompose {
        let parts = parallel_decomposition(problem)?;
        if parts.len() > 1 {
            return decompose::solve_parts(problem, &parts, backend);
        }
    }
    solve_single(problem, backend)
}

fn relax(model: &MilpModel, backend: &dyn MilpBackend, limits: &SolveLimits) -> Result<Vec<f64>> {
    let sol = backend.solve(&model.program, true, limits)?;
    match sol.status {
        SolveStatus::Optimal => sol.values.ok_or_else(|| Error::Backend("relaxation returned no point".into())),
        SolveStatus::Infeasible => Err(Error::Infeasible("continuous relaxation is infeasible".into())),
        s => Err(Error::Backend(format!("continuous relaxation ended with {s:?}"))),
    }
}

/// Bounds for a problem according to its options.
pub fn problem_bounds(problem: &DesignProblem, backend: &dyn MilpBackend) -> Result<BoundsReport> {
    if problem.options.tightened {
        compute_bounds(problem, backend)
    } else {
        Ok(naive_bounds(problem))
    }
}

/// Objective of the continuous relaxation of the model without cuts.
pub fn relaxation_objective(problem: &DesignProblem, backend: &dyn MilpBackend) -> Result<f64> {
    let rep = problem_bounds(problem, backend)?;
    let model = assemble(problem, &rep.bounds, rep.apriori.as_ref(), &[])?;
    let v = relax(&model, backend, &SolveLimits::default())?;
    Ok(model.program.objective_value(&v))
}

/// Solve without decomposition.
/// Model point of the heuristic topology, used as the first MILP incumbent.
fn start_point(
    problem: &DesignProblem,
    model: &MilpModel,
    backend: &dyn MilpBackend,
    limits: &SolveLimits,
) -> Option<Vec<f64>> {
    let mask = incumbent_topology(problem).ok()?;
    let sol = backend.solve(&model.with_fixed_selection(&mask), true, limits).ok()?;
    (sol.status == SolveStatus::Optimal).then_some(sol.values).flatten()
}

pub fn solve_single(problem: &DesignProblem, backend: &dyn MilpBackend) -> Result<TopologySolution> {
    let start = Instant::now();
    let opts = &problem.options;
    let net = &problem.network;
    let lp_limits = SolveLimits {
        time_limit: None,
        mip_rel_gap: opts.mip_gap,
        feasibility_tol: opts.feasibility_tol,
        presolve: true,
        start: None,
    };

    let mut bounds = problem_bounds(problem, backend)?;
    let mut model = assemble(problem, &bounds.bounds, bounds.apriori.as_ref(), &[])?;

    let mut stats = SolveStats { subproblems: 1, ..Default::default() };
    let mut pool = CutPool::new(opts.max_cuts_total);
    let sep = SeparationConfig {
        gamma: opts.gamma,
        k: opts.sparsity_k,
        max_cuts: opts.max_cuts_per_round,
        dense: opts.dense_cuts,
    };
    for round in 0..=opts.rounds {
        let values = relax(&model, backend, &lp_limits)?;
        stats.relaxation_objectives.push(model.program.objective_value(&values));

        if round == 0 && opts.improve_lower && opts.tightened {
            if let Some(apriori) = &bounds.apriori {
                let ctx = SweepContext {
                    weights: problem.reduced_weights(),
                    bounds: bounds.bounds.clone(),
                    apriori: apriori.clone(),
                    window_upper: bounds.window_upper,
                    window_lower: Some(stats.relaxation_objectives[0] - 1e-9 * (1.0 + stats.relaxation_objectives[0].abs())),
                };
                bounds.bounds = lp_lower_sweep(&ctx, backend, &lp_limits)?;
                bounds.lp_count += crate::formulation::packed_len(problem.dim());
                model = assemble(problem, &bounds.bounds, bounds.apriori.as_ref(), &pool.cuts)?;
                continue;
            }
        }
        if round == opts.rounds || pool.cuts.len() >= opts.max_cuts_total {
            break;
        }
        let x = model.x_matrix(&values);
        let z = model.z_values(&values);
        let y = assemble_y(&x, &z, net);
        let mut candidates = separate(&y, &sep);
        if opts.random_cuts > 0 {
            candidates.extend(random_cuts(&y, opts.random_cuts, opts.seed.wrapping_add(round as u64)));
        }
        let mut added = 0;
        for cand in &candidates {
            if let Some(ineq) = pool.offer(round, cand, net) {
                model.add_cut(&ineq);
                added += 1;
            }
        }
        stats.cut_rounds = round + 1;
        if added == 0 {
            break;
        }
    }
    stats.cuts_added = pool.cuts.len();
    stats.cuts_rejected = pool.log.iter().filter(|e| !e.accepted).count();
    stats.variables = model.program.vars.len();
    stats.constraints = model.program.constraints.len();
    stats.integer_variables = model.program.integer_count();
    stats.bound_path = Some(bounds.path);
    stats.bound_provenance = bounds.bounds.provenance_counts();
    stats.bound_lp_count = bounds.lp_count;
    stats.bound_seconds = bounds.seconds;

    let milp_limits = SolveLimits {
        // the limit covers the whole solve; bounds and cut rounds come out of it
        time_limit: opts.time_limit.map(|t| (t - start.elapsed().as_secs_f64()).max(1.0)),
        presolve: opts.mip_presolve,
        start: start_point(problem, &model, backend, &lp_limits),
        ..lp_limits.clone()
    };
    let milp = backend.solve(&model.program, false, &milp_limits)?;
    stats.milp_seconds = milp.seconds;
    stats.node_count = milp.node_count;
    let status = match milp.status {
        SolveStatus::Optimal => SolutionStatus::Optimal,
        SolveStatus::TimeLimit if milp.values.is_some() => SolutionStatus::TimeLimit,
        SolveStatus::TimeLimit => {
            return Err(Error::Backend("time limit reached before any feasible topology was found".into()))
        }
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible("no connected topology satisfies the budget and fixed lines".into()))
        }
        s => return Err(Error::Backend(format!("integer solve ended with {s:?}"))),
    };
    let raw = milp.values.expect("incumbent present");
    stats.incumbent_product_gap = Some(model.product_gap(&raw));
    stats.incumbent_identity_residual = Some(model.identity_residual(net, &raw));
    let mask: Vec<bool> = model.z_values(&raw).iter().map(|&z| z > 0.5).collect();

    // Re-solve with z pinned so X and y come from an exactly binary point.
    let pinned = model.with_fixed_selection(&mask);
    let polished = backend.solve(&pinned, true, &lp_limits)?;
    let (values, x) = match (polished.status, polished.values) {
        (SolveStatus::Optimal, Some(v)) => {
            let x = model.x_matrix(&v);
            (v, x)
        }
        _ => {
            log::warn!("re-solve at the binary incumbent failed; reporting the raw incumbent");
            let x = model.x_matrix(&raw);
            (raw.clone(), x)
        }
    };
    stats.polished_product_gap = Some(model.product_gap(&values));
    stats.polished_identity_residual = Some(model.identity_residual(net, &values));
    let objective = model.program.objective_value(&values);

    let verification = verify_solution(problem, &mask, &x, objective, Some(&bounds.bounds));
    if !verification.passed() {
        log::warn!("verification failed: {:?}", verification.failures);
    }
    let h2_squared = h2_of_selection(problem, &mask).map_err(|e| log::warn!("H2 evaluation failed: {e}")).ok();
    let dual_bound = milp.dual_bound;
    let gap = milp.mip_gap.map(|g| g.max(0.0));
    stats.total_seconds = start.elapsed().as_secs_f64();

    Ok(TopologySolution {
        status,
        mask,
        x,
        objective,
        h2_squared,
        dual_bound,
        gap,
        stats,
        verification,
        bounds: Some(bounds),
        cut_log: pool.log,
        greedy_steps: Vec::new(),
    })
}

/// Evaluate a fixed selection: `X`, objective and verification, without any
/// optimisation.
pub fn evaluate_selection(problem: &DesignProblem, mask: &[bool], status: SolutionStatus) -> Result<TopologySolution> {
    let z: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let x = invert_spd(&problem.network.reduced_laplacian(&z))?;
    let objective = (problem.reduced_weights() * &x).trace();
    let verification = verify_solution(problem, mask, &x, objective, None);
    Ok(TopologySolution {
        status,
        mask: mask.to_vec(),
        x,
        objective,
        h2_squared: h2_of_selection(problem, mask).ok(),
        dual_bound: None,
        gap: None,
        stats: SolveStats::default(),
        verification,
        bounds: None,
        cut_log: Vec::new(),
        greedy_steps: Vec::new(),
    })
}
