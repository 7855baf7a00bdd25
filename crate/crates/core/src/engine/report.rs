//! JSON run artifacts and one-line summaries.

use serde_json::{json, Value};

use super::TopologySolution;
use crate::problem::DesignProblem;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

fn selected_pairs(problem: &DesignProblem, solution: &TopologySolution) -> Vec<[u32; 2]> {
    let net = &problem.network;
    solution
        .selected()
        .into_iter()
        .map(|l| {
            let e = &net.edges()[l];
            [net.node_id(e.from), net.node_id(e.to)]
        })
        .collect()
}

/// Full record of a run: inputs, result, statistics, bounds, cuts and
/// verification.
pub fn artifact(problem: &DesignProblem, solution: &TopologySolution, command: &str) -> Value {
    let x: Vec<Vec<f64>> = solution.x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let reduced_ids: Vec<u32> = (1..problem.network.node_count()).map(|v| problem.network.node_id(v)).collect();
    json!({
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "command": command,
        "mode": problem.mode,
        "options": problem.options,
        "solution": {
            "status": solution.status,
            "objective": solution.objective,
            "h2_squared": solution.h2_squared,
            "dual_bound": solution.dual_bound,
            "gap": solution.gap,
            "edges": selected_pairs(problem, solution),
            "x_node_order": reduced_ids,
            "x": x,
        },
        "stats": solution.stats,
        "bounds": solution.bounds.as_ref().map(|b| json!({
            "path": b.path,
            "window_upper": b.window_upper,
            "lp_count": b.lp_count,
            "entries": b.entries(problem),
        })),
        "cut_log": solution.cut_log,
        "greedy_steps": solution.greedy_steps,
        "verification": solution.verification,
    })
}

/// Human-readable summary of a solution.
pub fn solution_summary(problem: &DesignProblem, solution: &TopologySolution) -> String {
    let edges: Vec<String> =
        selected_pairs(problem, solution).iter().map(|[a, b]| format!("{a}-{b}")).collect();
    let mut s = format!(
        "status: {:?}\nmode: {}\nobjective: {:.10}\n",
        solution.status,
        problem.mode.label(),
        solution.objective
    );
    if let Some(h2) = solution.h2_squared {
        s += &format!("h2_squared: {h2:.10}\n");
    }
    if let Some(g) = solution.gap {
        s += &format!("gap: {g:.3e}\n");
    }
    s += &format!("lines ({}): {}\n", edges.len(), edges.join(" "));
    s += &format!(
        "verification: {}\n",
        if solution.verification.passed() { "passed".to_string() } else { solution.verification.failures.join("; ") }
    );
    s
}
