//! Design task definition: network, objective, mode and solver options.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{effective_reduced_weights, StabilityObjective};
use crate::error::{Error, Result};
use crate::graph::{CriticalEdge, PowerNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DesignMode {
    /// Existing lines are kept; at most `additional` candidates are added.
    Augment { additional: usize },
    /// Exactly `N` lines: a spanning tree.
    Radial,
    /// At most `budget` lines.
    Meshed { budget: usize },
}

impl DesignMode {
    pub fn label(&self) -> &'static str {
        match self {
            DesignMode::Augment { .. } => "augment",
            DesignMode::Radial => "radial",
            DesignMode::Meshed { .. } => "meshed",
        }
    }
}

/// Which objective cap the LP bound sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceWindow {
    /// A cap no feasible topology exceeds; the box contains every feasible
    /// `L~(z)^{-1}`.
    #[default]
    Global,
    /// The objective of a heuristic incumbent; the box is only guaranteed to
    /// contain topologies at least as good as that incumbent.
    Incumbent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Slack on shortest-path resistance bounds (ohm).
    pub epsilon: f64,
    /// Eigenvalue threshold for separation.
    pub gamma: f64,
    /// Support size of sparse cuts.
    pub sparsity_k: usize,
    pub max_cuts_per_round: usize,
    pub max_cuts_total: usize,
    pub rounds: usize,
    /// Emit the dense cut alongside every accepted sparse cut.
    pub dense_cuts: bool,
    /// Random-direction cuts per round (ablation only).
    pub random_cuts: usize,
    pub seed: u64,
    pub mip_gap: f64,
    /// Primal feasibility tolerance of the bound and relaxation LPs.
    pub feasibility_tol: f64,
    /// Backend presolve for the final MILP. Off by default: on the nearly
    /// over-determined identity rows it can discard feasible branches.
    pub mip_presolve: bool,
    pub identity_tol: f64,
    /// Seconds for the whole solve: bounds, cut rounds and the MILP.
    pub time_limit: Option<f64>,
    pub trace_window: TraceWindow,
    /// Run a second sweep minimising each entry under the relaxation window.
    pub improve_lower: bool,
    /// Tightened bounds and valid inequalities; `false` gives the plain
    /// formulation with naive bounds.
    pub tightened: bool,
    /// Solve independent sub-networks separately when the budget allows it.
    pub decompose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: 1e-6,
            gamma: -0.95,
            sparsity_k: 1,
            max_cuts_per_round: 10,
            max_cuts_total: 200,
            rounds: 5,
            dense_cuts: false,
            random_cuts: 0,
            seed: 0,
            mip_gap: 1e-6,
            feasibility_tol: 1e-9,
            mip_presolve: false,
            identity_tol: 1e-7,
            time_limit: None,
            trace_window: TraceWindow::Global,
            improve_lower: false,
            tightened: true,
            decompose: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("mip_gap", self.mip_gap),
            ("feasibility_tol", self.feasibility_tol),
            ("identity_tol", self.identity_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma must be finite".into()));
        }
        if self.sparsity_k == 0 {
            return Err(Error::Config("sparsity_k must be at least 1".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::Config(format!("time limit must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub network: PowerNetwork,
    pub objective: StabilityObjective,
    pub mode: DesignMode,
    pub options: SolveOptions,
}

impl DesignProblem {
    pub fn new(
        network: PowerNetwork,
        objective: StabilityObjective,
        mode: DesignMode,
        options: SolveOptions,
    ) -> Result<Self> {
        options.validate()?;
        if objective.node_count() != network.node_count() {
            return Err(Error::Config(format!(
                "objective covers {} nodes, network has {}",
                objective.node_count(),
                network.node_count()
            )));
        }
        if objective.has_frequency_weights() {
            return Err(Error::Config(
                "frequency weights have no trace form; design supports angle weights only".into(),
            ));
        }
        Ok(DesignProblem { network, objective, mode, options })
    }

    /// `N`: number of non-reference nodes.
    pub fn dim(&self) -> usize {
        self.network.reduced_dim()
    }

    pub fn reduced_weights(&self) -> DMatrix<f64> {
        effective_reduced_weights(&self.network, &self.objective)
    }

    /// Edges forced to one: existing lines (augment) and bridges of the
    /// candidate graph.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let mut fixed = match self.mode {
            DesignMode::Augment { .. } => self.network.existing_mask(),
            _ => vec![false; self.network.edge_count()],
        };
        for c in self.network.critical_edges() {
            fixed[c.edge] = true;
        }
        fixed
    }

    pub fn critical_edges(&self) -> Vec<CriticalEdge> {
        self.network.critical_edges()
    }

    /// Bounds on the number of selected edges, counted over all edges.
    /// Returns `(min, max)`; radial mode has `min == max == N`.
    pub fn edge_count_range(&self) -> (usize, usize) {
        let n = self.dim();
        let m = self.network.edge_count();
        match self.mode {
            DesignMode::Radial => (n, n),
            DesignMode::Meshed { budget } => (n, budget.min(m)),
            DesignMode::Augment { additional } => {
                let existing = self.network.existing_mask().iter().filter(|&&e| e).count();
                (existing, (existing + additional).min(m))
            }
        }
    }

    /// Whether `mask` respects the mode's cardinality and fixed-edge rules
    /// (connectivity not checked).
    pub fn admits(&self, mask: &[bool]) -> bool {
        let count = mask.iter().filter(|&&m| m).count();
        match self.mode {
            DesignMode::Radial => count == self.dim(),
            DesignMode::Meshed { budget } => count <= budget,
            DesignMode::Augment { additional } => {
                let existing = self.network.existing_mask();
                let mut added = 0;
                for (&sel, &ex) in mask.iter().zip(&existing) {
                    if ex && !sel {
                        return false;
                    }
                    if sel && !ex {
                        added += 1;
                    }
                }
                added <= additional
            }
        }
    }

    pub fn with_mode(&self, mode: DesignMode) -> Self {
        DesignProblem { mode, ..self.clone() }
    }

    pub fn with_options(&self, options: SolveOptions) -> Self {
        DesignProblem { options, ..self.clone() }
    }
}
