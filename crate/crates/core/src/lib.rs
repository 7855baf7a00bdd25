//! Topology design for power networks that minimises an H2 coherence
//! measure of swing dynamics, solved as a mixed-integer linear program.

pub mod cuts;
pub mod document;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod formulation;
pub mod graph;
pub mod heuristics;
pub mod lp;
pub mod matpower;
pub mod oracle;
pub mod problem;
pub mod tightening;

pub use error::{Error, Result};
pub use graph::{CriticalEdge, Edge, EdgeSelection, EdgeSpec, Node, NodeKind, PowerNetwork};
pub use problem::{DesignMode, DesignProblem, SolveOptions, TraceWindow};
