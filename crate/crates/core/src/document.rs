//! JSON network documents and selection files.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ObjectivePreset, StabilityObjective};
use crate::error::{Error, Result};
use crate::graph::{EdgeSpec, Node, NodeKind, PowerNetwork};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: u32,
    #[serde(default)]
    pub inertia: f64,
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub from: u32,
    pub to: u32,
    /// Per-unit; required, kept optional so a missing value can be reported
    /// against its edge.
    pub susceptance: Option<f64>,
    #[serde(default)]
    pub existing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairWeight {
    pub i: u32,
    pub j: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeWeight {
    pub i: u32,
    pub weight: f64,
}

/// Either `{"preset": "coherence"}` or explicit weights `{"w": [...], "s": [...]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<PairWeight>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<NodeWeight>>,
}

impl ObjectiveDoc {
    pub fn coherence() -> Self {
        ObjectiveDoc { preset: Some("coherence".into()), w: None, s: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub reference: u32,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default = "ObjectiveDoc::coherence")]
    pub objective: ObjectiveDoc,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Document(format!("line {}, column {}: {e}", e.line(), e.column()))
}

/// 1-based line of the `k`-th element of the top-level array `key`, if it
/// can be located.
fn element_line(text: &str, key: &str, k: usize) -> Option<usize> {
    let key_at = text.find(&format!("\"{key}\""))? + key.len() + 2;
    let after = text[key_at..].trim_start().strip_prefix(':')?.trim_start();
    if !after.starts_with('[') {
        return None;
    }
    let open = text.len() - after.len();
    let mut depth = 0i32;
    let mut seen = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (off, c) in text[open + 1..].char_indices() {
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => {
                if depth == 0 {
                    if seen == k {
                        return Some(text[..open + 1 + off].matches('\n').count() + 1);
                    }
                    seen += 1;
                }
                depth += 1;
            }
            '}' => depth -= 1,
            ']' if depth == 0 => return None,
            ']' => depth -= 1,
            _ => {}
        }
    }
    None
}

impl NetworkDocument {
    /// Parse and validate; errors carry the line of the offending element.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text).map_err(parse_error)?;
        doc.validate_fields().map_err(|(key, k, msg)| {
            let at = element_line(text, key, k).map(|l| format!("line {l}: ")).unwrap_or_default();
            Error::Document(format!("{at}{msg}"))
        })?;
        Ok(doc)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    fn validate_fields(&self) -> std::result::Result<(), (&'static str, usize, String)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(("schema_version", 0, format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        for (k, e) in self.edges.iter().enumerate() {
            match e.susceptance {
                None => {
                    return Err(("edges", k, format!("edge #{k} ({}-{}): missing field `susceptance`", e.from, e.to)))
                }
                Some(b) if !(b > 0.0) || !b.is_finite() => {
                    return Err((
                        "edges",
                        k,
                        format!("edge #{k} ({}-{}): nonpositive susceptance {b}", e.from, e.to),
                    ))
                }
                _ => {}
            }
        }
        for (k, n) in self.nodes.iter().enumerate() {
            if n.kind == NodeKind::Machine && (!(n.inertia > 0.0) || !(n.damping > 0.0)) {
                return Err(("nodes", k, format!("node {}: machine nodes need positive inertia and damping", n.id)));
            }
        }
        let o = &self.objective;
        match (&o.preset, &o.w, &o.s) {
            (Some(p), None, None) if p == "coherence" => {}
            (Some(p), None, None) => return Err(("objective", 0, format!("unknown objective preset `{p}`"))),
            (None, _, _) => {
                for w in o.w.iter().flatten() {
                    if !(w.weight >= 0.0) {
                        return Err(("objective", 0, format!("negative weight {} on ({}, {})", w.weight, w.i, w.j)));
                    }
                }
                for s in o.s.iter().flatten() {
                    if !(s.weight >= 0.0) {
                        return Err(("objective", 0, format!("negative frequency weight {} at {}", s.weight, s.i)));
                    }
                }
            }
            _ => return Err(("objective", 0, "objective takes either `preset` or `w`/`s`, not both".into())),
        }
        Ok(())
    }

    pub fn network(&self) -> Result<PowerNetwork> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { id: n.id, inertia: n.inertia, damping: n.damping, kind: n.kind })
            .collect();
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let susceptance = e.susceptance.ok_or_else(|| {
                    Error::Document(format!("edge #{k} ({}-{}): missing field `susceptance`", e.from, e.to))
                })?;
                Ok(EdgeSpec { from: e.from, to: e.to, susceptance, existing: e.existing })
            })
            .collect::<Result<Vec<_>>>()?;
        PowerNetwork::new(nodes, self.reference, edges)
    }

    /// Network and objective. The coherence preset covers machine nodes only
    /// when passive nodes are present.
    pub fn build(&self) -> Result<(PowerNetwork, StabilityObjective)> {
        let net = self.network()?;
        let index = |id: u32| {
            net.node_index(id).ok_or_else(|| Error::Document(format!("objective refers to unknown node {id}")))
        };
        let objective = if self.objective.preset.is_some() {
            if net.has_zero_injection() {
                let machines: Vec<usize> =
                    (0..net.node_count()).filter(|&i| net.nodes()[i].kind == NodeKind::Machine).collect();
                StabilityObjective::coherence_over(net.node_count(), &machines)
            } else {
                StabilityObjective::coherence(net.node_count())
            }
        } else {
            let pairs = self
                .objective
                .w
                .iter()
                .flatten()
                .map(|w| Ok((index(w.i)?, index(w.j)?, w.weight)))
                .collect::<Result<Vec<_>>>()?;
            let freq =
                self.objective.s.iter().flatten().map(|s| Ok((index(s.i)?, s.weight))).collect::<Result<Vec<_>>>()?;
            StabilityObjective::custom(net.node_count(), &pairs, &freq)?
        };
        Ok((net, objective))
    }

    /// Document describing a network and objective, in canonical order:
    /// nodes by id, edges by `(from, to)` with `from < to`, weights by pair.
    pub fn from_parts(network: &PowerNetwork, objective: &StabilityObjective, description: Option<String>) -> Self {
        let mut nodes: Vec<NodeDoc> = network
            .nodes()
            .iter()
            .map(|n| NodeDoc { id: n.id, inertia: n.inertia, damping: n.damping, kind: n.kind })
            .collect();
        nodes.sort_by_key(|n| n.id);
        let mut edges: Vec<EdgeDoc> = network
            .edges()
            .iter()
            .map(|e| {
                let (a, b) = (network.node_id(e.from), network.node_id(e.to));
                EdgeDoc { from: a.min(b), to: a.max(b), susceptance: Some(e.susceptance), existing: e.existing }
            })
            .collect();
        edges.sort_by_key(|e| (e.from, e.to));
        let objective = match objective.preset() {
            ObjectivePreset::Coherence => ObjectiveDoc::coherence(),
            ObjectivePreset::Custom => {
                let mut w: Vec<PairWeight> = objective
                    .weight_edges()
                    .into_iter()
                    .map(|(k, l, wt)| {
                        let (a, b) = (network.node_id(k), network.node_id(l));
                        PairWeight { i: a.min(b), j: a.max(b), weight: wt }
                    })
                    .collect();
                w.sort_by_key(|p| (p.i, p.j));
                let mut s: Vec<NodeWeight> = objective
                    .frequency_weights()
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(i, &v)| NodeWeight { i: network.node_id(i), weight: v })
                    .collect();
                s.sort_by_key(|n| n.i);
                ObjectiveDoc { preset: None, w: Some(w), s: Some(s) }
            }
        };
        NetworkDocument {
            schema_version: SCHEMA_VERSION,
            description,
            reference: network.reference_id(),
            nodes,
            edges,
            objective,
        }
    }

    pub fn canonicalize(&self) -> Result<Self> {
        let (net, obj) = self.build()?;
        Ok(Self::from_parts(&net, &obj, self.description.clone()))
    }
}

/// Selected lines as node-id pairs: `{"edges": [[1, 2], [1, 3]]}`. A run
/// artifact is accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub edges: Vec<[u32; 2]>,
}

impl SelectionDoc {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
        let edges = value.get("edges").or_else(|| value.get("solution").and_then(|s| s.get("edges")));
        match edges {
            Some(e) => Ok(SelectionDoc { edges: serde_json::from_value(e.clone())? }),
            None => Err(Error::Document("selection file needs an `edges` list of node-id pairs".into())),
        }
    }

    /// Edge mask over `network`'s candidate lines.
    pub fn mask(&self, network: &PowerNetwork) -> Result<Vec<bool>> {
        let mut mask = vec![false; network.edge_count()];
        for &[a, b] in &self.edges {
            let l = match (network.node_index(a), network.node_index(b)) {
                (Some(x), Some(y)) => network.edge_between(x, y),
                _ => None,
            };
            let l = l.ok_or_else(|| Error::Document(format!("selection line {a}-{b} is not a candidate")))?;
            mask[l] = true;
        }
        Ok(mask)
    }
}
