//! Power network graph and the Laplacian / graph-theoretic primitives the
//! design problem is written in.
//!
//! Nodes are stored in a dense 0-based index with the reference node at slot
//! 0. Every "reduced" quantity (incidence rows, reduced Laplacians, the
//! inverse `X`) drops slot 0, so reduced index `r` refers to node `r + 1`.

use std::collections::{HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Machine,
    /// Passive bus without rotating mass; eliminated by Kron reduction.
    ZeroInjection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u32,
    pub inertia: f64,
    pub damping: f64,
    pub kind: NodeKind,
}

/// Candidate line in external node ids, as read from a document.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub from: u32,
    pub to: u32,
    pub susceptance: f64,
    pub existing: bool,
}

/// Candidate line between internal node indices with `from < to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub existing: bool,
}

impl Edge {
    pub fn reactance(&self) -> f64 {
        1.0 / self.susceptance
    }

    pub fn endpoints(&self) -> [usize; 2] {
        [self.from, self.to]
    }
}

/// A bridge of the candidate graph together with the two sides it separates.
///
/// `near` is the endpoint on the reference side, `far` the other one, so the
/// pair matches the orientation "V_l holds (near, reference), its complement
/// holds far".
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalEdge {
    pub edge: usize,
    pub near: usize,
    pub far: usize,
    pub near_side: Vec<usize>,
    pub far_side: Vec<usize>,
}

/// Validated power network: nodes, candidate lines, existing subset.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl PowerNetwork {
    /// Validate and canonicalize a network. The reference node moves to
    /// slot 0, the other nodes keep their relative order, and edges are
    /// sorted by their internal endpoint pair.
    pub fn new(nodes: Vec<Node>, reference: u32, edges: Vec<EdgeSpec>) -> Result<Self> {
        let ref_pos = nodes
            .iter()
            .position(|n| n.id == reference)
            .ok_or_else(|| Error::InvalidNetwork(format!("reference node {reference} missing")))?;
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.id) {
                return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
            }
            if n.kind == NodeKind::Machine {
                if !(n.inertia > 0.0) {
                    return Err(Error::InvalidNetwork(format!(
                        "nonpositive inertia {} at node {}",
                        n.inertia, n.id
                    )));
                }
                if !(n.damping > 0.0) {
                    return Err(Error::InvalidNetwork(format!(
                        "nonpositive damping {} at node {}",
                        n.damping, n.id
                    )));
                }
            }
        }
        if nodes.len() < 2 {
            return Err(Error::InvalidNetwork("need at least two nodes".into()));
        }

        let mut ordered = Vec::with_capacity(nodes.len());
        ordered.push(nodes[ref_pos].clone());
        ordered.extend(nodes.iter().enumerate().filter(|&(i, _)| i != ref_pos).map(|(_, n)| n.clone()));

        let index_of = |id: u32| ordered.iter().position(|n| n.id == id);
        let mut canon = Vec::with_capacity(edges.len());
        let mut pairs = HashSet::new();
        for e in edges {
            let (a, b) = match (index_of(e.from), index_of(e.to)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidNetwork(format!(
                        "edge ({}, {}) references an unknown node",
                        e.from, e.to
                    )))
                }
            };
            if a == b {
                return Err(Error::InvalidNetwork(format!("self-loop at node {}", e.from)));
            }
            if !(e.susceptance > 0.0) || !e.susceptance.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "nonpositive susceptance {} on edge ({}, {})",
                    e.susceptance, e.from, e.to
                )));
            }
            let (from, to) = (a.min(b), a.max(b));
            if !pairs.insert((from, to)) {
                return Err(Error::InvalidNetwork(format!("duplicate edge ({}, {})", e.from, e.to)));
            }
            canon.push(Edge { from, to, susceptance: e.susceptance, existing: e.existing });
        }
        canon.sort_by_key(|e| (e.from, e.to));

        let net = PowerNetwork { nodes: ordered, edges: canon };
        if !net.mask_connected(&vec![true; net.edges.len()]) {
            return Err(Error::InvalidNetwork("candidate graph is disconnected".into()));
        }
        Ok(net)
    }

    /// Number of nodes, `N + 1`.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Dimension `N` of every reduced matrix.
    pub fn reduced_dim(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, l: usize) -> Result<&Edge> {
        self.edges.get(l).ok_or(Error::UnknownEdge(l))
    }

    pub fn reference_id(&self) -> u32 {
        self.nodes[0].id
    }

    pub fn node_id(&self, index: usize) -> u32 {
        self.nodes[index].id
    }

    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Index of the candidate edge joining two internal nodes, if any.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let (lo, hi) = (a.min(b), a.max(b));
        self.edges.iter().position(|e| e.from == lo && e.to == hi)
    }

    pub fn existing_mask(&self) -> Vec<bool> {
        self.edges.iter().map(|e| e.existing).collect()
    }

    pub fn has_zero_injection(&self) -> bool {
        self.nodes.iter().any(|n| n.kind == NodeKind::ZeroInjection)
    }

    /// Reduced indices of synchronous (machine) nodes.
    pub fn synchronous_reduced(&self) -> Vec<usize> {
        (1..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Machine).map(|i| i - 1).collect()
    }

    /// Row of the reduced branch-bus incidence matrix: `+1` at `from`, `-1`
    /// at `to`, reference entry dropped.
    pub fn incidence_row(&self, l: usize) -> Result<DVector<f64>> {
        let e = self.edge(l)?;
        let mut a = DVector::zeros(self.reduced_dim());
        if e.from > 0 {
            a[e.from - 1] = 1.0;
        }
        a[e.to - 1] = -1.0;
        Ok(a)
    }

    /// Reduced Laplacian `sum_l z_l b_l a_l a_l^T`; `z` may be fractional.
    pub fn reduced_laplacian(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.reduced_dim();
        let mut lap = DMatrix::zeros(n, n);
        for (e, &zl) in self.edges.iter().zip(z) {
            if zl == 0.0 {
                continue;
            }
            let w = zl * e.susceptance;
            let j = e.to - 1;
            lap[(j, j)] += w;
            if e.from > 0 {
                let i = e.from - 1;
                lap[(i, i)] += w;
                lap[(i, j)] -= w;
                lap[(j, i)] -= w;
            }
        }
        lap
    }

    /// Full `(N+1) x (N+1)` susceptance Laplacian.
    pub fn laplacian(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.node_count();
        let mut lap = DMatrix::zeros(n, n);
        for (e, &zl) in self.edges.iter().zip(z) {
            let w = zl * e.susceptance;
            lap[(e.from, e.from)] += w;
            lap[(e.to, e.to)] += w;
            lap[(e.from, e.to)] -= w;
            lap[(e.to, e.from)] -= w;
        }
        lap
    }

    /// Whether the selected lines (`z_l > 0.5`) span every node.
    pub fn is_connected(&self, z: &[f64]) -> bool {
        let mask: Vec<bool> = z.iter().map(|&v| v > 0.5).collect();
        self.mask_connected(&mask)
    }

    pub fn mask_connected(&self, mask: &[bool]) -> bool {
        let n = self.node_count();
        if mask.iter().filter(|&&m| m).count() + 1 < n {
            return false;
        }
        let mut uf = UnionFind::new(n);
        let mut comps = n;
        for (e, &m) in self.edges.iter().zip(mask) {
            if m && uf.union(e.from, e.to) {
                comps -= 1;
            }
        }
        comps == 1
    }

    /// All-pairs minimum path reactance over the masked edges
    /// (Floyd-Warshall). Unreachable pairs are `f64::INFINITY`.
    pub fn shortest_path_reactances(&self, mask: &[bool]) -> DMatrix<f64> {
        let n = self.node_count();
        let mut d = DMatrix::from_element(n, n, f64::INFINITY);
        for i in 0..n {
            d[(i, i)] = 0.0;
        }
        for (e, &m) in self.edges.iter().zip(mask) {
            if m {
                let x = e.reactance();
                if x < d[(e.from, e.to)] {
                    d[(e.from, e.to)] = x;
                    d[(e.to, e.from)] = x;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = d[(i, k)];
                if dik.is_infinite() {
                    continue;
                }
                for j in 0..n {
                    let cand = dik + d[(k, j)];
                    if cand < d[(i, j)] {
                        d[(i, j)] = cand;
                    }
                }
            }
        }
        d
    }

    /// Bridges of the candidate graph (linear-time DFS low-link), each with
    /// the two node sets it separates, oriented so `near` is on the side of
    /// the reference node.
    pub fn critical_edges(&self) -> Vec<CriticalEdge> {
        let n = self.node_count();
        let adj = self.adjacency(&vec![true; self.edges.len()]);
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0;
        let mut bridges = Vec::new();

        // iterative DFS: (node, parent edge, next adjacency slot)
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (u, parent, ref mut slot)) = stack.last_mut() {
                if *slot < adj[u].len() {
                    let (v, l) = adj[u][*slot];
                    *slot += 1;
                    if Some(l) == parent {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, Some(l), 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let (Some(&(p, _, _)), Some(l)) = (stack.last(), parent) {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            bridges.push(l);
                        }
                    }
                }
            }
        }
        bridges.sort_unstable();

        bridges
            .into_iter()
            .map(|l| {
                let mut mask = vec![true; self.edges.len()];
                mask[l] = false;
                let near_side = self.reachable_from(0, &mask);
                let in_near: HashSet<usize> = near_side.iter().copied().collect();
                let far_side: Vec<usize> = (0..n).filter(|v| !in_near.contains(v)).collect();
                let e = &self.edges[l];
                let (near, far) = if in_near.contains(&e.from) { (e.from, e.to) } else { (e.to, e.from) };
                CriticalEdge { edge: l, near, far, near_side, far_side }
            })
            .collect()
    }

    pub(crate) fn adjacency(&self, mask: &[bool]) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for (l, (e, &m)) in self.edges.iter().zip(mask).enumerate() {
            if m {
                adj[e.from].push((e.to, l));
                adj[e.to].push((e.from, l));
            }
        }
        adj
    }

    pub(crate) fn reachable_from(&self, start: usize, mask: &[bool]) -> Vec<usize> {
        let adj = self.adjacency(mask);
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Minimum total-reactance spanning tree of the candidate graph
    /// (Kruskal, ties by edge index).
    pub fn min_reactance_spanning_tree(&self) -> Vec<bool> {
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by(|&a, &b| {
            self.edges[a].reactance().total_cmp(&self.edges[b].reactance()).then(a.cmp(&b))
        });
        let mut uf = UnionFind::new(self.node_count());
        let mut mask = vec![false; self.edges.len()];
        for l in order {
            if uf.union(self.edges[l].from, self.edges[l].to) {
                mask[l] = true;
            }
        }
        mask
    }
}

/// Per-line selection vector `z`. Binary unless flagged as relaxed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSelection {
    values: Vec<f64>,
    relaxed: bool,
}

impl EdgeSelection {
    pub fn from_mask(mask: &[bool]) -> Self {
        EdgeSelection { values: mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(), relaxed: false }
    }

    pub fn from_indices(len: usize, selected: &[usize]) -> Result<Self> {
        let mut values = vec![0.0; len];
        for &l in selected {
            *values.get_mut(l).ok_or(Error::UnknownEdge(l))? = 1.0;
        }
        Ok(EdgeSelection { values, relaxed: false })
    }

    pub fn full(len: usize) -> Self {
        EdgeSelection { values: vec![1.0; len], relaxed: false }
    }

    pub fn empty(len: usize) -> Self {
        EdgeSelection { values: vec![0.0; len], relaxed: false }
    }

    /// Fractional selection in `[0, 1]`.
    pub fn relaxed(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("relaxed selection value {v} outside [0, 1]")));
        }
        Ok(EdgeSelection { values, relaxed: true })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.5).collect()
    }

    pub fn selected(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(l, _)| l).collect()
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.5).count()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when the two sets were distinct.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Convenience constructor used by tests and generators: machine nodes
/// `1..=n` with unit inertia/damping, reference node 1.
pub fn uniform_network(n: u32, edges: &[(u32, u32, f64, bool)]) -> Result<PowerNetwork> {
    let nodes = (1..=n).map(|id| Node { id, inertia: 1.0, damping: 1.0, kind: NodeKind::Machine }).collect();
    let edges = edges
        .iter()
        .map(|&(from, to, susceptance, existing)| EdgeSpec { from, to, susceptance, existing })
        .collect();
    PowerNetwork::new(nodes, 1, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> PowerNetwork {
        uniform_network(3, &[(1, 2, 1.0, false), (1, 3, 1.0, false), (2, 3, 1.0, false)]).unwrap()
    }

    #[test]
    fn builds_minimal_and_triangle() {
        let two = uniform_network(2, &[(1, 2, 1.0, false)]).unwrap();
        assert_eq!(two.node_count(), 2);
        assert_eq!(two.edge_count(), 1);
        let tri = triangle();
        assert_eq!(tri.edge_count(), 3);
        assert!(tri.is_connected(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn rejects_bad_input() {
        let err = uniform_network(2, &[(1, 2, -1.0, false)]).unwrap_err();
        assert!(err.to_string().contains("nonpositive susceptance"));
        let err = uniform_network(3, &[(1, 2, 1.0, false), (2, 1, 2.0, false), (2, 3, 1.0, false)]).unwrap_err();
        assert!(err.to_string().contains("duplicate edge"));
        let err = uniform_network(3, &[(1, 2, 1.0, false)]).unwrap_err();
        assert!(err.to_string().contains("disconnected"));
        let nodes = vec![Node { id: 5, inertia: 1.0, damping: 1.0, kind: NodeKind::Machine }];
        assert!(PowerNetwork::new(nodes, 1, vec![]).unwrap_err().to_string().contains("reference"));
        let nodes = vec![
            Node { id: 1, inertia: 1.0, damping: 1.0, kind: NodeKind::Machine },
            Node { id: 2, inertia: 0.0, damping: 1.0, kind: NodeKind::Machine },
        ];
        let e = vec![EdgeSpec { from: 1, to: 2, susceptance: 1.0, existing: false }];
        assert!(PowerNetwork::new(nodes, 1, e).unwrap_err().to_string().contains("inertia"));
    }

    #[test]
    fn reference_goes_to_slot_zero() {
        let nodes = (1..=3).map(|id| Node { id, inertia: 1.0, damping: 1.0, kind: NodeKind::Machine }).collect();
        let edges = vec![
            EdgeSpec { from: 3, to: 1, susceptance: 2.0, existing: false },
            EdgeSpec { from: 2, to: 3, susceptance: 1.0, existing: false },
        ];
        let net = PowerNetwork::new(nodes, 3, edges).unwrap();
        assert_eq!(net.reference_id(), 3);
        assert_eq!(net.node_id(1), 1);
        assert_eq!((net.edges()[0].from, net.edges()[0].to), (0, 1));
    }

    #[test]
    fn incidence_rows() {
        let tri = triangle();
        assert_eq!(tri.incidence_row(2).unwrap().as_slice(), &[1.0, -1.0]);
        assert_eq!(tri.incidence_row(0).unwrap().as_slice(), &[-1.0, 0.0]);
        assert_eq!(tri.incidence_row(1).unwrap().as_slice(), &[0.0, -1.0]);
        assert!(matches!(tri.incidence_row(7), Err(Error::UnknownEdge(7))));
    }

    #[test]
    fn reduced_laplacians_by_hand() {
        let tri = triangle();
        let full = tri.reduced_laplacian(&[1.0, 1.0, 1.0]);
        assert_eq!(full, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        // path {(1,2),(2,3)}
        let path = tri.reduced_laplacian(&[1.0, 0.0, 1.0]);
        assert_eq!(path, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        assert_eq!(tri.reduced_laplacian(&[0.0; 3]), DMatrix::zeros(2, 2));
    }

    #[test]
    fn connectivity_cases() {
        let tri = triangle();
        assert!(tri.is_connected(&[1.0, 1.0, 0.0]));
        assert!(!tri.is_connected(&[1.0, 0.0, 0.0]));
        assert!(!tri.is_connected(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn bridges() {
        assert!(triangle().critical_edges().is_empty());
        let path = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 1.0, false)]).unwrap();
        let b: Vec<usize> = path.critical_edges().iter().map(|c| c.edge).collect();
        assert_eq!(b, vec![0, 1]);
        let pend = uniform_network(
            4,
            &[(1, 2, 1.0, false), (1, 3, 1.0, false), (2, 3, 1.0, false), (3, 4, 1.0, false)],
        )
        .unwrap();
        let crit = pend.critical_edges();
        assert_eq!(crit.len(), 1);
        let c = &crit[0];
        assert_eq!(pend.edges()[c.edge].from, 2);
        assert_eq!((c.near, c.far), (2, 3));
        assert_eq!(c.near_side, vec![0, 1, 2]);
        assert_eq!(c.far_side, vec![3]);
    }

    #[test]
    fn shortest_paths() {
        let tri = triangle();
        let d = tri.shortest_path_reactances(&[true; 3]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[(i, j)], if i == j { 0.0 } else { 1.0 });
            }
        }
        let d = tri.shortest_path_reactances(&[true, false, true]);
        assert_eq!(d[(0, 2)], 2.0);
        let square = uniform_network(
            4,
            &[(1, 2, 1.0, false), (2, 3, 1.0, false), (3, 4, 1.0, false), (1, 4, 1.0, false)],
        )
        .unwrap();
        let d = square.shortest_path_reactances(&[true; 4]);
        assert_eq!(d[(0, 2)], 2.0);
        assert_eq!(d[(1, 3)], 2.0);
        let d = tri.shortest_path_reactances(&[true, false, false]);
        assert!(d[(0, 2)].is_infinite());
    }

    #[test]
    fn selection_helpers() {
        let s = EdgeSelection::from_indices(4, &[0, 2]).unwrap();
        assert_eq!(s.selected(), vec![0, 2]);
        assert_eq!(s.count(), 2);
        assert!(EdgeSelection::from_indices(2, &[3]).is_err());
        assert!(EdgeSelection::relaxed(vec![0.2, 1.1]).is_err());
        assert!(EdgeSelection::relaxed(vec![0.2, 1.0]).unwrap().is_relaxed());
    }
}
