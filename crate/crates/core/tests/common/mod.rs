//! Seeded random instances shared by the integration tests.

#![allow(dead_code)]

use gridtopo::dynamics::{invert_spd, StabilityObjective};
use gridtopo::graph::{EdgeSpec, Node, NodeKind, PowerNetwork};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected graph on `nodes` nodes with `edges` candidate lines. A random
/// spanning tree comes first; when `existing_tree` holds its lines are
/// marked existing, minus `drop_existing` of them.
pub fn random_network(
    rng: &mut ChaCha8Rng,
    nodes: u32,
    edges: usize,
    existing_tree: bool,
    drop_existing: usize,
    uniform_damping: Option<f64>,
) -> PowerNetwork {
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut order: Vec<u32> = (1..=nodes).collect();
    order[1..].shuffle(rng);
    for k in 1..order.len() {
        let parent = order[rng.gen_range(0..k)];
        pairs.push((parent.min(order[k]), parent.max(order[k])));
    }
    let tree_len = pairs.len();
    let mut rest: Vec<(u32, u32)> = (1..=nodes)
        .flat_map(|i| (i + 1..=nodes).map(move |j| (i, j)))
        .filter(|p| !pairs.contains(p))
        .collect();
    rest.shuffle(rng);
    pairs.extend(rest.into_iter().take(edges.saturating_sub(tree_len)));
    let mut dropped: Vec<usize> = (0..tree_len).collect();
    dropped.shuffle(rng);
    dropped.truncate(drop_existing);
    let specs = pairs
        .iter()
        .enumerate()
        .map(|(k, &(from, to))| EdgeSpec {
            from,
            to,
            susceptance: rng.gen_range(0.5..3.0),
            existing: existing_tree && k < tree_len && !dropped.contains(&k),
        })
        .collect();
    let nodes = (1..=nodes)
        .map(|id| Node {
            id,
            inertia: rng.gen_range(0.5..2.0),
            damping: uniform_damping.unwrap_or_else(|| rng.gen_range(0.5..2.0)),
            kind: NodeKind::Machine,
        })
        .collect();
    PowerNetwork::new(nodes, 1, specs).expect("generated network is valid")
}

/// Coherence, or nonnegative weights on a random subset of pairs.
pub fn random_objective(rng: &mut ChaCha8Rng, node_count: usize, coherence: bool) -> StabilityObjective {
    if coherence {
        return StabilityObjective::coherence(node_count);
    }
    let mut pairs = Vec::new();
    for i in 0..node_count {
        for j in i + 1..node_count {
            if rng.gen_bool(0.6) {
                pairs.push((i, j, rng.gen_range(0.1..2.0)));
            }
        }
    }
    if pairs.is_empty() {
        pairs.push((0, node_count - 1, 1.0));
    }
    StabilityObjective::custom(node_count, &pairs, &[]).unwrap()
}

/// A fixed family of small instances: 3 to 6 nodes, at most 10 lines.
/// Every fifth instance has a disconnected existing network.
pub fn small_family(count: usize, seed: u64) -> Vec<(PowerNetwork, StabilityObjective)> {
    let mut r = rng(seed);
    (0..count)
        .map(|k| {
            let nodes = 3 + (k % 4) as u32;
            let max_pairs = (nodes * (nodes - 1) / 2) as usize;
            let edges = r.gen_range(nodes as usize - 1..=max_pairs.min(10));
            let drop = usize::from(k % 5 == 4);
            let net = random_network(&mut r, nodes, edges, true, drop, None);
            let obj = random_objective(&mut r, nodes as usize, k % 2 == 0);
            (net, obj)
        })
        .collect()
}

/// Every connected selection of `network`, with its inverse reduced
/// Laplacian.
pub fn connected_selections(network: &PowerNetwork) -> Vec<(Vec<bool>, DMatrix<f64>)> {
    let m = network.edge_count();
    (0u64..1 << m)
        .filter_map(|bits| {
            let mask: Vec<bool> = (0..m).map(|l| bits >> l & 1 == 1).collect();
            let z: Vec<f64> = mask.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
            if !network.is_connected(&z) {
                return None;
            }
            Some((mask, invert_spd(&network.reduced_laplacian(&z)).ok()?))
        })
        .collect()
}

pub fn as_z(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect()
}
