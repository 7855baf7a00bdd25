//! Greedy line addition with rank-one inverse updates, and swap search.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::invert_spd;
use crate::error::{Error, Result};
use crate::formulation::reduced_incidence;
use crate::graph::{PowerNetwork, UnionFind};

/// `X a` for a sparse reduced incidence vector.
fn apply_incidence(x: &DMatrix<f64>, inc: &[(usize, f64)]) -> DVector<f64> {
    let mut u = DVector::zeros(x.nrows());
    for &(r, s) in inc {
        u.axpy(s, &x.column(r), 1.0);
    }
    u
}

/// Change of `trace(W X)` when line `l` is added to the topology with
/// inverse `x`: `-b (Xa)^T W (Xa) / (1 + b a^T X a)`.
pub fn addition_delta(network: &PowerNetwork, weights: &DMatrix<f64>, x: &DMatrix<f64>, l: usize) -> f64 {
    let inc = reduced_incidence(network, l);
    let b = network.edges()[l].susceptance;
    let u = apply_incidence(x, &inc);
    let atu: f64 = inc.iter().map(|&(r, s)| s * u[r]).sum();
    let wu = weights * &u;
    -b * u.dot(&wu) / (1.0 + b * atu)
}

/// Sherman-Morrison update of `x` after adding line `l`.
pub fn add_line_inverse(network: &PowerNetwork, x: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let inc = reduced_incidence(network, l);
    let b = network.edges()[l].susceptance;
    let u = apply_incidence(x, &inc);
    let atu: f64 = inc.iter().map(|&(r, s)| s * u[r]).sum();
    let out = x - (&u * u.transpose()) * (b / (1.0 + b * atu));
    (&out + out.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GreedyStep {
    pub edge: usize,
    pub objective: f64,
}

/// Add up to `steps` lines from `candidates` to the connected topology
/// `start`, each time taking the largest decrease of `trace(W X)`; ties go
/// to the lowest edge index.
pub fn greedy_add(
    network: &PowerNetwork,
    weights: &DMatrix<f64>,
    start: &[bool],
    candidates: &[usize],
    steps: usize,
) -> Result<(Vec<bool>, Vec<GreedyStep>)> {
    let z: Vec<f64> = start.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let mut x = invert_spd(&network.reduced_laplacian(&z))?;
    let mut f = (weights * &x).trace();
    let mut mask = start.to_vec();
    let mut pool: Vec<usize> = candidates.iter().copied().filter(|&l| !mask[l]).collect();
    pool.sort_unstable();
    let mut history = Vec::new();
    for _ in 0..steps {
        if pool.is_empty() {
            break;
        }
        let deltas: Vec<f64> = pool.par_iter().map(|&l| addition_delta(network, weights, &x, l)).collect();
        let mut best = 0;
        for k in 1..pool.len() {
            if deltas[k] < deltas[best] {
                best = k;
            }
        }
        let l = pool.remove(best);
        x = add_line_inverse(network, &x, l);
        f += deltas[best];
        mask[l] = true;
        history.push(GreedyStep { edge: l, objective: f });
    }
    Ok((mask, history))
}

/// Best-improvement local search over single swaps: drop one selected
/// movable line, add one unselected movable line. The line count is kept,
/// so every mode's budget still holds. Stops after `max_rounds` swaps or at a
/// local optimum; returns the topology and its `trace(W X)`.
pub fn swap_improve(
    network: &PowerNetwork,
    weights: &DMatrix<f64>,
    start: &[bool],
    movable: &[bool],
    max_rounds: usize,
) -> Result<(Vec<bool>, f64)> {
    let objective = |mask: &[bool]| -> Option<f64> {
        if !network.mask_connected(mask) {
            return None;
        }
        let z: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        invert_spd(&network.reduced_laplacian(&z)).ok().map(|x| (weights * x).trace())
    };
    let mut mask = start.to_vec();
    let mut f = objective(&mask).ok_or_else(|| Error::Infeasible("swap search needs a connected start".into()))?;
    for _ in 0..max_rounds {
        let on: Vec<usize> = (0..mask.len()).filter(|&l| movable[l] && mask[l]).collect();
        let off: Vec<usize> = (0..mask.len()).filter(|&l| movable[l] && !mask[l]).collect();
        let pairs: Vec<(usize, usize)> = on.iter().flat_map(|&a| off.iter().map(move |&b| (a, b))).collect();
        let best = pairs
            .par_iter()
            .filter_map(|&(a, b)| {
                let mut m = mask.clone();
                m[a] = false;
                m[b] = true;
                objective(&m).map(|v| (v, a, b))
            })
            .min_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        match best {
            Some((v, a, b)) if v < f - 1e-12 * f.abs() => {
                mask[a] = false;
                mask[b] = true;
                f = v;
            }
            _ => break,
        }
    }
    Ok((mask, f))
}

/// Extend `start` to a connected spanning subgraph with minimum-reactance
/// lines (Kruskal seeded with `start`).
pub fn spanning_completion(network: &PowerNetwork, start: &[bool]) -> Result<Vec<bool>> {
    let mut uf = UnionFind::new(network.node_count());
    let mut mask = start.to_vec();
    for (l, e) in network.edges().iter().enumerate() {
        if mask[l] {
            uf.union(e.from, e.to);
        }
    }
    let mut order: Vec<usize> = (0..network.edge_count()).filter(|&l| !mask[l]).collect();
    order.sort_by(|&a, &b| {
        network.edges()[a].reactance().total_cmp(&network.edges()[b].reactance()).then(a.cmp(&b))
    });
    for l in order {
        let e = &network.edges()[l];
        if uf.union(e.from, e.to) {
            mask[l] = true;
        }
    }
    if !network.mask_connected(&mask) {
        return Err(Error::Infeasible("candidate lines do not span the network".into()));
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::uniform_network;

    #[test]
    fn rank_one_update_matches_inverse() {
        let net = uniform_network(4, &[(1, 2, 2.0, true), (2, 3, 1.0, true), (3, 4, 0.5, true), (1, 4, 3.0, false)])
            .unwrap();
        let w = DMatrix::identity(3, 3);
        let base = net.existing_mask();
        let z: Vec<f64> = base.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let x = invert_spd(&net.reduced_laplacian(&z)).unwrap();
        let l = (0..4).find(|&l| !base[l]).unwrap();
        let updated = add_line_inverse(&net, &x, l);
        let direct = invert_spd(&net.reduced_laplacian(&[1.0; 4])).unwrap();
        assert!((updated - &direct).amax() < 1e-12);
        let delta = addition_delta(&net, &w, &x, l);
        assert!((delta - (direct.trace() - x.trace())).abs() < 1e-12);
    }

    #[test]
    fn greedy_picks_best_single_line() {
        // path 1-2-3 existing, candidate 1-3
        let net = uniform_network(3, &[(1, 2, 1.0, true), (2, 3, 1.0, true), (1, 3, 1.0, false)]).unwrap();
        let w = DMatrix::identity(2, 2);
        let (mask, hist) = greedy_add(&net, &w, &net.existing_mask(), &[0, 1, 2], 1).unwrap();
        assert!(mask.iter().all(|&m| m));
        assert!((hist[0].objective - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn completion_spans() {
        let net = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 2.0, false), (1, 3, 1.0, false)]).unwrap();
        let mask = spanning_completion(&net, &[false; 3]).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2);
        assert!(net.mask_connected(&mask));
    }

    #[test]
    fn swap_reaches_the_best_tree_of_a_square() {
        // square with one diagonal; W = I; the start is the worst spanning path
        let net = uniform_network(
            4,
            &[(1, 2, 1.0, false), (2, 3, 1.0, false), (3, 4, 1.0, false), (1, 4, 1.0, false), (1, 3, 1.0, false)],
        )
        .unwrap();
        let w = DMatrix::identity(3, 3);
        let start: Vec<bool> = net.edges().iter().map(|e| (e.from, e.to) != (0, 2) && (e.from, e.to) != (0, 3)).collect();
        let (mask, f) = swap_improve(&net, &w, &start, &[true; 5], 10).unwrap();
        // the star at node 1 gives X = I, trace 3
        assert!((f - 3.0).abs() < 1e-12, "{f} {mask:?}");
        assert_eq!(mask.iter().filter(|&&m| m).count(), 3);
    }
}
