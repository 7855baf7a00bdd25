//! Linearized swing dynamics and the H2 stability metric.
//!
//! The state is `[theta; omega]` over all `N + 1` nodes. The uniform angle
//! shift `[1; 0]` is a marginally stable mode of `A` that the output never
//! sees (`W 1 = 0`), so the Gramian is computed on the quotient by that mode.

pub mod lyapunov;
mod simulate;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeKind, PowerNetwork};

pub use simulate::impulse_energy_estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectivePreset {
    Coherence,
    Custom,
}

/// Weights of the angle-difference/frequency objective
/// `sum_ij w_ij (theta_i - theta_j)^2 + sum_i s_i omega_i^2`.
///
/// `weights` is the Laplacian `W` of the weight graph over all `N + 1` nodes
/// in internal node order (reference first).
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityObjective {
    weights: DMatrix<f64>,
    frequency: DVector<f64>,
    preset: ObjectivePreset,
}

impl StabilityObjective {
    /// Network coherence: `W = I - 11^T / (N+1)`, `S = 0`.
    pub fn coherence(node_count: usize) -> Self {
        let members: Vec<usize> = (0..node_count).collect();
        Self::coherence_over(node_count, &members)
    }

    /// Coherence restricted to a subset of nodes (used when passive buses are
    /// present: their angles carry no weight).
    pub fn coherence_over(node_count: usize, members: &[usize]) -> Self {
        let k = members.len() as f64;
        let mut w = DMatrix::zeros(node_count, node_count);
        for &i in members {
            for &j in members {
                w[(i, j)] = if i == j { 1.0 - 1.0 / k } else { -1.0 / k };
            }
        }
        StabilityObjective { weights: w, frequency: DVector::zeros(node_count), preset: ObjectivePreset::Coherence }
    }

    /// Objective from pairwise angle weights and per-node frequency weights,
    /// both in internal node indices.
    pub fn custom(node_count: usize, pairs: &[(usize, usize, f64)], frequency: &[(usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(node_count, node_count);
        for &(i, j, wij) in pairs {
            if i >= node_count || j >= node_count || i == j {
                return Err(Error::Config(format!("invalid weight pair ({i}, {j})")));
            }
            if !(wij >= 0.0) {
                return Err(Error::Config(format!("negative angle weight {wij} on ({i}, {j})")));
            }
            w[(i, i)] += wij;
            w[(j, j)] += wij;
            w[(i, j)] -= wij;
            w[(j, i)] -= wij;
        }
        let mut s = DVector::zeros(node_count);
        for &(i, si) in frequency {
            if i >= node_count || !(si >= 0.0) {
                return Err(Error::Config(format!("invalid frequency weight {si} at node {i}")));
            }
            s[i] += si;
        }
        Ok(StabilityObjective { weights: w, frequency: s, preset: ObjectivePreset::Custom })
    }

    /// Objective whose reduced weights are exactly `reduced`; the reference
    /// row and column are completed so that `W 1 = 0`.
    pub fn from_reduced_weights(reduced: &DMatrix<f64>) -> Self {
        let n = reduced.nrows();
        let mut w = DMatrix::zeros(n + 1, n + 1);
        w.view_mut((1, 1), (n, n)).copy_from(reduced);
        for i in 0..n {
            let s: f64 = reduced.row(i).sum();
            w[(0, i + 1)] = -s;
            w[(i + 1, 0)] = -s;
        }
        w[(0, 0)] = reduced.sum();
        StabilityObjective { weights: w, frequency: DVector::zeros(n + 1), preset: ObjectivePreset::Custom }
    }

    pub fn preset(&self) -> ObjectivePreset {
        self.preset
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    /// Full weight Laplacian `W`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn frequency_weights(&self) -> &DVector<f64> {
        &self.frequency
    }

    pub fn has_frequency_weights(&self) -> bool {
        self.frequency.iter().any(|&s| s > 0.0)
    }

    /// `W~`: `W` with the reference row and column removed.
    pub fn reduced_weights(&self) -> DMatrix<f64> {
        let n = self.weights.nrows() - 1;
        self.weights.view((1, 1), (n, n)).into_owned()
    }

    /// Weight-graph edges `(k, l, w_kl)` with `k < l` and `w_kl > 0`.
    pub fn weight_edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.weights.nrows();
        let mut out = Vec::new();
        for k in 0..n {
            for l in k + 1..n {
                let w = -self.weights[(k, l)];
                if w > 0.0 {
                    out.push((k, l, w));
                }
            }
        }
        out
    }
}

/// Weights entering `trace(W~ X)` for a network: `W~` with rows and columns
/// of zero-injection nodes cleared, i.e. `trace(W~_SS X_SS)`.
pub fn effective_reduced_weights(network: &PowerNetwork, objective: &StabilityObjective) -> DMatrix<f64> {
    let mut w = objective.reduced_weights();
    for (i, node) in network.nodes().iter().enumerate().skip(1) {
        if node.kind == NodeKind::ZeroInjection {
            w.row_mut(i - 1).fill(0.0);
            w.column_mut(i - 1).fill(0.0);
        }
    }
    w
}

/// `(A, B, C)` of the linearized swing dynamics with output
/// `y = [W^{1/2} 0; 0 S^{1/2}] [theta; omega]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl StateSpace {
    pub fn node_count(&self) -> usize {
        self.b.ncols()
    }
}

pub fn state_matrices(network: &PowerNetwork, z: &[f64], objective: &StabilityObjective) -> Result<StateSpace> {
    if network.has_zero_injection() {
        return Err(Error::Config(
            "network has zero-injection nodes; use kron_state_matrices".into(),
        ));
    }
    let lap = network.laplacian(z);
    let inertia: Vec<f64> = network.nodes().iter().map(|n| n.inertia).collect();
    let damping: Vec<f64> = network.nodes().iter().map(|n| n.damping).collect();
    state_space_from_laplacian(&lap, &inertia, &damping, objective.weights(), objective.frequency_weights())
}

/// State-space model of the Kron-reduced network over machine nodes, with
/// the objective restricted to those nodes.
pub fn kron_state_matrices(network: &PowerNetwork, z: &[f64], objective: &StabilityObjective) -> Result<StateSpace> {
    let keep: Vec<usize> =
        (0..network.node_count()).filter(|&i| network.nodes()[i].kind == NodeKind::Machine).collect();
    let lap = kron_reduce(&network.laplacian(z), &keep)?;
    let inertia: Vec<f64> = keep.iter().map(|&i| network.nodes()[i].inertia).collect();
    let damping: Vec<f64> = keep.iter().map(|&i| network.nodes()[i].damping).collect();
    let w = objective.weights().select_rows(&keep).select_columns(&keep);
    let s = objective.frequency_weights().select_rows(&keep);
    state_space_from_laplacian(&lap, &inertia, &damping, &w, &s)
}

pub fn state_space_from_laplacian(
    lap: &DMatrix<f64>,
    inertia: &[f64],
    damping: &[f64],
    weights: &DMatrix<f64>,
    frequency: &DVector<f64>,
) -> Result<StateSpace> {
    let n = lap.nrows();
    for (i, (&m, &d)) in inertia.iter().zip(damping).enumerate() {
        if !(m > 0.0) || !(d > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "nonpositive inertia or damping at node slot {i} (M = {m}, D = {d})"
            )));
        }
    }
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(n + i, n + i)] = -damping[i] / inertia[i];
        b[(n + i, i)] = 1.0 / inertia[i];
        for j in 0..n {
            a[(n + i, j)] = -lap[(i, j)] / inertia[i];
        }
    }
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(&psd_sqrt(weights));
    for i in 0..n {
        c[(n + i, n + i)] = frequency[i].max(0.0).sqrt();
    }
    Ok(StateSpace { a, b, c })
}

/// Symmetric PSD square root; eigenvalues below `1e-12` are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| if v < 1e-12 { 0.0 } else { v.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianResult {
    pub q: DMatrix<f64>,
    pub h2_squared: f64,
    /// Frobenius residual of `A^T Q + Q A + C^T C`.
    pub residual: f64,
}

/// Observability Gramian and squared H2 norm `trace(B^T Q B)`.
///
/// The rigid-body direction `[1; 0]` is deflated before the Lyapunov solve;
/// any further marginal mode (a disconnected selection) is reported as an
/// error.
pub fn observability_gramian(ss: &StateSpace) -> Result<GramianResult> {
    let dim = ss.a.nrows();
    let n = dim / 2;
    let ctc = ss.c.transpose() * &ss.c;
    let ctc_norm = ctc.norm();
    if ctc_norm == 0.0 {
        return Ok(GramianResult { q: DMatrix::zeros(dim, dim), h2_squared: 0.0, residual: 0.0 });
    }

    let mut rigid = DVector::zeros(dim);
    rigid.rows_mut(0, n).fill(1.0);
    if (&ss.c * &rigid).amax() > 1e-9 * ss.c.amax() {
        return Err(Error::Lyapunov("output observes the uniform angle shift; W must have zero row sums".into()));
    }
    let basis = complement_basis(&rigid);
    let a_red = basis.transpose() * &ss.a * &basis;
    let g_red = basis.transpose() * &ctc * &basis;
    let q_red = lyapunov::solve_continuous(&a_red, &g_red)?;
    let q = &basis * q_red * basis.transpose();

    let residual = (ss.a.transpose() * &q + &q * &ss.a + &ctc).norm();
    if residual > 1e-8 * ctc_norm {
        return Err(Error::Lyapunov(format!(
            "residual {residual:.3e} exceeds 1e-8 * |C^T C| = {:.3e}",
            1e-8 * ctc_norm
        )));
    }
    let h2_squared = (ss.b.transpose() * &q * &ss.b).trace();
    Ok(GramianResult { q, h2_squared, residual })
}

/// Orthonormal basis of the orthogonal complement of `v` (columns 2.. of the
/// Householder reflector mapping `v` onto `e_1`).
fn complement_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let dim = v.len();
    let unit = v / v.norm();
    let mut u = unit.clone();
    let sign = if unit[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += sign;
    let h = DMatrix::identity(dim, dim) - (&u * u.transpose()) * (2.0 / u.norm_squared());
    h.columns(1, dim - 1).into_owned()
}

/// `trace(W~ L~^{-1})`.
pub fn closed_form_objective(reduced_weights: &DMatrix<f64>, reduced_laplacian: &DMatrix<f64>) -> Result<f64> {
    let x = invert_spd(reduced_laplacian)?;
    Ok((reduced_weights * x).trace())
}

/// Inverse of a symmetric positive definite matrix; singular (disconnected)
/// Laplacians are reported as [`Error::DisconnectedTopology`].
pub fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol = m.clone().cholesky().ok_or(Error::DisconnectedTopology)?;
    let diag_min = chol.l_dirty().diagonal().min();
    if diag_min <= 1e-10 * m.diagonal().max().max(1.0).sqrt() {
        return Err(Error::DisconnectedTopology);
    }
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Schur complement of `m` onto the index set `keep`:
/// `M_SS - M_S,Sbar M_Sbar,Sbar^{-1} M_Sbar,S`.
pub fn kron_reduce(m: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let eliminate: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let m_ss = m.select_rows(keep).select_columns(keep);
    if eliminate.is_empty() {
        return Ok(m_ss);
    }
    let m_sb = m.select_rows(keep).select_columns(&eliminate);
    let m_bb = m.select_rows(&eliminate).select_columns(&eliminate);
    let lu = m_bb.clone().lu();
    if lu.determinant().abs() <= 1e-300 {
        return Err(Error::SingularInteriorBlock);
    }
    let sol = lu.solve(&m_sb.transpose()).ok_or(Error::SingularInteriorBlock)?;
    let red = m_ss - &m_sb * sol;
    Ok((&red + red.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::uniform_network;

    #[test]
    fn two_node_state_matrix() {
        let net = uniform_network(2, &[(1, 2, 1.0, false)]).unwrap();
        let ss = state_matrices(&net, &[1.0], &StabilityObjective::coherence(2)).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, -1.0],
        );
        assert_eq!(ss.a, expected);
        assert_eq!(ss.b.view((2, 0), (2, 2)).into_owned(), DMatrix::identity(2, 2));
        // S = 0: lower block of C vanishes
        assert_eq!(ss.c.rows(2, 2).amax(), 0.0);
    }

    #[test]
    fn coherence_preset_matrix() {
        let obj = StabilityObjective::coherence(3);
        let expected = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert!((obj.weights() - expected).amax() < 1e-15);
        assert!(!obj.has_frequency_weights());
        assert_eq!(obj.weight_edges().len(), 3);
    }

    #[test]
    fn closed_form_by_hand() {
        let i2 = DMatrix::identity(2, 2);
        let path = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        assert!((closed_form_objective(&i2, &path).unwrap() - 3.0).abs() < 1e-12);
        let tri = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        assert!((closed_form_objective(&i2, &tri).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(closed_form_objective(&DMatrix::zeros(2, 2), &tri).unwrap(), 0.0);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(closed_form_objective(&i2, &singular), Err(Error::DisconnectedTopology)));
    }

    #[test]
    fn zero_output_gives_zero_norm() {
        let net = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 1.0, false)]).unwrap();
        let obj = StabilityObjective::custom(3, &[], &[]).unwrap();
        let ss = state_matrices(&net, &[1.0, 1.0], &obj).unwrap();
        let g = observability_gramian(&ss).unwrap();
        assert_eq!(g.h2_squared, 0.0);
        assert_eq!(g.q.amax(), 0.0);
    }

    #[test]
    fn output_scaling_is_quadratic() {
        let net = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 2.0, false), (1, 3, 0.5, false)]).unwrap();
        let obj = StabilityObjective::coherence(3);
        let mut ss = state_matrices(&net, &[1.0; 3], &obj).unwrap();
        let base = observability_gramian(&ss).unwrap().h2_squared;
        ss.c *= 3.0;
        let scaled = observability_gramian(&ss).unwrap().h2_squared;
        assert!((scaled - 9.0 * base).abs() < 1e-10 * scaled);
    }

    #[test]
    fn disconnected_selection_is_rejected() {
        let net = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 1.0, false)]).unwrap();
        let ss = state_matrices(&net, &[1.0, 0.0], &StabilityObjective::coherence(3)).unwrap();
        assert!(matches!(observability_gramian(&ss), Err(Error::Lyapunov(_))));
    }

    #[test]
    fn uniform_damping_ratio_is_one_over_two_c() {
        // identical damping c = 0.4, unequal inertia
        let nodes = [1.0, 2.5, 0.7];
        let net = crate::graph::PowerNetwork::new(
            nodes
                .iter()
                .enumerate()
                .map(|(i, &m)| crate::graph::Node {
                    id: i as u32 + 1,
                    inertia: m,
                    damping: 0.4,
                    kind: NodeKind::Machine,
                })
                .collect(),
            1,
            vec![
                crate::graph::EdgeSpec { from: 1, to: 2, susceptance: 1.5, existing: false },
                crate::graph::EdgeSpec { from: 2, to: 3, susceptance: 0.8, existing: false },
            ],
        )
        .unwrap();
        let obj = StabilityObjective::coherence(3);
        let ss = state_matrices(&net, &[1.0, 1.0], &obj).unwrap();
        let h2 = observability_gramian(&ss).unwrap().h2_squared;
        let cf = closed_form_objective(&obj.reduced_weights(), &net.reduced_laplacian(&[1.0, 1.0])).unwrap();
        assert!((h2 / cf - 1.0 / 0.8).abs() < 1e-9);
    }

    #[test]
    fn kron_series_combination() {
        // path 1-2-3, eliminate the middle node: 1/(x1 + x2) = 1/2
        let net = uniform_network(3, &[(1, 2, 1.0, false), (2, 3, 1.0, false)]).unwrap();
        let lap = net.laplacian(&[1.0, 1.0]);
        let red = kron_reduce(&lap, &[0, 2]).unwrap();
        assert!((red[(0, 1)] + 0.5).abs() < 1e-15);
        assert!((red[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(kron_reduce(&lap, &[0, 1, 2]).unwrap(), lap);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(kron_reduce(&singular, &[0]), Err(Error::SingularInteriorBlock)));
    }
}
