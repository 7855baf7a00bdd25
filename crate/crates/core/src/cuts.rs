//! Eigenvector cuts from the certificate `Y = [X I; I L~(z)] >= 0`.
//!
//! For any `v = [v1; v2]`, `v^T Y v = v1^T X v1 + v2^T L~(z) v2 + 2 v1^T v2`
//! is linear in `(X, z)` and nonnegative at every feasible point.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::formulation::reduced_incidence;
use crate::graph::PowerNetwork;

/// Minimum violation for a cut to be kept.
pub const VIOLATION_TOL: f64 = 1e-8;

/// `Y` for symmetric `x` and edge weights `z`.
pub fn assemble_y(x: &DMatrix<f64>, z: &[f64], network: &PowerNetwork) -> DMatrix<f64> {
    let n = x.nrows();
    let lap = network.reduced_laplacian(z);
    let mut y = DMatrix::zeros(2 * n, 2 * n);
    y.view_mut((0, 0), (n, n)).copy_from(x);
    y.view_mut((n, n), (n, n)).copy_from(&lap);
    for i in 0..n {
        y[(i, n + i)] = 1.0;
        y[(n + i, i)] = 1.0;
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Sparse,
    Dense,
    Random,
}

/// A direction `v = [v1; v2]` and the eigenvalue it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CutCandidate {
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub eigenvalue: f64,
    pub kind: CutKind,
    /// `-v^T Y v` at the separated point.
    pub violation: f64,
}

impl CutCandidate {
    pub fn support(&self) -> usize {
        self.v1.iter().zip(self.v2.iter()).filter(|(a, b)| **a != 0.0 || **b != 0.0).count()
    }
}

/// `sum x_coefs X + sum z_coefs z + constant >= 0`, with `X` entries given
/// as `(i, j)` with `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutInequality {
    pub x_coefs: Vec<((usize, usize), f64)>,
    pub z_coefs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl CutInequality {
    pub fn evaluate(&self, x: &DMatrix<f64>, z: &[f64]) -> f64 {
        let xs: f64 = self.x_coefs.iter().map(|&((i, j), c)| c * x[(i, j)]).sum();
        let zs: f64 = self.z_coefs.iter().map(|&(l, c)| c * z[l]).sum();
        xs + zs + self.constant
    }

    /// Hash of the coefficients scaled to unit max-norm and rounded to 1e-10.
    pub fn fingerprint(&self) -> u64 {
        let scale = self
            .x_coefs
            .iter()
            .map(|c| c.1.abs())
            .chain(self.z_coefs.iter().map(|c| c.1.abs()))
            .fold(self.constant.abs(), f64::max)
            .max(f64::MIN_POSITIVE);
        let q = |v: f64| (v / scale * 1e10).round() as i64;
        let mut h = DefaultHasher::new();
        for &((i, j), c) in &self.x_coefs {
            (0u8, i, j, q(c)).hash(&mut h);
        }
        for &(l, c) in &self.z_coefs {
            (1u8, l, 0usize, q(c)).hash(&mut h);
        }
        q(self.constant).hash(&mut h);
        h.finish()
    }
}

/// Linear form of `v^T Y v >= 0`: `X_ij` gets `(2 - delta_ij) v1_i v1_j`,
/// `z_l` gets `b_l (a_l^T v2)^2`, the constant is `2 v1^T v2`.
pub fn cut_to_inequality(candidate: &CutCandidate, network: &PowerNetwork) -> CutInequality {
    let (v1, v2) = (&candidate.v1, &candidate.v2);
    let n = v1.len();
    let mut x_coefs = Vec::new();
    for i in 0..n {
        if v1[i] == 0.0 {
            continue;
        }
        for j in i..n {
            let c = if i == j { v1[i] * v1[i] } else { 2.0 * v1[i] * v1[j] };
            if c != 0.0 {
                x_coefs.push(((i, j), c));
            }
        }
    }
    let mut z_coefs = Vec::new();
    for (l, e) in network.edges().iter().enumerate() {
        let av: f64 = reduced_incidence(network, l).iter().map(|&(r, s)| s * v2[r]).sum();
        let c = e.susceptance * av * av;
        if c != 0.0 {
            z_coefs.push((l, c));
        }
    }
    CutInequality { x_coefs, z_coefs, constant: 2.0 * v1.dot(v2) }
}

fn quad(y: &DMatrix<f64>, v1: &DVector<f64>, v2: &DVector<f64>) -> f64 {
    let n = v1.len();
    let mut v = DVector::zeros(2 * n);
    v.rows_mut(0, n).copy_from(v1);
    v.rows_mut(n, n).copy_from(v2);
    v.dot(&(y * &v))
}

/// Keep the `k` positions with the most negative `v1_n v2_n`.
fn sparsify(v1: &DVector<f64>, v2: &DVector<f64>, k: usize) -> (DVector<f64>, DVector<f64>) {
    let mut order: Vec<usize> = (0..v1.len()).filter(|&i| v1[i] * v2[i] < 0.0).collect();
    order.sort_by(|&a, &b| (v1[a] * v2[a]).total_cmp(&(v1[b] * v2[b])).then(a.cmp(&b)));
    let mut s1 = DVector::zeros(v1.len());
    let mut s2 = DVector::zeros(v2.len());
    for &i in order.iter().take(k) {
        s1[i] = v1[i];
        s2[i] = v2[i];
    }
    (s1, s2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationConfig {
    pub gamma: f64,
    pub k: usize,
    pub max_cuts: usize,
    /// Also emit the dense cut next to each accepted sparse one.
    pub dense: bool,
}

/// Cuts from the eigenpairs of `y` below `gamma`, most negative first. The
/// sparse variant is preferred; when it is not violated the dense cut is
/// used. Directions with `v1 = 0` give vacuous cuts and are skipped.
pub fn separate(y: &DMatrix<f64>, cfg: &SeparationConfig) -> Vec<CutCandidate> {
    let n = y.nrows() / 2;
    let eig = y.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * n).filter(|&k| eig.eigenvalues[k] < cfg.gamma).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut out = Vec::new();
    for k in order {
        if out.len() >= cfg.max_cuts {
            break;
        }
        let v = eig.eigenvectors.column(k);
        let v1: DVector<f64> = v.rows(0, n).into_owned();
        let v2: DVector<f64> = v.rows(n, n).into_owned();
        if v1.amax() < 1e-12 {
            continue;
        }
        let lambda = eig.eigenvalues[k];
        let dense_violation = -quad(y, &v1, &v2);
        let (s1, s2) = sparsify(&v1, &v2, cfg.k);
        let sparse_violation = if s1.amax() > 1e-12 { -quad(y, &s1, &s2) } else { f64::NEG_INFINITY };
        if sparse_violation > VIOLATION_TOL {
            out.push(CutCandidate { v1: s1, v2: s2, eigenvalue: lambda, kind: CutKind::Sparse, violation: sparse_violation });
            if cfg.dense && dense_violation > VIOLATION_TOL && out.len() < cfg.max_cuts {
                out.push(CutCandidate { v1, v2, eigenvalue: lambda, kind: CutKind::Dense, violation: dense_violation });
            }
        } else if dense_violation > VIOLATION_TOL {
            out.push(CutCandidate { v1, v2, eigenvalue: lambda, kind: CutKind::Dense, violation: dense_violation });
        }
    }
    out
}

/// Cuts along standard normal directions; kept only when violated.
pub fn random_cuts(y: &DMatrix<f64>, count: usize, seed: u64) -> Vec<CutCandidate> {
    let n = y.nrows() / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..count {
        let v1 = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let v2 = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let violation = -quad(y, &v1, &v2);
        if violation > VIOLATION_TOL {
            out.push(CutCandidate { v1, v2, eigenvalue: f64::NAN, kind: CutKind::Random, violation });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutLogEntry {
    pub round: usize,
    pub eigenvalue: Option<f64>,
    pub violation: f64,
    pub support: usize,
    pub kind: CutKind,
    pub accepted: bool,
    pub reason: Option<String>,
}

/// Accepted cuts with duplicate suppression and a total budget.
#[derive(Debug, Clone, Default)]
pub struct CutPool {
    seen: HashSet<u64>,
    pub cuts: Vec<CutInequality>,
    pub log: Vec<CutLogEntry>,
    pub budget: usize,
}

impl CutPool {
    pub fn new(budget: usize) -> Self {
        CutPool { budget, ..Default::default() }
    }

    /// Try to add a cut; returns the inequality when accepted.
    pub fn offer(&mut self, round: usize, cand: &CutCandidate, network: &PowerNetwork) -> Option<CutInequality> {
        let ineq = cut_to_inequality(cand, network);
        let reject = if self.cuts.len() >= self.budget {
            Some("budget exhausted")
        } else if !self.seen.insert(ineq.fingerprint()) {
            Some("duplicate")
        } else {
            None
        };
        self.log.push(CutLogEntry {
            round,
            eigenvalue: cand.eigenvalue.is_finite().then_some(cand.eigenvalue),
            violation: cand.violation,
            support: cand.support(),
            kind: cand.kind,
            accepted: reject.is_none(),
            reason: reject.map(str::to_string),
        });
        if reject.is_some() {
            return None;
        }
        self.cuts.push(ineq.clone());
        Some(ineq)
    }
}
