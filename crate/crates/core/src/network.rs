//! Transmission graph, incidence matrices, and lossless swing dynamics.
//!
//! The network is a connected undirected graph with per-edge weights
//! `gamma_k = B_ij V_i V_j` (per-unit). Bus dynamics follow the swing
//! equations, expressed either in per-bus angles `delta` or in the reduced
//! per-tree-edge angle differences `phi = D_t' delta`, where `D_t` is the
//! incidence matrix of a spanning tree.

use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Identity-check tolerance for the tree pseudo-inverse.
pub const PSEUDO_INVERSE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network needs at least 2 buses, got {0}")]
    TooFewBuses(usize),
    #[error("edge {index} references bus {bus} outside 0..{n}")]
    EdgeOutOfRange { index: usize, bus: usize, n: usize },
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("{name} must have one entry per {per}, got {got} for {expected}")]
    LengthMismatch {
        name: &'static str,
        per: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{name}[{index}] must be positive, got {value}")]
    NonPositiveEntry {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("tree must have n-1 = {expected} edges, got {got}")]
    WrongTreeSize { got: usize, expected: usize },
    #[error("tree edge index {0} out of range")]
    TreeEdgeOutOfRange(usize),
    #[error("selected edges do not form a spanning tree")]
    NotASpanningTree,
    #[error("vector `{name}` has length {got}, expected {expected}")]
    BadVectorLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Immutable transmission network with cached incidence structure.
#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    edges: Vec<(usize, usize)>,
    gamma: DVector<f64>,
    inertia: DVector<f64>,
    damping: DVector<f64>,
    tree_edges: Vec<usize>,
    incidence: DMatrix<f64>,
    tree_incidence: DMatrix<f64>,
    tree_pinv: DMatrix<f64>,
    // D' D_t^{+'} : maps tree angles to all m edge angle differences
    edge_from_tree: DMatrix<f64>,
}

impl Network {
    /// Builds a network with a deterministic breadth-first spanning tree
    /// rooted at bus 0.
    ///
    /// Edges are `(positive end, negative end)` pairs of 0-based bus indices.
    /// Inertia must be strictly positive on every bus (buses without a
    /// machine get a small surrogate value in scenario files).
    pub fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        gamma: Vec<f64>,
        inertia: Vec<f64>,
        damping: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(NetworkError::EdgeOutOfRange {
                    index: k,
                    bus: i.max(j),
                    n,
                });
            }
            if i == j {
                return Err(NetworkError::SelfLoop(k));
            }
        }
        let tree = bfs_spanning_tree(n, &edges)?;
        Self::with_tree(n, edges, gamma, inertia, damping, tree)
    }

    /// Builds a network with an explicit spanning-tree edge subset.
    pub fn with_tree(
        n: usize,
        edges: Vec<(usize, usize)>,
        gamma: Vec<f64>,
        inertia: Vec<f64>,
        damping: Vec<f64>,
        tree_edges: Vec<usize>,
    ) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewBuses(n));
        }
        let m = edges.len();
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= n {
                return Err(NetworkError::EdgeOutOfRange {
                    index: k,
                    bus: i,
                    n,
                });
            }
            if j >= n {
                return Err(NetworkError::EdgeOutOfRange {
                    index: k,
                    bus: j,
                    n,
                });
            }
            if i == j {
                return Err(NetworkError::SelfLoop(k));
            }
        }
        check_len("gamma", "edge", gamma.len(), m)?;
        check_len("inertia", "bus", inertia.len(), n)?;
        check_len("damping", "bus", damping.len(), n)?;
        check_positive("gamma", &gamma)?;
        check_positive("inertia", &inertia)?;
        check_positive("damping", &damping)?;
        if !is_connected(n, &edges) {
            return Err(NetworkError::Disconnected);
        }

        if tree_edges.len() != n - 1 {
            return Err(NetworkError::WrongTreeSize {
                got: tree_edges.len(),
                expected: n - 1,
            });
        }
        for &k in &tree_edges {
            if k >= m {
                return Err(NetworkError::TreeEdgeOutOfRange(k));
            }
        }
        let tree_pairs: Vec<(usize, usize)> = tree_edges.iter().map(|&k| edges[k]).collect();
        if !is_connected(n, &tree_pairs) {
            // n-1 edges connecting all n buses are automatically acyclic
            return Err(NetworkError::NotASpanningTree);
        }

        let mut incidence = DMatrix::zeros(n, m);
        for (k, &(i, j)) in edges.iter().enumerate() {
            incidence[(i, k)] = 1.0;
            incidence[(j, k)] = -1.0;
        }
        let tree_incidence = incidence.select_columns(tree_edges.iter());

        // Moore-Penrose pseudo-inverse (D_t' D_t)^{-1} D_t'
        let gram = tree_incidence.transpose() * &tree_incidence;
        let tree_pinv = gram
            .cholesky()
            .ok_or(NetworkError::NotASpanningTree)?
            .solve(&tree_incidence.transpose());
        let check = &tree_pinv * &tree_incidence;
        let identity_err = (check - DMatrix::<f64>::identity(n - 1, n - 1)).abs().max();
        if identity_err > PSEUDO_INVERSE_TOL {
            return Err(NetworkError::NotASpanningTree);
        }

        // D' D_t^{+'} expresses every edge angle as a signed sum of tree
        // angles along the unique tree path, so it is an integer matrix in
        // exact arithmetic; snapping removes solver roundoff.
        let mut edge_from_tree = incidence.transpose() * tree_pinv.transpose();
        for entry in edge_from_tree.iter_mut() {
            let snapped = entry.round();
            if (*entry - snapped).abs() < 1e-9 {
                *entry = snapped;
            }
        }

        Ok(Self {
            n,
            edges,
            gamma: DVector::from_vec(gamma),
            inertia: DVector::from_vec(inertia),
            damping: DVector::from_vec(damping),
            tree_edges,
            incidence,
            tree_incidence,
            tree_pinv,
            edge_from_tree,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn tree_edges(&self) -> &[usize] {
        &self.tree_edges
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn inertia(&self) -> &DVector<f64> {
        &self.inertia
    }

    pub fn damping(&self) -> &DVector<f64> {
        &self.damping
    }

    /// Bus-edge incidence matrix `D` (n x m, entries in {-1, 0, +1}).
    pub fn incidence_matrix(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    /// Tree incidence matrix `D_t` (n x (n-1)).
    pub fn tree_incidence(&self) -> &DMatrix<f64> {
        &self.tree_incidence
    }

    /// Pseudo-inverse `D_t^+ = (D_t' D_t)^{-1} D_t'` ((n-1) x n).
    pub fn tree_pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.tree_pinv
    }

    /// Angle difference across every edge induced by tree angles `phi`.
    pub fn edge_angles(&self, phi: &DVector<f64>) -> DVector<f64> {
        &self.edge_from_tree * phi
    }

    /// Network potential `U(phi) = -1' Gamma cos(D' D_t^{+'} phi)`.
    pub fn potential(&self, phi: &DVector<f64>) -> f64 {
        let angles = self.edge_angles(phi);
        -angles
            .iter()
            .zip(self.gamma.iter())
            .map(|(&a, &g)| g * a.cos())
            .sum::<f64>()
    }

    /// Gradient of the potential, `D_t^+ D Gamma sin(D' D_t^{+'} phi)`.
    pub fn potential_gradient(&self, phi: &DVector<f64>) -> DVector<f64> {
        &self.tree_pinv * (&self.incidence * self.edge_flows(phi))
    }

    /// Per-edge power flow `gamma_k sin(angle_k)` at tree angles `phi`.
    pub fn edge_flows(&self, phi: &DVector<f64>) -> DVector<f64> {
        let mut angles = self.edge_angles(phi);
        for (k, a) in angles.iter_mut().enumerate() {
            *a = self.gamma[k] * a.sin();
        }
        angles
    }

    /// Hessian of the potential, `D_t^+ D Gamma cos(.) D' D_t^{+'}`.
    pub fn potential_hessian(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let angles = self.edge_angles(phi);
        let mut weighted = self.edge_from_tree.clone();
        for k in 0..self.n_edges() {
            let w = self.gamma[k] * angles[k].cos();
            weighted.row_mut(k).scale_mut(w);
        }
        &self.tree_pinv * (&self.incidence * weighted)
    }

    /// Swing equations in bus-angle coordinates:
    /// `dot delta = omega`, `M dot omega = -D Gamma sin(D' delta) - A omega + P_g - P_d`.
    pub fn swing_field_delta(
        &self,
        delta: &DVector<f64>,
        omega: &DVector<f64>,
        p_g: &DVector<f64>,
        p_d: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), NetworkError> {
        self.check_bus_vec("delta", delta)?;
        self.check_bus_vec("omega", omega)?;
        self.check_bus_vec("p_g", p_g)?;
        self.check_bus_vec("p_d", p_d)?;
        let mut angles = self.incidence.transpose() * delta;
        for (k, a) in angles.iter_mut().enumerate() {
            *a = self.gamma[k] * a.sin();
        }
        let mut omega_dot = -(&self.incidence * angles);
        for i in 0..self.n {
            omega_dot[i] =
                (omega_dot[i] - self.damping[i] * omega[i] + p_g[i] - p_d[i]) / self.inertia[i];
        }
        Ok((omega.clone(), omega_dot))
    }

    /// Swing equations in reduced coordinates:
    /// `dot phi = D_t' omega`, `M dot omega = -D_t grad U(phi) - A omega + P_g - P_d`.
    pub fn swing_field_phi(
        &self,
        phi: &DVector<f64>,
        omega: &DVector<f64>,
        p_g: &DVector<f64>,
        p_d: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), NetworkError> {
        self.check_tree_vec("phi", phi)?;
        self.check_bus_vec("omega", omega)?;
        self.check_bus_vec("p_g", p_g)?;
        self.check_bus_vec("p_d", p_d)?;
        let phi_dot = self.tree_incidence.transpose() * omega;
        let mut omega_dot = -(&self.tree_incidence * self.potential_gradient(phi));
        for i in 0..self.n {
            omega_dot[i] =
                (omega_dot[i] - self.damping[i] * omega[i] + p_g[i] - p_d[i]) / self.inertia[i];
        }
        Ok((phi_dot, omega_dot))
    }

    /// True iff every induced edge angle lies strictly inside (-pi/2, pi/2).
    pub fn security_constraint_holds(&self, phi: &DVector<f64>) -> bool {
        self.edge_angles(phi).iter().all(|a| a.abs() < FRAC_PI_2)
    }

    /// Reduced angles `phi = D_t' delta` for given bus angles.
    pub fn phi_from_delta(&self, delta: &DVector<f64>) -> DVector<f64> {
        self.tree_incidence.transpose() * delta
    }

    fn check_bus_vec(&self, name: &'static str, v: &DVector<f64>) -> Result<(), NetworkError> {
        if v.len() != self.n {
            return Err(NetworkError::BadVectorLength {
                name,
                got: v.len(),
                expected: self.n,
            });
        }
        Ok(())
    }

    fn check_tree_vec(&self, name: &'static str, v: &DVector<f64>) -> Result<(), NetworkError> {
        if v.len() != self.n - 1 {
            return Err(NetworkError::BadVectorLength {
                name,
                got: v.len(),
                expected: self.n - 1,
            });
        }
        Ok(())
    }
}

/// Grid state in reduced coordinates, with an optional bus-angle origin.
#[derive(Debug, Clone)]
pub struct GridState {
    pub phi: DVector<f64>,
    pub omega: DVector<f64>,
}

impl GridState {
    pub fn new(phi: DVector<f64>, omega: DVector<f64>) -> Self {
        Self { phi, omega }
    }

    pub fn from_bus_angles(net: &Network, delta: &DVector<f64>, omega: DVector<f64>) -> Self {
        Self {
            phi: net.phi_from_delta(delta),
            omega,
        }
    }

    /// Checks `phi = D_t' delta` against a candidate bus-angle vector.
    pub fn consistent_with(&self, net: &Network, delta: &DVector<f64>, tol: f64) -> bool {
        (net.phi_from_delta(delta) - &self.phi).abs().max() <= tol
    }
}

/// Deterministic breadth-first spanning tree rooted at bus 0, returned as
/// sorted edge indices.
pub fn bfs_spanning_tree(n: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>, NetworkError> {
    if n < 2 {
        return Err(NetworkError::TooFewBuses(n));
    }
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(i, j)) in edges.iter().enumerate() {
        if i >= n || j >= n {
            return Err(NetworkError::EdgeOutOfRange {
                index: k,
                bus: i.max(j),
                n,
            });
        }
        adjacency[i].push((j, k));
        adjacency[j].push((i, k));
    }
    let mut seen = vec![false; n];
    let mut tree = Vec::with_capacity(n - 1);
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, k) in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                tree.push(k);
                queue.push_back(v);
            }
        }
    }
    if tree.len() != n - 1 {
        return Err(NetworkError::Disconnected);
    }
    tree.sort_unstable();
    Ok(tree)
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in edges {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

fn check_len(
    name: &'static str,
    per: &'static str,
    got: usize,
    expected: usize,
) -> Result<(), NetworkError> {
    if got != expected {
        Err(NetworkError::LengthMismatch {
            name,
            per,
            got,
            expected,
        })
    } else {
        Ok(())
    }
}

fn check_positive(name: &'static str, values: &[f64]) -> Result<(), NetworkError> {
    for (index, &value) in values.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(NetworkError::NonPositiveEntry { name, index, value });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_bus() -> Network {
        Network::new(2, vec![(0, 1)], vec![1.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    fn path_three() -> Network {
        Network::new(
            3,
            vec![(0, 1), (1, 2)],
            vec![1.0, 1.0],
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn incidence_smallest_graph() {
        let net = two_bus();
        let d = net.incidence_matrix();
        assert_eq!((d[(0, 0)], d[(1, 0)]), (1.0, -1.0));
    }

    #[test]
    fn incidence_path_graph() {
        let net = path_three();
        let d = net.incidence_matrix();
        assert_eq!(d.column(0).as_slice(), &[1.0, -1.0, 0.0]);
        assert_eq!(d.column(1).as_slice(), &[0.0, 1.0, -1.0]);
    }

    #[test]
    fn two_bus_pseudo_inverse() {
        let net = two_bus();
        let p = net.tree_pseudo_inverse();
        assert_relative_eq!(p[(0, 0)], 0.5);
        assert_relative_eq!(p[(0, 1)], -0.5);
    }

    #[test]
    fn potential_gradient_examples() {
        let net = two_bus();
        assert_eq!(net.potential_gradient(&DVector::zeros(1))[0], 0.0);
        let g = net.potential_gradient(&DVector::from_vec(vec![std::f64::consts::FRAC_PI_6]));
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn potential_gradient_matches_finite_difference() {
        let net = path_three();
        let phi = DVector::from_vec(vec![0.3, -0.2]);
        let g = net.potential_gradient(&phi);
        let h = 1e-7;
        for k in 0..2 {
            let mut hi = phi.clone();
            let mut lo = phi.clone();
            hi[k] += h;
            lo[k] -= h;
            let fd = (net.potential(&hi) - net.potential(&lo)) / (2.0 * h);
            assert_relative_eq!(g[k], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn swing_field_equilibrium_is_stationary() {
        let net = path_three();
        let zero = DVector::zeros(3);
        let p = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let (dd, dw) = net.swing_field_delta(&zero, &zero, &p, &p).unwrap();
        assert_eq!(dd.abs().max(), 0.0);
        assert_eq!(dw.abs().max(), 0.0);
    }

    #[test]
    fn swing_field_two_bus_sine() {
        let net = two_bus();
        let delta = DVector::from_vec(vec![std::f64::consts::FRAC_PI_6, 0.0]);
        let zero = DVector::zeros(2);
        let (_, dw) = net.swing_field_delta(&delta, &zero, &zero, &zero).unwrap();
        assert_relative_eq!(dw[0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(dw[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uniform_frequency_mode_is_annihilated() {
        let net = path_three();
        let ones = DVector::from_element(3, 1.0);
        let (dphi, _) = net
            .swing_field_phi(
                &DVector::zeros(2),
                &ones,
                &DVector::zeros(3),
                &DVector::zeros(3),
            )
            .unwrap();
        assert!(dphi.abs().max() < 1e-15);
    }

    #[test]
    fn security_constraint_examples() {
        let net = two_bus();
        assert!(net.security_constraint_holds(&DVector::zeros(1)));
        assert!(!net.security_constraint_holds(&DVector::from_vec(vec![FRAC_PI_2])));
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(matches!(
            Network::new(2, vec![(0, 0)], vec![1.0], vec![1.0; 2], vec![1.0; 2]),
            Err(NetworkError::SelfLoop(0))
        ));
        assert!(matches!(
            Network::new(
                4,
                vec![(0, 1), (2, 3)],
                vec![1.0; 2],
                vec![1.0; 4],
                vec![1.0; 4]
            ),
            Err(NetworkError::Disconnected)
        ));
        // zero inertia rejected at construction
        assert!(matches!(
            Network::new(2, vec![(0, 1)], vec![1.0], vec![1.0, 0.0], vec![1.0; 2]),
            Err(NetworkError::NonPositiveEntry {
                name: "inertia",
                ..
            })
        ));
        // a cycle is not a spanning tree
        assert!(matches!(
            Network::with_tree(
                3,
                vec![(0, 1), (1, 2), (2, 0)],
                vec![1.0; 3],
                vec![1.0; 3],
                vec![1.0; 3],
                vec![0, 1, 2]
            ),
            Err(NetworkError::WrongTreeSize { .. })
        ));
    }

    /// 14-bus fixture shared by the heavier structural tests.
    pub(crate) fn ieee14_edges() -> Vec<(usize, usize)> {
        [
            (1, 2),
            (1, 5),
            (2, 3),
            (2, 4),
            (2, 5),
            (3, 4),
            (4, 5),
            (4, 7),
            (4, 9),
            (5, 6),
            (6, 11),
            (6, 12),
            (6, 13),
            (7, 8),
            (7, 9),
            (9, 10),
            (9, 14),
            (10, 11),
            (12, 13),
            (13, 14),
        ]
        .iter()
        .map(|&(i, j)| (i - 1, j - 1))
        .collect()
    }

    fn ieee14_uniform() -> Network {
        let edges = ieee14_edges();
        let m = edges.len();
        Network::new(14, edges, vec![5.0; m], vec![1.0; 14], vec![1.0; 14]).unwrap()
    }

    #[test]
    fn ieee14_incidence_columns_sum_to_zero() {
        let net = ieee14_uniform();
        let d = net.incidence_matrix();
        assert_eq!(d.ncols(), 20);
        assert_eq!(d.nrows(), 14);
        for k in 0..20 {
            assert_eq!(d.column(k).sum(), 0.0);
        }
    }

    #[test]
    fn ieee14_pseudo_inverse_identity_both_trees() {
        let net = ieee14_uniform();
        let id_err = (net.tree_pseudo_inverse() * net.tree_incidence()
            - DMatrix::<f64>::identity(13, 13))
        .abs()
        .max();
        assert!(id_err < PSEUDO_INVERSE_TOL);

        // explicit alternative tree: {1-2,2-3,3-4,4-5,5-6,4-7,7-8,4-9,9-10,6-11,6-12,6-13,9-14}
        let edges = ieee14_edges();
        let m = edges.len();
        let tree = vec![0, 2, 5, 6, 9, 7, 13, 8, 15, 10, 11, 12, 16];
        let net2 = Network::with_tree(14, edges, vec![5.0; m], vec![1.0; 14], vec![1.0; 14], tree)
            .unwrap();
        let id_err2 = (net2.tree_pseudo_inverse() * net2.tree_incidence()
            - DMatrix::<f64>::identity(13, 13))
        .abs()
        .max();
        assert!(id_err2 < PSEUDO_INVERSE_TOL);
    }

    #[test]
    fn tree_gradient_identity_random_states() {
        // D_t grad U(phi) = D Gamma sin(D' delta) with delta = D_t^{+'} phi
        let net = ieee14_uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let phi = DVector::from_fn(13, |_, _| rng.gen_range(-0.5..0.5));
            let lhs = net.tree_incidence() * net.potential_gradient(&phi);
            let delta = net.tree_pseudo_inverse().transpose() * &phi;
            let mut angles = net.incidence_matrix().transpose() * delta;
            for (k, a) in angles.iter_mut().enumerate() {
                *a = net.gamma()[k] * a.sin();
            }
            let rhs = net.incidence_matrix() * angles;
            assert!((lhs - rhs).abs().max() < 1e-10);
        }
    }

    #[test]
    fn coordinate_systems_agree_on_omega_dot() {
        let net = ieee14_uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let delta = DVector::from_fn(14, |_, _| rng.gen_range(-0.4..0.4));
            let omega = DVector::from_fn(14, |_, _| rng.gen_range(-0.1..0.1));
            let p_g = DVector::from_fn(14, |_, _| rng.gen_range(0.0..1.0));
            let p_d = DVector::from_fn(14, |_, _| rng.gen_range(0.0..1.0));
            let phi = net.phi_from_delta(&delta);
            let (_, dw_delta) = net.swing_field_delta(&delta, &omega, &p_g, &p_d).unwrap();
            let (_, dw_phi) = net.swing_field_phi(&phi, &omega, &p_g, &p_d).unwrap();
            assert!((dw_delta - dw_phi).abs().max() < 1e-10);
        }
    }

    #[test]
    fn aggregate_momentum_balance() {
        // 1' M dot omega = -1' A omega + 1' (P_g - P_d): the network term drops
        let net = ieee14_uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let phi = DVector::from_fn(13, |_, _| rng.gen_range(-0.5..0.5));
            let omega = DVector::from_fn(14, |_, _| rng.gen_range(-0.2..0.2));
            let p_g = DVector::from_fn(14, |_, _| rng.gen_range(0.0..1.0));
            let p_d = DVector::from_fn(14, |_, _| rng.gen_range(0.0..1.0));
            let (_, dw) = net.swing_field_phi(&phi, &omega, &p_g, &p_d).unwrap();
            let lhs: f64 = dw
                .iter()
                .enumerate()
                .map(|(i, &w)| net.inertia()[i] * w)
                .sum();
            let rhs: f64 = (0..14)
                .map(|i| -net.damping()[i] * omega[i] + p_g[i] - p_d[i])
                .sum();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn grid_state_consistency() {
        let net = path_three();
        let delta = DVector::from_vec(vec![0.1, 0.0, -0.2]);
        let state = GridState::from_bus_angles(&net, &delta, DVector::zeros(3));
        assert!(state.consistent_with(&net, &delta, 1e-12));
        let shifted = delta.add_scalar(5.0);
        // uniform shifts are invisible in reduced coordinates
        assert!(state.consistent_with(&net, &shifted, 1e-9));
    }
}
