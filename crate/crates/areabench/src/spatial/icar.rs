//! Intrinsic CAR precision induced by an adjacency graph: the graph
//! Laplacian Q with Q_ii = degree(i) and Q_ij = -1 for neighbors.
//! Rows sum to zero, so Q is rank n-1 on a connected graph.

use nalgebra::DMatrix;

use super::graph::AreaGraph;

/// Sparse representation of the Laplacian: degrees plus an edge list.
/// The quadratic form and matrix-vector product run over edges, which is
/// all the samplers need; a dense copy is available for eigenwork.
#[derive(Debug, Clone)]
pub struct IcarPrecision {
    degrees: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

impl IcarPrecision {
    pub fn from_graph(graph: &AreaGraph) -> Self {
        IcarPrecision {
            degrees: (0..graph.n_areas())
                .map(|i| graph.degree(i) as f64)
                .collect(),
            edges: graph.edges(),
        }
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    /// u' Q u = sum over edges (u_i - u_j)^2.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n());
        self.edges
            .iter()
            .map(|&(i, j)| {
                let d = u[i] - u[j];
                d * d
            })
            .sum()
    }

    /// Q u, for gradients: (Qu)_i = degree_i u_i - sum of neighbor values.
    pub fn mat_vec(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.n());
        let mut out: Vec<f64> = u.iter().zip(&self.degrees).map(|(x, d)| x * d).collect();
        for &(i, j) in &self.edges {
            out[i] -= u[j];
            out[j] -= u[i];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            q[(i, i)] = self.degrees[i];
        }
        for &(i, j) in &self.edges {
            q[(i, j)] = -1.0;
            q[(j, i)] = -1.0;
        }
        q
    }
}
