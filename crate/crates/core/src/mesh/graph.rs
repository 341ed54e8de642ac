use std::collections::VecDeque;
use std::sync::Arc;

use super::SurfaceMesh;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Default additive constant in the inverse-distance edge weight, in mesh units.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Symmetric weighted adjacency without self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    adjacency: Arc<CsrMatrix>,
    degrees: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Builds from undirected edges `(i, j, w)`; each pair may appear once.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut und: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Argument(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i == j {
                return Err(Error::Argument(format!("self-loop at node {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Argument(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            und.push((i.min(j), i.max(j), w));
        }
        und.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if und.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Argument("duplicate edge".into()));
        }
        let mut trip = Vec::with_capacity(2 * und.len());
        for &(i, j, w) in &und {
            trip.push((i, j, w));
            trip.push((j, i, w));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, &trip)?;
        let degrees = (0..n)
            .map(|r| adjacency.row(r).1.iter().fold(0.0, |s, w| s + w))
            .collect();
        Ok(WeightedGraph {
            n,
            adjacency: Arc::new(adjacency),
            degrees,
            edges: und,
        })
    }

    /// Inverse-distance weights over the mesh edges, without the connectivity check.
    pub fn from_mesh_unchecked(mesh: &SurfaceMesh, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Argument(format!("epsilon must be a finite non-negative value, got {epsilon}")));
        }
        mesh.validate()?;
        let mut edges = Vec::new();
        for (i, j) in mesh.undirected_edges() {
            let d = distance(&mesh.vertices[i], &mesh.vertices[j]) + epsilon;
            if d == 0.0 {
                return Err(Error::Division { i, j });
            }
            edges.push((i, j, 1.0 / d));
        }
        Self::from_edges(mesh.n_vertices(), &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &Arc<CsrMatrix> {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Undirected edges `(i, j, a_ij)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency.get(i, j)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    /// Sum of all adjacency entries (each undirected edge counted twice).
    pub fn total_weight(&self) -> f64 {
        self.degrees.iter().sum()
    }

    /// Number of connected components.
    pub fn n_components(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let edges: Vec<_> = self.edges.iter().map(|&(i, j, w)| (perm[i], perm[j], w)).collect();
        Self::from_edges(self.n, &edges)
    }

    /// Multiplies every weight by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let edges: Vec<_> = self.edges.iter().map(|&(i, j, w)| (i, j, w * c)).collect();
        Self::from_edges(self.n, &edges)
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Edge weights `1 / (‖x_i − x_j‖ + epsilon)` over face and explicit edges.
pub fn build_weighted_graph(mesh: &SurfaceMesh, epsilon: f64) -> Result<WeightedGraph> {
    let g = WeightedGraph::from_mesh_unchecked(mesh, epsilon)?;
    if !check_connected(&g) {
        return Err(Error::Connectivity {
            components: g.n_components(),
        });
    }
    Ok(g)
}

/// True iff a breadth-first traversal from node 0 reaches every node.
pub fn check_connected(graph: &WeightedGraph) -> bool {
    if graph.n() == 0 {
        return true;
    }
    let mut seen = vec![false; graph.n()];
    seen[0] = true;
    let mut reached = 1;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == graph.n()
}
