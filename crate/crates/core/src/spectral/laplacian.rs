use crate::error::{Error, Result};
use crate::mesh::WeightedGraph;
use crate::sparse::CsrMatrix;

/// Symmetric normalized Laplacian `I − D^{-1/2} A D^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    matrix: CsrMatrix,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        self.matrix.to_dense().into_data()
    }
}

pub fn build_laplacian(graph: &WeightedGraph) -> Result<Laplacian> {
    let n = graph.n();
    let deg = graph.degrees();
    if let Some(node) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Degree { node });
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut trip = Vec::with_capacity(n + 2 * graph.edges().len());
    for i in 0..n {
        trip.push((i, i, 1.0));
    }
    for &(i, j, w) in graph.edges() {
        // same expression for (i, j) and (j, i) keeps the matrix exactly symmetric
        let v = -(w * inv_sqrt[i] * inv_sqrt[j]);
        trip.push((i, j, v));
        trip.push((j, i, v));
    }
    Ok(Laplacian {
        matrix: CsrMatrix::from_triplets(n, n, &trip)?,
    })
}
