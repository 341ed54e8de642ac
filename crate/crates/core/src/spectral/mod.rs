//! Normalized Laplacian, smallest eigenpairs, eigenvalue-normalized spectral
//! coordinates and their alignment to a common reference.

mod align;
mod cholesky;
mod dense;
mod eigen;
mod export;
mod laplacian;

use serde::{Deserialize, Serialize};

pub use align::{align_to_reference, align_with, AlignOptions, Correspondence};
pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use dense::symmetric_eigen;
pub use eigen::{smallest_eigenpairs, smallest_eigenpairs_with, EigenOptions, SolverKind};
pub use export::{load_embedding, save_embedding, EmbeddingHeader, EMBEDDING_FORMAT_VERSION};
pub use laplacian::{build_laplacian, Laplacian};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kdtree::{knn_brute, KdTree};
use crate::mesh::{build_weighted_graph, SurfaceMesh, WeightedGraph};

/// Node counts at or above this use a k-d tree for nearest-neighbour queries.
pub const TREE_THRESHOLD: usize = 1000;

/// Node coordinates `Û = U Λ^{-1/2}`, optionally aligned as `Ũ = Û R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    pub coords: Tensor,
    pub eigenvalues: Vec<f64>,
    pub d: usize,
    pub aligned: bool,
    pub transform: Tensor,
}

impl SpectralEmbedding {
    pub fn new_unaligned(coords: Tensor, eigenvalues: Vec<f64>) -> Self {
        let d = coords.cols();
        SpectralEmbedding {
            coords,
            eigenvalues,
            d,
            aligned: false,
            transform: Tensor::identity(d),
        }
    }

    pub fn n(&self) -> usize {
        self.coords.rows()
    }

    /// Marks this embedding as the reference frame (`R = I`).
    pub fn into_reference(mut self) -> Self {
        self.aligned = true;
        self.transform = Tensor::identity(self.d);
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.coords.row(i)
    }

    /// Reorders rows so that new row `i` is old row `perm[i]`.
    pub fn select_rows(&self, perm: &[usize]) -> Self {
        let mut coords = Tensor::zeros(perm.len(), self.d);
        for (i, &p) in perm.iter().enumerate() {
            coords.row_mut(i).copy_from_slice(self.coords.row(p));
        }
        SpectralEmbedding { coords, ..self.clone() }
    }
}

/// Weighted graph, Laplacian and unaligned embedding of a mesh.
pub fn embed_mesh(mesh: &SurfaceMesh, epsilon: f64, opts: &EigenOptions) -> Result<(WeightedGraph, SpectralEmbedding)> {
    let g = build_weighted_graph(mesh, epsilon)?;
    let emb = smallest_eigenpairs_with(&build_laplacian(&g)?, opts)?;
    Ok((g, emb))
}

/// For each node, its `k` nearest distinct nodes in embedding space (ties to
/// the smaller index), followed by the node itself.
pub fn knn_in_embedding(emb: &SpectralEmbedding, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = emb.n();
    if k >= n {
        return Err(Error::Argument(format!("k = {k} must be below the node count {n}")));
    }
    let pts = emb.coords.data();
    let d = emb.d;
    let tree = (n >= TREE_THRESHOLD).then(|| KdTree::new(pts, d));
    Ok((0..n)
        .map(|i| {
            let q = &pts[i * d..(i + 1) * d];
            let found = match &tree {
                Some(t) => t.knn(q, k, Some(i)),
                None => knn_brute(pts, d, q, k, Some(i)),
            };
            let mut out: Vec<usize> = found.into_iter().map(|nb| nb.index).collect();
            out.push(i);
            out
        })
        .collect())
}

/// `ũ_j − ũ_i` in the aligned embedding.
pub fn relative_coords(emb: &SpectralEmbedding, i: usize, j: usize) -> Result<Vec<f64>> {
    if !emb.aligned {
        return Err(Error::State("relative coordinates need an aligned embedding".into()));
    }
    let n = emb.n();
    if i >= n || j >= n {
        return Err(Error::Argument(format!("node pair ({i}, {j}) outside {n} nodes")));
    }
    Ok(emb.row(j).iter().zip(emb.row(i)).map(|(a, b)| a - b).collect())
}
