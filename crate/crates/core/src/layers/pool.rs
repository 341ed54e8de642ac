//! Pooling with a soft cluster assignment `S` (`N × C`, rows summing to 1).

use std::sync::Arc;

use super::conv::Neighborhoods;
use crate::autodiff::{CustomBackward, Tape, Tensor, Var, EMPTY_MASS};
use crate::error::{Error, Result};
use crate::mesh::WeightedGraph;
use crate::sparse::CsrMatrix;

/// `Y_pool = Sᵀ Y`, an expected sum per cluster.
pub fn pool_features(tape: &mut Tape, s: Var, y: Var) -> Result<Var> {
    tape.matmul_tn(s, y)
}

/// `A_pool = Sᵀ A S`.
pub fn pool_adjacency(tape: &mut Tape, s: Var, a: &Arc<CsrMatrix>) -> Result<Var> {
    if a.n_rows() != s.rows() || a.n_cols() != s.rows() {
        return Err(Error::Shape {
            op: "pool_adjacency",
            left: (a.n_rows(), a.n_cols()),
            right: s.shape(),
        });
    }
    let as_ = tape.spmm(a.clone(), s)?;
    tape.matmul_tn(s, as_)
}

/// Pooled coordinates with the per-cluster mass and the number of empty clusters.
pub struct PooledCoords {
    pub coords: Var,
    pub mass: Var,
    pub empty: usize,
}

/// `coords_c = Σ_i s_ic u_i / Σ_i s_ic`; clusters with mass below `1e-12`
/// get a zero row.
pub fn pool_coords(tape: &mut Tape, s: Var, u: Var) -> Result<PooledCoords> {
    let ones = tape.constant(Tensor::filled(s.rows(), 1, 1.0));
    let mass = tape.matmul_tn(s, ones)?;
    let num = tape.matmul_tn(s, u)?;
    let coords = tape.div_rows(num, mass)?;
    let empty = tape.value(mass).data().iter().filter(|&&m| m < EMPTY_MASS).count();
    if empty > 0 {
        log::warn!("{empty} empty clusters while pooling coordinates");
    }
    Ok(PooledCoords { coords, mass, empty })
}

/// Neighbourhoods of the pooled graph: for every non-empty cluster, the other
/// non-empty clusters it shares adjacency mass with, then itself.
pub fn pooled_neighborhoods(a_pool: &Tensor, mass: &[f64]) -> Neighborhoods {
    let c = a_pool.rows();
    let lists: Vec<Vec<usize>> = (0..c)
        .map(|i| {
            if mass[i] < EMPTY_MASS {
                return Vec::new();
            }
            let mut l: Vec<usize> = (0..c)
                .filter(|&j| j != i && mass[j] >= EMPTY_MASS && a_pool.get(i, j) > 0.0)
                .collect();
            l.push(i);
            l
        })
        .collect();
    Neighborhoods::from_lists(&lists)
}

struct LaplacianRegBackward {
    edges: Vec<(usize, usize, f64)>,
}

/// `Σ_i Σ_j a_ij ‖s_i − s_j‖²` over both orientations of every edge.
pub fn laplacian_reg(tape: &mut Tape, s: Var, graph: &WeightedGraph) -> Result<Var> {
    if s.rows() != graph.n() {
        return Err(Error::Shape {
            op: "laplacian_reg",
            left: s.shape(),
            right: (graph.n(), s.cols()),
        });
    }
    let sv = tape.value(s);
    let mut total = 0.0;
    for &(i, j, w) in graph.edges() {
        let d2: f64 = sv.row(i).iter().zip(sv.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        total += 2.0 * w * d2;
    }
    let op = LaplacianRegBackward {
        edges: graph.edges().to_vec(),
    };
    tape.custom(&[s], Tensor::scalar(total), Box::new(op))
}

impl CustomBackward for LaplacianRegBackward {
    fn backward(&self, g: &Tensor, inputs: &[&Tensor], needs: &[bool]) -> Vec<Option<Tensor>> {
        if !needs[0] {
            return vec![None];
        }
        let s = inputs[0];
        let scale = 4.0 * g.item();
        let mut ds = Tensor::zeros(s.rows(), s.cols());
        for &(i, j, w) in &self.edges {
            for c in 0..s.cols() {
                let t = scale * w * (s.get(i, c) - s.get(j, c));
                ds.set(i, c, ds.get(i, c) + t);
                ds.set(j, c, ds.get(j, c) - t);
            }
        }
        vec![Some(ds)]
    }
}

/// One-hot `N × C` assignment from hard labels.
pub fn one_hot(labels: &[usize], c: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(labels.len(), c);
    for (i, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(Error::Argument(format!("label {l} outside {c} clusters")));
        }
        t.set(i, l, 1.0);
    }
    Ok(t)
}

/// Per-node argmax of an assignment matrix (first maximum on ties).
pub fn hard_labels(s: &Tensor) -> Vec<usize> {
    (0..s.rows())
        .map(|i| {
            let row = s.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
