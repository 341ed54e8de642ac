use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_weighted_graph, check_connected, SurfaceMesh, WeightedGraph, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;

const INITIAL_K: usize = 5;

/// Keeps a seeded uniform subset of `target_n` vertices and rebuilds the
/// connectivity as a symmetric k-nearest-neighbour graph in 3D, growing `k`
/// from 5 until the graph is connected. Kept vertices stay in source order.
pub fn subsample_mesh(mesh: &SurfaceMesh, target_n: usize, seed: u64) -> Result<SurfaceMesh> {
    let n = mesh.n_vertices();
    if target_n < 3 || target_n > n {
        return Err(Error::Argument(format!("target_n = {target_n} must be in [3, {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep: Vec<usize> = order[..target_n].to_vec();
    keep.sort_unstable();

    let vertices: Vec<[f64; 3]> = keep.iter().map(|&i| mesh.vertices[i]).collect();
    let flat: Vec<f64> = vertices.iter().flatten().copied().collect();
    let tree = KdTree::new(&flat, 3);
    let mut k = INITIAL_K.min(target_n - 1);
    let edges = loop {
        let mut set = BTreeSet::new();
        for i in 0..target_n {
            for nb in tree.knn(&flat[3 * i..3 * i + 3], k, Some(i)) {
                set.insert((i.min(nb.index), i.max(nb.index)));
            }
        }
        let edges: Vec<[usize; 2]> = set.into_iter().map(|(a, b)| [a, b]).collect();
        let probe = SurfaceMesh {
            vertices: vertices.clone(),
            edges: edges.clone(),
            ..Default::default()
        };
        let g = WeightedGraph::from_mesh_unchecked(&probe, DEFAULT_EPSILON)?;
        if check_connected(&g) || k + 1 >= target_n {
            break edges;
        }
        k += 1;
    };

    let mut out = SurfaceMesh {
        vertices,
        faces: Vec::new(),
        edges,
        fields: mesh
            .fields
            .iter()
            .map(|(name, v)| (name.clone(), keep.iter().map(|&i| v[i]).collect()))
            .collect(),
        parcels: mesh.parcels.as_ref().map(|p| keep.iter().map(|&i| p[i]).collect()),
        meta: mesh.meta.clone(),
    };
    out.meta.insert("subsampled_from".into(), n.to_string());
    build_weighted_graph(&out, DEFAULT_EPSILON)?;
    Ok(out)
}

/// Indices of the source vertices kept by [`subsample_mesh`] with the same arguments.
pub fn subsample_indices(n: usize, target_n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep: Vec<usize> = order[..target_n.min(n)].to_vec();
    keep.sort_unstable();
    keep
}
