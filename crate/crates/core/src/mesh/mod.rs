//! Surface meshes, their weighted edge graphs, synthetic generators and file I/O.

mod graph;
mod io;
mod manifest;
mod subsample;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

pub use graph::{build_weighted_graph, check_connected, WeightedGraph, DEFAULT_EPSILON};
pub use io::{load_mesh, save_mesh, sidecar_path};
pub use manifest::{DatasetManifest, ManifestEntry, Split, SplitRatios, Target, TaskKind};
pub use subsample::{subsample_indices, subsample_mesh};
pub use synth::{
    gen_labeled_dataset, gen_labeled_meshes, gen_synthetic_mesh, DatasetSpec, LabeledMesh, MeshKind, SyntheticTask, FIELD_NAMES,
    REGION_FIELD,
};

use crate::error::{Error, Result};

/// Triangulated surface with per-vertex scalar fields.
///
/// `edges` holds extra undirected edges that are not implied by any face;
/// meshes rebuilt by [`subsample_mesh`] carry their connectivity there.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub fields: Vec<(String, Vec<f64>)>,
    pub parcels: Option<Vec<usize>>,
    pub meta: BTreeMap<String, String>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Self {
        SurfaceMesh {
            vertices,
            faces,
            ..Default::default()
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Inserts or replaces a field, keeping first-insertion order.
    pub fn set_field(&mut self, name: &str, values: Vec<f64>) {
        match self.fields.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => *v = values,
            None => self.fields.push((name.to_string(), values)),
        }
    }

    /// Checks index ranges, degenerate faces and field lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= n) {
                return Err(Error::Argument(format!("face {f} has an index outside [0, {n})")));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::Argument(format!("face {f} is degenerate: {face:?}")));
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            if edge.iter().any(|&i| i >= n) || edge[0] == edge[1] {
                return Err(Error::Argument(format!("edge {e} is invalid: {edge:?}")));
            }
        }
        for (name, values) in &self.fields {
            if values.len() != n {
                return Err(Error::Argument(format!(
                    "field {name} has {} values for {n} vertices",
                    values.len()
                )));
            }
        }
        if let Some(p) = &self.parcels {
            if p.len() != n {
                return Err(Error::Argument(format!("parcels has {} values for {n} vertices", p.len())));
            }
        }
        if self.vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Argument("non-finite vertex coordinate".into()));
        }
        Ok(())
    }

    /// Sorted undirected edges `(i, j)` with `i < j` from faces and explicit edges.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                set.insert((a.min(b), a.max(b)));
            }
        }
        for e in &self.edges {
            set.insert((e[0].min(e[1]), e[0].max(e[1])));
        }
        set.into_iter().collect()
    }

    /// Number of faces incident to each undirected face edge.
    pub fn edge_face_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn is_watertight(&self) -> bool {
        self.edge_face_counts().values().all(|&c| c == 2)
    }
}
