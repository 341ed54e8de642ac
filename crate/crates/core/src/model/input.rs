use std::sync::{Arc, OnceLock};

use super::config::{ModelConfig, PoolingMode};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::layers::{precompute_basis, KernelBasis, KernelDomain, KernelSpec, Neighborhoods, PseudoCoords};
use crate::mesh::{SurfaceMesh, WeightedGraph};
use crate::spectral::{knn_in_embedding, SpectralEmbedding};

/// Everything about one mesh that stays fixed during training.
#[derive(Clone, Debug)]
pub struct MeshInput {
    /// `N × F`: aligned spectral coordinates followed by the scalar fields.
    pub features: Tensor,
    /// Aligned spectral coordinates, `N × d`.
    pub coords: Tensor,
    pub graph: WeightedGraph,
    pub neighborhoods: Neighborhoods,
    /// `u_ij = ũ_j − ũ_i`, one row per neighbourhood edge.
    pub rel_coords: Tensor,
    pub parcels: Option<Vec<usize>>,
    /// Static first-level clusters for spectral k-means pooling.
    pub kmeans_labels: Option<Vec<usize>>,
    basis: OnceLock<Arc<KernelBasis>>,
}

impl MeshInput {
    pub fn new(
        mesh: &SurfaceMesh,
        graph: WeightedGraph,
        emb: &SpectralEmbedding,
        field_names: &[String],
        config: &ModelConfig,
    ) -> Result<Self> {
        let n = mesh.n_vertices();
        if emb.n() != n {
            return Err(Error::Argument(format!("embedding has {} rows for {n} vertices", emb.n())));
        }
        let mut fields = Vec::with_capacity(field_names.len());
        for name in field_names {
            let f = mesh
                .field(name)
                .ok_or_else(|| Error::Argument(format!("mesh has no field {name:?}")))?;
            fields.push(f.to_vec());
        }
        Self::from_parts(graph, emb, &fields, mesh.parcels.clone(), config)
    }

    /// Builds the input from raw columns; `fields[f][i]` is field `f` at node `i`.
    pub fn from_parts(
        graph: WeightedGraph,
        emb: &SpectralEmbedding,
        fields: &[Vec<f64>],
        parcels: Option<Vec<usize>>,
        config: &ModelConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !emb.aligned {
            return Err(Error::State("model input needs an aligned embedding".into()));
        }
        let n = emb.n();
        let d = emb.d;
        if d != config.d {
            return Err(Error::Argument(format!("embedding dimension {d}, model expects {}", config.d)));
        }
        if graph.n() != n {
            return Err(Error::Argument(format!("graph has {} nodes, embedding {n}", graph.n())));
        }
        if fields.len() != config.n_fields() {
            return Err(Error::Argument(format!(
                "{} input fields given, model expects {}",
                fields.len(),
                config.n_fields()
            )));
        }
        if n < config.k_neighbors + 1 {
            return Err(Error::Argument(format!(
                "{n} nodes is too few for {} neighbours",
                config.k_neighbors
            )));
        }
        let f_total = d + fields.len();
        let mut features = Tensor::zeros(n, f_total);
        for i in 0..n {
            let row = features.row_mut(i);
            row[..d].copy_from_slice(emb.row(i));
            for (f, col) in fields.iter().enumerate() {
                if col.len() != n {
                    return Err(Error::Argument(format!("field {f} has {} values for {n} nodes", col.len())));
                }
                row[d + f] = col[i];
            }
        }
        let lists = knn_in_embedding(emb, config.k_neighbors)?;
        let neighborhoods = Neighborhoods::from_lists(&lists);
        let mut rel = Vec::with_capacity(neighborhoods.n_edges() * d);
        for (i, j) in neighborhoods.edges() {
            for c in 0..d {
                rel.push(emb.coords.get(j, c) - emb.coords.get(i, c));
            }
        }
        let rel_coords = Tensor::from_vec(neighborhoods.n_edges(), d, rel)?;
        if config.pooling == PoolingMode::FixedParcellation {
            match &parcels {
                None => return Err(Error::Argument("fixed-parcellation pooling needs parcels".into())),
                Some(p) => {
                    if p.len() != n {
                        return Err(Error::Argument(format!("{} parcel labels for {n} nodes", p.len())));
                    }
                    if let Some(&bad) = p.iter().find(|&&l| l >= config.n_parcels) {
                        return Err(Error::Argument(format!(
                            "parcel label {bad} outside {} parcels",
                            config.n_parcels
                        )));
                    }
                }
            }
        }
        let kmeans_labels = if config.pooling == PoolingMode::SpectralKmeans {
            Some(spectral_kmeans_labels(&emb.coords, config.block1.clusters, config.kmeans_seed)?)
        } else {
            None
        };
        Ok(MeshInput {
            features,
            coords: emb.coords.clone(),
            graph,
            neighborhoods,
            rel_coords,
            parcels,
            kmeans_labels,
            basis: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    /// Pseudo-coordinates of the first-block neighbourhood edges.
    ///
    /// B-spline kernel values are evaluated once and cached for the first
    /// domain seen.
    pub fn block1_coords(&self, kernel: &KernelSpec, domain: &KernelDomain) -> Result<PseudoCoords> {
        if let KernelSpec::Gaussian { .. } = kernel {
            return Ok(PseudoCoords::Edges(self.rel_coords.clone()));
        }
        if let Some(b) = self.basis.get() {
            if b.matches(kernel, domain) {
                return Ok(PseudoCoords::Basis(b.clone()));
            }
            return Ok(PseudoCoords::Basis(Arc::new(precompute_basis(&self.rel_coords, kernel, domain)?)));
        }
        let b = Arc::new(precompute_basis(&self.rel_coords, kernel, domain)?);
        Ok(PseudoCoords::Basis(self.basis.get_or_init(|| b).clone()))
    }
}

/// Seeded k-means of the embedding rows into `c` clusters.
pub fn spectral_kmeans_labels(coords: &Tensor, c: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(kmeans(coords.data(), coords.cols(), &KMeansConfig::new(c, seed))?.labels)
}

/// Kernel domains for the two blocks, fitted on training inputs.
///
/// The first covers every neighbourhood offset; the second is `±span` of the
/// absolute coordinates, which bounds offsets between pooled coordinates.
pub fn fit_domains(inputs: &[&MeshInput]) -> Result<(KernelDomain, KernelDomain)> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Argument("no training meshes to fit kernel domains".into()))?;
    let d = first.coords.cols();
    let mut rlo = vec![f64::INFINITY; d];
    let mut rhi = vec![f64::NEG_INFINITY; d];
    let mut alo = vec![f64::INFINITY; d];
    let mut ahi = vec![f64::NEG_INFINITY; d];
    for m in inputs {
        for (t, lo, hi) in [(&m.rel_coords, &mut rlo, &mut rhi), (&m.coords, &mut alo, &mut ahi)] {
            for r in 0..t.rows() {
                for c in 0..d {
                    lo[c] = lo[c].min(t.get(r, c));
                    hi[c] = hi[c].max(t.get(r, c));
                }
            }
        }
    }
    for c in 0..d {
        if !(rhi[c] > rlo[c]) {
            let mid = 0.5 * (rhi[c] + rlo[c]);
            rlo[c] = mid - 0.5;
            rhi[c] = mid + 0.5;
        }
    }
    let span: Vec<f64> = (0..d).map(|c| (ahi[c] - alo[c]).max(1e-6)).collect();
    Ok((KernelDomain::new(rlo, rhi)?, KernelDomain::symmetric(&span)?))
}
