use crate::error::{Error, Result};
use crate::mesh::{load_mesh, DatasetManifest, LabeledMesh, Split, SurfaceMesh, Target, TaskKind, WeightedGraph};
use crate::model::{MeshInput, ModelConfig};
use crate::spectral::{align_with, embed_mesh, AlignOptions, EigenOptions, SpectralEmbedding};

/// Settings for embedding and aligning a collection of meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedOptions {
    pub epsilon: f64,
    pub eigen: EigenOptions,
    pub align_iters: usize,
    pub align_tol: f64,
    /// Restrict alignment transforms to orthogonal matrices.
    pub align_orthogonal: bool,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            epsilon: crate::mesh::DEFAULT_EPSILON,
            eigen: EigenOptions::default(),
            align_iters: 50,
            align_tol: 1e-9,
            align_orthogonal: false,
        }
    }
}

impl EmbedOptions {
    pub fn align(&self) -> AlignOptions {
        AlignOptions {
            max_iters: self.align_iters,
            tol: self.align_tol,
            orthogonal: self.align_orthogonal,
            ..Default::default()
        }
    }
}

/// A mesh with its graph and aligned embedding.
#[derive(Clone, Debug)]
pub struct EmbeddedMesh {
    pub name: String,
    pub mesh: SurfaceMesh,
    pub graph: WeightedGraph,
    pub embedding: SpectralEmbedding,
    pub target: Target,
    pub split: Split,
    /// Mean squared nearest-neighbour distance to the reference after alignment.
    pub alignment_residual: f64,
}

/// Labeled meshes sharing one reference frame.
#[derive(Clone, Debug)]
pub struct EmbeddedDataset {
    pub task: TaskKind,
    pub n_outputs: usize,
    pub field_names: Vec<String>,
    pub meshes: Vec<EmbeddedMesh>,
    pub reference: SpectralEmbedding,
}

/// One labeled mesh awaiting embedding.
#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub name: String,
    pub mesh: SurfaceMesh,
    pub target: Target,
    pub split: Split,
}

impl DatasetItem {
    pub fn from_labeled(meshes: Vec<LabeledMesh>) -> Vec<DatasetItem> {
        meshes
            .into_iter()
            .enumerate()
            .map(|(i, lm)| DatasetItem {
                name: format!("mesh_{i:04}"),
                mesh: lm.mesh,
                target: lm.target,
                split: lm.split,
            })
            .collect()
    }
}

impl EmbeddedDataset {
    /// Embeds every mesh and aligns it to `reference`, or to the first
    /// training mesh when no reference is given.
    pub fn new(
        items: Vec<DatasetItem>,
        task: TaskKind,
        n_outputs: usize,
        field_names: Vec<String>,
        reference: Option<SpectralEmbedding>,
        opts: &EmbedOptions,
    ) -> Result<Self> {
        let mut raw = Vec::with_capacity(items.len());
        for item in &items {
            let (graph, emb) = embed_mesh(&item.mesh, opts.epsilon, &opts.eigen)?;
            raw.push((graph, emb));
        }
        let (reference, ref_index) = match reference {
            Some(r) => (r, None),
            None => {
                let i = items
                    .iter()
                    .position(|it| it.split == Split::Train)
                    .ok_or_else(|| Error::Argument("no training mesh to serve as the reference".into()))?;
                (raw[i].1.clone().into_reference(), Some(i))
            }
        };
        let mut meshes = Vec::with_capacity(items.len());
        for (idx, (item, (graph, emb))) in items.into_iter().zip(raw).enumerate() {
            let (embedding, residual) = if Some(idx) == ref_index {
                (reference.clone(), 0.0)
            } else {
                let (aligned, corr) = align_with(&emb, &reference, &opts.align())?;
                (aligned, corr.residual)
            };
            meshes.push(EmbeddedMesh {
                name: item.name,
                mesh: item.mesh,
                graph,
                embedding,
                target: item.target,
                split: item.split,
                alignment_residual: residual,
            });
        }
        Ok(EmbeddedDataset {
            task,
            n_outputs,
            field_names,
            meshes,
            reference,
        })
    }

    /// Loads and embeds every mesh listed in `manifest`.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        reference: Option<SpectralEmbedding>,
        opts: &EmbedOptions,
    ) -> Result<Self> {
        manifest.validate()?;
        let mut items = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            items.push(DatasetItem {
                name: entry.path.clone(),
                mesh: load_mesh(&manifest.resolve(entry))?,
                target: entry.target.clone(),
                split: entry.split,
            });
        }
        Self::new(
            items,
            manifest.task,
            manifest.n_outputs,
            manifest.field_names.clone(),
            reference,
            opts,
        )
    }
}

/// Model inputs for every mesh of an embedded dataset.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub task: TaskKind,
    pub n_outputs: usize,
    pub names: Vec<String>,
    pub inputs: Vec<MeshInput>,
    pub targets: Vec<Target>,
    pub splits: Vec<Split>,
    pub reference: SpectralEmbedding,
}

impl PreparedDataset {
    pub fn new(data: &EmbeddedDataset, config: &ModelConfig) -> Result<Self> {
        if config.task != data.task || config.n_outputs != data.n_outputs {
            return Err(Error::Argument(format!(
                "model predicts {} {:?} outputs, dataset has {} {:?} targets",
                config.n_outputs, config.task, data.n_outputs, data.task
            )));
        }
        let mut inputs = Vec::with_capacity(data.meshes.len());
        for m in &data.meshes {
            inputs.push(MeshInput::new(&m.mesh, m.graph.clone(), &m.embedding, &data.field_names, config)?);
        }
        Ok(PreparedDataset {
            task: data.task,
            n_outputs: data.n_outputs,
            names: data.meshes.iter().map(|m| m.name.clone()).collect(),
            inputs,
            targets: data.meshes.iter().map(|m| m.target.clone()).collect(),
            splits: data.meshes.iter().map(|m| m.split).collect(),
            reference: data.reference.clone(),
        })
    }

    /// Indices of the meshes in `split`, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.splits.len()).filter(|&i| self.splits[i] == split).collect()
    }
}
