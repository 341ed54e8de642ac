use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::KernelSpec;
use crate::mesh::TaskKind;

/// How node features are reduced to a fixed-size vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Two convolution + soft-assignment pooling blocks.
    Learnable,
    /// Two convolutions on the input graph, then the column mean.
    GlobalAverage,
    /// Two convolutions on the input graph, then per-parcel means.
    FixedParcellation,
    /// Hard k-means clusters of the embedding in place of the learned assignment.
    SpectralKmeans,
}

impl std::str::FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learnable" => Ok(PoolingMode::Learnable),
            "global_average" => Ok(PoolingMode::GlobalAverage),
            "fixed_parcellation" => Ok(PoolingMode::FixedParcellation),
            "spectral_kmeans" => Ok(PoolingMode::SpectralKmeans),
            _ => Err(Error::Argument(format!("unknown pooling mode {s:?}"))),
        }
    }
}

impl PoolingMode {
    pub fn name(&self) -> &'static str {
        match self {
            PoolingMode::Learnable => "learnable",
            PoolingMode::GlobalAverage => "global_average",
            PoolingMode::FixedParcellation => "fixed_parcellation",
            PoolingMode::SpectralKmeans => "spectral_kmeans",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub feature_channels: usize,
    pub clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Spectral dimension plus the number of scalar input fields.
    pub input_channels: usize,
    /// Spectral embedding dimension.
    pub d: usize,
    pub block1: BlockConfig,
    pub block2: BlockConfig,
    pub fc1_width: usize,
    pub n_outputs: usize,
    pub kernel: KernelSpec,
    pub k_neighbors: usize,
    /// Weight of the Laplacian regularizer on the first assignment.
    pub alpha: f64,
    pub task: TaskKind,
    pub pooling: PoolingMode,
    /// Convolutions in each cluster path; all but the last use the block's feature width.
    pub cluster_depth: usize,
    pub leaky_slope: f64,
    /// Parcel count for fixed-parcellation pooling.
    pub n_parcels: usize,
    pub kmeans_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 5,
            d: 3,
            block1: BlockConfig {
                feature_channels: 8,
                clusters: 16,
            },
            block2: BlockConfig {
                feature_channels: 16,
                clusters: 1,
            },
            fc1_width: 8,
            n_outputs: 2,
            kernel: KernelSpec::default(),
            k_neighbors: 5,
            alpha: 1e-6,
            task: TaskKind::Classify,
            pooling: PoolingMode::Learnable,
            cluster_depth: 1,
            leaky_slope: 0.01,
            n_parcels: 8,
            kmeans_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("input_channels", self.input_channels),
            ("d", self.d),
            ("block1.feature_channels", self.block1.feature_channels),
            ("block1.clusters", self.block1.clusters),
            ("block2.feature_channels", self.block2.feature_channels),
            ("block2.clusters", self.block2.clusters),
            ("fc1_width", self.fc1_width),
            ("n_outputs", self.n_outputs),
            ("k_neighbors", self.k_neighbors),
            ("cluster_depth", self.cluster_depth),
            ("n_parcels", self.n_parcels),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(Error::Argument(format!("{name} must be at least 1")));
            }
        }
        if self.input_channels <= self.d {
            return Err(Error::Argument(format!(
                "input_channels {} leaves no room for fields after {} spectral coordinates",
                self.input_channels, self.d
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Argument(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.task == TaskKind::Classify && self.n_outputs < 2 {
            return Err(Error::Argument("classification needs at least 2 outputs".into()));
        }
        self.kernel.validate()
    }

    /// Width of the vector entering the first fully connected layer.
    pub fn fc_input_width(&self) -> usize {
        match self.pooling {
            PoolingMode::Learnable | PoolingMode::SpectralKmeans => self.block2.clusters * self.block2.feature_channels,
            PoolingMode::GlobalAverage => self.block2.feature_channels,
            PoolingMode::FixedParcellation => self.n_parcels * self.block2.feature_channels,
        }
    }

    pub fn n_fields(&self) -> usize {
        self.input_channels - self.d
    }
}
