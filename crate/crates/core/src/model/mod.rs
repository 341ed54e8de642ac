//! Two-block convolution and pooling network, its losses and baseline pooling variants.

mod config;
mod forward;
mod input;
mod state;

pub use config::{BlockConfig, ModelConfig, PoolingMode};
pub use forward::{
    baseline_fixed_parcellation, baseline_global_average, baseline_spectral_kmeans, forward, loss, Diagnostics,
    ForwardOutput, LossTerms,
};
pub use input::{fit_domains, spectral_kmeans_labels, MeshInput};
pub use state::{ModelState, ParamVars, CHECKPOINT_FORMAT_VERSION};
