use std::fs;
use std::path::Path;

use meshpool::mesh::DatasetSpec;
use meshpool::model::{ModelConfig, PoolingMode};
use meshpool::training::{EmbedOptions, ExperimentConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Embedding settings of the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSection {
    pub d: usize,
    pub epsilon: f64,
    pub align_iters: usize,
    pub align_tol: f64,
    pub align_orthogonal: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let e = EmbedOptions::default();
        EmbedSection {
            d: e.eigen.d,
            epsilon: e.epsilon,
            align_iters: e.align_iters,
            align_tol: e.align_tol,
            align_orthogonal: e.align_orthogonal,
        }
    }
}

impl EmbedSection {
    pub fn options(&self) -> EmbedOptions {
        let mut o = EmbedOptions {
            epsilon: self.epsilon,
            align_iters: self.align_iters,
            align_tol: self.align_tol,
            align_orthogonal: self.align_orthogonal,
            ..Default::default()
        };
        o.eigen.d = self.d;
        o
    }
}

/// Settings that only experiments read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    pub poolings: Vec<PoolingMode>,
    pub budgets: Vec<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        ExperimentSection {
            seeds: e.seeds,
            poolings: e.poolings,
            budgets: e.budgets,
        }
    }
}

/// The TOML configuration file: every section and key is optional.
///
/// ```toml
/// [dataset]     # task, count, n_min, n_max, seed, delta, noise, n_parcels, ratios
/// [embed]       # d, epsilon, align_iters, align_tol
/// [model]       # input_channels, d, block1, block2, fc1_width, kernel, pooling, alpha, ...
/// [train]       # epochs, learning_rate, adam_beta1, adam_beta2, adam_eps, alpha, seed, ...
/// [experiment]  # seeds, poolings, budgets
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub dataset: DatasetSpec,
    pub embed: EmbedSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentSection,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {}", path.display(), e.message())))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
            seeds: self.experiment.seeds.clone(),
            poolings: self.experiment.poolings.clone(),
            budgets: self.experiment.budgets.clone(),
        }
    }
}
