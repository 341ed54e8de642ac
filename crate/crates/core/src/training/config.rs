use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::adam::AdamHyper;
use crate::error::{Error, Result};
use crate::mesh::SplitRatios;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Overrides the model's regularization weight when set.
    pub alpha: Option<f64>,
    pub seed: u64,
    /// Used when generating datasets; existing manifests keep their splits.
    pub split_ratios: SplitRatios,
    /// Stop after this many evaluations without a better validation loss.
    pub early_stop_patience: Option<usize>,
    /// Evaluate every this many epochs; the last epoch is always evaluated.
    pub eval_every: usize,
    /// Where the last finite state is written if training diverges.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            alpha: None,
            seed: 0,
            split_ratios: SplitRatios::default(),
            early_stop_patience: None,
            eval_every: 1,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.split_ratios.validate()?;
        if self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Argument("epochs and eval_every must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("invalid learning rate {}", self.learning_rate)));
        }
        let betas = [self.adam_beta1, self.adam_beta2];
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) || !(self.adam_eps > 0.0) {
            return Err(Error::Argument("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::Argument(format!("invalid alpha {a}")));
            }
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::Argument("early stopping patience must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}
