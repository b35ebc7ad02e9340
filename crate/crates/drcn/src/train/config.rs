//! Optimization hyperparameters.

use crate::error::{DrcnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr: f64,
    /// Multiplied into the learning rate when dev accuracy fails to improve.
    pub lr_decay: f64,
    /// RMSProp squared-gradient decay.
    pub rho: f64,
    /// RMSProp denominator guard.
    pub eps: f64,
    /// L2 coefficient for every weight except embedding matrices.
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global-norm gradient clip; `None` disables.
    pub clip_norm: Option<f64>,
    /// Sentence truncation length (task dependent: 35 SNLI, 55 MultiNLI,
    /// 25 Quora, 50 TrecQA).
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            lr_decay: 0.85,
            rho: 0.9,
            eps: 1e-8,
            l2: 1e-6,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed: 1,
            clip_norm: Some(5.0),
            max_len: 35,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(DrcnError::Config("lr must be positive".into()));
        }
        if !(0.0 < self.lr_decay && self.lr_decay < 1.0) {
            return Err(DrcnError::Config("lr_decay must lie in (0,1)".into()));
        }
        if self.l2 < 0.0 {
            return Err(DrcnError::Config("l2 must be nonnegative".into()));
        }
        if !(0.0 < self.rho && self.rho < 1.0) {
            return Err(DrcnError::Config("rho must lie in (0,1)".into()));
        }
        if self.batch_size < 1 || self.max_epochs < 1 || self.max_len < 1 {
            return Err(DrcnError::Config("batch_size/max_epochs/max_len must be >= 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 {
                return Err(DrcnError::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}
