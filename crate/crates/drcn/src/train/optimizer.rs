//! RMSProp with L2 decay on non-embedding weights and global-norm clipping.

use std::collections::BTreeMap;

use crate::error::{DrcnError, Result};
use crate::params::{GradMap, ParamSet};

use super::TrainConfig;

/// Per-parameter running mean-square accumulators.
#[derive(Debug, Clone, Default)]
pub struct RmspropState {
    acc: BTreeMap<String, Vec<f64>>,
    pub step: usize,
}

impl RmspropState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn acc_of(&self, name: &str) -> Option<&[f64]> {
        self.acc.get(name).map(|v| v.as_slice())
    }
}

/// Scale all gradients so their joint L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut GradMap, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.values() {
        for &v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One RMSProp update:
/// `acc ← ρ·acc + (1−ρ)·g²; θ ← θ − lr·g/(√acc+ε)`,
/// with `g ← g + λθ` applied first for parameters subject to L2 (everything
/// except embedding matrices). Frozen leading coordinates (PAD rows) and
/// non-trainable parameters are left untouched.
pub fn rmsprop_step(
    params: &mut ParamSet,
    grads: &GradMap,
    state: &mut RmspropState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    for (name, param) in params.iter_mut() {
        if !param.trainable {
            continue;
        }
        let g = grads.get(name).ok_or_else(|| {
            DrcnError::Config(format!("no gradient supplied for parameter {name}"))
        })?;
        if g.len() != param.data.len() {
            return Err(DrcnError::Config(format!(
                "gradient size {} vs parameter size {} for {name}",
                g.len(),
                param.data.len()
            )));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(DrcnError::Numeric(format!(
                "non-finite gradient {bad} for parameter {name} at step {}",
                state.step
            )));
        }
        let acc = state
            .acc
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; param.data.len()]);
        let decay = if param.no_decay { 0.0 } else { cfg.l2 };
        for i in param.frozen_prefix..param.data.len() {
            let gi = g[i] + decay * param.data[i];
            acc[i] = cfg.rho * acc[i] + (1.0 - cfg.rho) * gi * gi;
            param.data[i] -= lr * gi / (acc[i].sqrt() + cfg.eps);
        }
    }
    state.step += 1;
    Ok(())
}
