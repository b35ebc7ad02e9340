//! Connection-mode and feature ablations, each a delta on a base
//! configuration, trained under an identical seed and budget.

use std::thread;

use crate::data::{SentencePair, Vocab};
use crate::error::{DrcnError, Result};
use crate::model::{ConnectionMode, DrcnModel, ModelConfig};
use crate::rng::DrcnRng;

use super::{evaluate, train, TrainConfig};

/// The ablation rows: the full model, feature removals, granular dense
/// removals, residual replacements, and plain stacking with/without
/// attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoAe,
    NoTrainableEmb,
    NoFixedEmb,
    NoDenseAttn,
    NoDenseRec,
    NoDenseBoth,
    ResidualBoth,
    ResidualBothNoEmbDense,
    PlainAttn,
    PlainNoAttn,
}

impl Variant {
    pub fn all() -> Vec<Variant> {
        use Variant::*;
        vec![
            Full,
            NoAe,
            NoTrainableEmb,
            NoFixedEmb,
            NoDenseAttn,
            NoDenseRec,
            NoDenseBoth,
            ResidualBoth,
            ResidualBothNoEmbDense,
            PlainAttn,
            PlainNoAttn,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAe => "no-ae",
            Variant::NoTrainableEmb => "no-etr",
            Variant::NoFixedEmb => "no-efix",
            Variant::NoDenseAttn => "no-dense-attn",
            Variant::NoDenseRec => "no-dense-rec",
            Variant::NoDenseBoth => "no-dense-both",
            Variant::ResidualBoth => "residual",
            Variant::ResidualBothNoEmbDense => "residual-no-emb",
            Variant::PlainAttn => "plain-attn",
            Variant::PlainNoAttn => "plain-noattn",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        let v = match s {
            "full" => Variant::Full,
            "no-ae" | "-ae" => Variant::NoAe,
            "no-etr" | "-etr" => Variant::NoTrainableEmb,
            "no-efix" | "-efix" => Variant::NoFixedEmb,
            "no-dense-attn" => Variant::NoDenseAttn,
            "no-dense-rec" => Variant::NoDenseRec,
            "no-dense-both" => Variant::NoDenseBoth,
            "residual" => Variant::ResidualBoth,
            "residual-no-emb" => Variant::ResidualBothNoEmbDense,
            "plain-attn" => Variant::PlainAttn,
            "plain-noattn" => Variant::PlainNoAttn,
            _ => {
                return Err(DrcnError::Config(format!(
                    "unknown ablation variant {s:?}; known: {}",
                    Variant::all().iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
                )))
            }
        };
        Ok(v)
    }

    /// Apply this variant's delta to a base (full-model) configuration.
    /// Granular history ablations and connection replacements drop the AE so
    /// feature classes stay separable in the carried state.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoAe => cfg.ae_layers.clear(),
            Variant::NoTrainableEmb => cfg.use_trainable_emb = false,
            Variant::NoFixedEmb => cfg.use_fixed_emb = false,
            Variant::NoDenseAttn => {
                cfg.dense_attn_history = false;
                cfg.ae_layers.clear();
            }
            Variant::NoDenseRec => {
                cfg.dense_rec_history = false;
                cfg.ae_layers.clear();
            }
            Variant::NoDenseBoth => {
                cfg.dense_attn_history = false;
                cfg.dense_rec_history = false;
                cfg.ae_layers.clear();
            }
            Variant::ResidualBoth => {
                cfg.connection_mode = ConnectionMode::Residual;
                cfg.dense_emb = true;
                cfg.ae_layers.clear();
            }
            Variant::ResidualBothNoEmbDense => {
                cfg.connection_mode = ConnectionMode::Residual;
                cfg.dense_emb = false;
                cfg.ae_layers.clear();
            }
            Variant::PlainAttn => {
                cfg.connection_mode = ConnectionMode::Plain;
                cfg.use_attention = true;
                cfg.ae_layers.clear();
            }
            Variant::PlainNoAttn => {
                cfg.connection_mode = ConnectionMode::Plain;
                cfg.use_attention = false;
                cfg.ae_layers.clear();
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: &'static str,
    pub accuracy: f64,
    /// Trainable non-embedding parameter count.
    pub params: usize,
}

#[derive(Debug, Clone)]
pub struct DepthRow {
    pub depth: usize,
    pub accuracy: f64,
}

fn train_and_score(
    cfg: ModelConfig,
    train_pairs: &[SentencePair],
    test_pairs: &[SentencePair],
    words: &Vocab,
    chars: &Vocab,
    tc: &TrainConfig,
) -> Result<(f64, usize)> {
    let mut rng = DrcnRng::seed_from(tc.seed);
    let mut model = DrcnModel::init(cfg, words.len(), chars.len(), &mut rng)?;
    train(&mut model, train_pairs, test_pairs, words, chars, tc)?;
    let report = evaluate(&[&model], test_pairs, words, chars, tc.batch_size, tc.max_len)?;
    let (non_emb, _) = model.param_counts();
    Ok((report.accuracy, non_emb))
}

/// Train every variant under the same seed and budget; `jobs` bounds the
/// number of concurrently trained variants (each job is fully isolated).
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    suite: &[Variant],
    base: &ModelConfig,
    train_pairs: &[SentencePair],
    test_pairs: &[SentencePair],
    words: &Vocab,
    chars: &Vocab,
    tc: &TrainConfig,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    if suite.is_empty() {
        return Err(DrcnError::Config("empty ablation suite".into()));
    }
    let jobs = jobs.max(1);
    let mut rows: Vec<Option<AblationRow>> = vec![None; suite.len()];
    for chunk_start in (0..suite.len()).step_by(jobs) {
        let chunk = &suite[chunk_start..(chunk_start + jobs).min(suite.len())];
        let results: Vec<Result<AblationRow>> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&variant| {
                    let cfg = variant.apply(base);
                    scope.spawn(move || {
                        let (accuracy, params) =
                            train_and_score(cfg, train_pairs, test_pairs, words, chars, tc)?;
                        Ok(AblationRow { variant: variant.name(), accuracy, params })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("ablation job panicked")).collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            rows[chunk_start + i] = Some(r?);
        }
    }
    Ok(rows.into_iter().map(|r| r.expect("all variants trained")).collect())
}

/// Accuracy of one variant at stack depths `1..=max_depth`.
#[allow(clippy::too_many_arguments)]
pub fn run_depth_sweep(
    variant: Variant,
    base: &ModelConfig,
    max_depth: usize,
    train_pairs: &[SentencePair],
    test_pairs: &[SentencePair],
    words: &Vocab,
    chars: &Vocab,
    tc: &TrainConfig,
) -> Result<Vec<DepthRow>> {
    let mut rows = Vec::new();
    for depth in 1..=max_depth {
        let mut cfg = variant.apply(base);
        cfg.num_layers = depth;
        cfg.ae_layers.retain(|&l| l < depth);
        let (accuracy, _) = train_and_score(cfg, train_pairs, test_pairs, words, chars, tc)?;
        rows.push(DepthRow { depth, accuracy });
    }
    Ok(rows)
}
