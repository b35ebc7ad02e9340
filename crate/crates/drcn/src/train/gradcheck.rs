//! Whole-model gradient verification on micro configurations.
//!
//! The fixture keeps the objective differentiable at the evaluation point:
//! premise and hypothesis vocabularies are disjoint (shared tokens make
//! pooled features of the two sides exactly equal, parking the `|p−q|` term
//! on its kink) and the binary match flag is off for the same reason.

use crate::data::{make_batches, tokenize, Batch, SentencePair, Vocab};
use crate::error::{DrcnError, Result};
use crate::model::{ConnectionMode, DrcnModel, ForwardOptions, Mode, ModelConfig};
use crate::params::ParamSet;
use crate::rng::DrcnRng;
use crate::tensor::{grad_check, GradCheckReport, TensorError};

pub const MICRO_GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Short sentence pairs over ~10 words; P and Q draw from disjoint sets.
pub fn micro_fixture_pairs() -> Vec<SentencePair> {
    let raw = [
        ("red boat drifts", "owls hoot loudly", 0u32),
        ("green truck", "three owls fly", 1),
        ("boat green red", "loudly three hoot", 2),
        ("truck drifts", "fly owls", 1),
    ];
    raw.iter()
        .map(|(p, h, l)| SentencePair {
            premise: tokenize(p),
            hypothesis: tokenize(h),
            label: *l,
            group_id: None,
        })
        .collect()
}

fn fixture() -> (Vec<SentencePair>, Vocab, Vocab) {
    let pairs = micro_fixture_pairs();
    let words = Vocab::build_words(&pairs);
    let chars = Vocab::build_chars(&pairs);
    (pairs, words, chars)
}

/// Check every trainable parameter of a micro model against central finite
/// differences of the full training objective.
pub fn run_micro_gradcheck(
    mode: ConnectionMode,
    attention: bool,
) -> Result<GradCheckReport> {
    run_micro_gradcheck_impl(mode, attention, false)
}

/// Negative control: the analytic gradients of one parameter are scaled by
/// 1.5 before comparison, which must push the reported error past tolerance.
pub fn run_micro_gradcheck_corrupted() -> Result<GradCheckReport> {
    run_micro_gradcheck_impl(ConnectionMode::Dense, true, true)
}

fn run_micro_gradcheck_impl(
    mode: ConnectionMode,
    attention: bool,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let (pairs, words, chars) = fixture();
    let mut cfg = ModelConfig::micro(mode, attention);
    cfg.use_match_flag = false;
    let mut rng = DrcnRng::seed_from(17);
    let model = DrcnModel::init(cfg.clone(), words.len(), chars.len(), &mut rng)?;
    let batch: Batch = make_batches(
        &pairs,
        pairs.len(),
        8,
        cfg.char_max_word_len,
        &words,
        &chars,
        None,
    )
    .remove(0);
    let (word_rows, char_rows) = (model.word_rows, model.char_rows);
    let mut params: ParamSet = model.params.clone();
    let report = grad_check(
        &mut params,
        |ps, want| {
            let m = DrcnModel { config: cfg.clone(), params: ps.clone(), word_rows, char_rows };
            let opts = ForwardOptions {
                mode: Mode::Train,
                collect_diagnostics: false,
                collect_transitions: false,
            };
            let mut rng = DrcnRng::seed_from(0); // micro keeps are 1.0: no dropout draws
            let pass = m
                .forward_batch(&batch, &opts, Some(&mut rng))
                .map_err(|e| TensorError::Argument(format!("forward failed: {e}")))?;
            let v = pass.loss_value();
            if want {
                let mut pass = pass;
                pass.tape.backward(pass.loss)?;
                let mut grads = pass.tape.into_grads();
                if corrupt {
                    if let Some(g) = grads.get_mut("fc1.w") {
                        for v in g.iter_mut() {
                            *v *= 1.5;
                        }
                    }
                }
                Ok((v, Some(grads)))
            } else {
                Ok((v, None))
            }
        },
        1e-5,
    )
    .map_err(DrcnError::from)?;
    Ok(report)
}

