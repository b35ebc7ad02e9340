//! The optimization loop: RMSProp with plateau decay, best-dev checkpointing
//! and early stopping.

use std::time::Instant;

use crate::data::{make_batches, SentencePair, Vocab};
use crate::error::Result;
use crate::model::{DrcnModel, ForwardOptions};
use crate::params::ParamSet;
use crate::rng::DrcnRng;

use super::{clip_global_norm, evaluate, rmsprop_step, RmspropState, TrainConfig};

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_xent: f64,
    pub train_recon: f64,
    pub dev_acc: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub best_dev_acc: f64,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Parameters of the best-dev epoch (already restored into the model).
    pub best_params: ParamSet,
}

/// Train until `max_epochs` or `patience` consecutive epochs without a dev
/// improvement. The dev comparison is strictly-greater; on a non-improving
/// epoch the learning rate is multiplied by `lr_decay` (at most once per
/// epoch). The best-dev parameters are restored into the model before
/// returning.
pub fn train(
    model: &mut DrcnModel,
    train_pairs: &[SentencePair],
    dev_pairs: &[SentencePair],
    words: &Vocab,
    chars: &Vocab,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.config.validate()?;
    let mut dropout_rng = DrcnRng::stream(cfg.seed, "dropout");
    let mut state = RmspropState::new();
    let mut lr = cfg.lr;
    let mut best_dev_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = model.params.clone();
    let mut plateau = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let batches = make_batches(
            train_pairs,
            cfg.batch_size,
            cfg.max_len,
            model.config.char_max_word_len,
            words,
            chars,
            Some(cfg.seed.wrapping_add(epoch as u64)),
        );
        let mut xent_sum = 0.0;
        let mut recon_sum = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let pass = model.forward_batch(
                batch,
                &ForwardOptions::train(),
                Some(&mut dropout_rng),
            )?;
            xent_sum += pass.xent_value() * batch.size as f64;
            recon_sum += pass.recon_value() * batch.size as f64;
            seen += batch.size;
            let mut pass = pass;
            pass.tape.backward(pass.loss)?;
            if let Some((mean, var)) = pass.bn_stats.take() {
                model.update_bn_running(&mean, &var);
            }
            let mut grads = pass.tape.into_grads();
            if let Some(max_norm) = cfg.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            rmsprop_step(&mut model.params, &grads, &mut state, cfg, lr)?;
        }

        let dev = evaluate(&[model], dev_pairs, words, chars, cfg.batch_size, cfg.max_len)?;
        let improved = dev.accuracy > best_dev_acc;
        if improved {
            best_dev_acc = dev.accuracy;
            best_epoch = epoch;
            best_params = model.params.clone();
            plateau = 0;
        } else {
            lr *= cfg.lr_decay;
            plateau += 1;
        }
        log.push(EpochLog {
            epoch,
            lr,
            train_xent: xent_sum / seen.max(1) as f64,
            train_recon: recon_sum / seen.max(1) as f64,
            dev_acc: dev.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        if plateau > cfg.patience {
            break;
        }
    }

    model.params = best_params.clone();
    Ok(TrainOutcome { best_dev_acc, best_epoch, log, best_params })
}

/// Fixed-batch overfit smoke: `steps` RMSProp updates at a constant learning
/// rate on a four-pair set with full wiring (dense + attention + AE + flag).
/// Returns the final training loss and accuracy on that same batch.
pub fn overfit_smoke(steps: usize, seed: u64) -> Result<(f64, f64)> {
    use crate::data::{make_batches, tokenize};
    use crate::model::{ConnectionMode, ForwardPass, ModelConfig};

    let raw = [
        ("red boat drifts", "owls hoot loudly", 0u32),
        ("green truck stops", "three owls fly", 1),
        ("boat sails away", "loud bugs hum", 2),
        ("truck rolls", "owls gather", 1),
    ];
    let pairs: Vec<SentencePair> = raw
        .iter()
        .map(|(p, h, l)| SentencePair {
            premise: tokenize(p),
            hypothesis: tokenize(h),
            label: *l,
            group_id: None,
        })
        .collect();
    let words = Vocab::build_words(&pairs);
    let chars = Vocab::build_chars(&pairs);
    let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
    let mut rng = DrcnRng::seed_from(seed);
    let mut model = DrcnModel::init(cfg, words.len(), chars.len(), &mut rng)?;
    let batch = make_batches(&pairs, 4, 6, 6, &words, &chars, None).remove(0);
    let tc = TrainConfig::default();
    let mut state = RmspropState::new();
    let mut drng = DrcnRng::stream(seed, "dropout");
    for _ in 0..steps {
        let mut pass =
            model.forward_batch(&batch, &ForwardOptions::train(), Some(&mut drng))?;
        pass.tape.backward(pass.loss)?;
        let mut grads = pass.tape.into_grads();
        if let Some(c) = tc.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        rmsprop_step(&mut model.params, &grads, &mut state, &tc, tc.lr)?;
    }
    let pass: ForwardPass = model.forward_batch(&batch, &ForwardOptions::train(), Some(&mut drng))?;
    let loss = pass.loss_value();
    let correct = (0..batch.size)
        .filter(|&b| {
            let row = pass.probs_of(b);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            pred == batch.labels[b] as usize
        })
        .count();
    Ok((loss, correct as f64 / batch.size as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;
    use crate::model::{ConnectionMode, ModelConfig};

    fn overfit_pairs() -> Vec<SentencePair> {
        let raw = [
            ("red boat drifts", "owls hoot loudly", 0u32),
            ("green truck stops", "three owls fly", 1),
            ("boat sails away", "loud bugs hum", 2),
            ("truck rolls", "owls gather", 1),
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

    #[test]
    fn lr_decays_by_0_85_per_non_improving_epoch() {
        // two consecutive plateau epochs: 0.001 → 0.00085 → 0.0007225
        let mut lr = 0.001f64;
        lr *= 0.85;
        assert!((lr - 0.00085).abs() < 1e-12);
        lr *= 0.85;
        assert!((lr - 0.0007225).abs() < 1e-12);
    }
    #[test]
    fn overfit_smoke_converges_within_500_steps() {
        let (loss, acc) = super::overfit_smoke(500, 5).unwrap();
        assert!(loss < 0.01, "loss {loss}");
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn one_small_step_strictly_decreases_fixed_batch_loss() {
        use crate::data::make_batches;
        use crate::train::{rmsprop_step, RmspropState};
        let pairs = overfit_pairs();
        let words = Vocab::build_words(&pairs);
        let chars = Vocab::build_chars(&pairs);
        let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
        let mut rng = DrcnRng::seed_from(3);
        let mut model = DrcnModel::init(cfg, words.len(), chars.len(), &mut rng).unwrap();
        let batch = make_batches(&pairs, 4, 6, 6, &words, &chars, None).remove(0);
        let tc = TrainConfig { l2: 0.0, ..TrainConfig::default() };
        let mut state = RmspropState::new();
        let mut drng = DrcnRng::seed_from(0);
        let mut pass = model
            .forward_batch(&batch, &ForwardOptions::train(), Some(&mut drng))
            .unwrap();
        let before = pass.loss_value();
        pass.tape.backward(pass.loss).unwrap();
        let grads = pass.tape.into_grads();
        rmsprop_step(&mut model.params, &grads, &mut state, &tc, 1e-5).unwrap();
        let after = model
            .forward_batch(&batch, &ForwardOptions::train(), Some(&mut DrcnRng::seed_from(0)))
            .unwrap()
            .loss_value();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn fixed_embedding_table_untouched_by_training() {
        let pairs = overfit_pairs();
        let words = Vocab::build_words(&pairs);
        let chars = Vocab::build_chars(&pairs);
        let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
        let mut rng = DrcnRng::seed_from(23);
        let mut model = DrcnModel::init(cfg, words.len(), chars.len(), &mut rng).unwrap();
        let before = model.params.get("embed.word_fix").data.clone();
        let tc = TrainConfig {
            batch_size: 2,
            max_epochs: 5,
            patience: 5,
            max_len: 6,
            seed: 23,
            ..TrainConfig::default()
        };
        train(&mut model, &pairs, &pairs, &words, &chars, &tc).unwrap();
        let after = &model.params.get("embed.word_fix").data;
        let bits = |xs: &[f64]| xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(after));
        // the trainable table did move
        assert_ne!(
            bits(&model.params.get("embed.word_tr").data),
            bits(&before)
        );
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let pairs = overfit_pairs();
        let words = Vocab::build_words(&pairs);
        let chars = Vocab::build_chars(&pairs);
        let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
        let run = || {
            let mut rng = DrcnRng::seed_from(5);
            let mut model =
                DrcnModel::init(cfg.clone(), words.len(), chars.len(), &mut rng).unwrap();
            let tc = TrainConfig {
                batch_size: 2,
                max_epochs: 6,
                patience: 6,
                max_len: 6,
                seed: 5,
                ..TrainConfig::default()
            };
            let out = train(&mut model, &pairs, &pairs, &words, &chars, &tc).unwrap();
            (out, model)
        };
        let (out_a, model_a) = run();
        let (out_b, model_b) = run();
        // bit-identical across runs (excluding wall-clock seconds)
        assert_eq!(out_a.log.len(), out_b.log.len());
        for (x, y) in out_a.log.iter().zip(&out_b.log) {
            assert_eq!(x.lr.to_bits(), y.lr.to_bits());
            assert_eq!(x.train_xent.to_bits(), y.train_xent.to_bits());
            assert_eq!(x.train_recon.to_bits(), y.train_recon.to_bits());
            assert_eq!(x.dev_acc.to_bits(), y.dev_acc.to_bits());
        }
        for (name, p) in model_a.params.iter() {
            let q = model_b.params.get(name);
            assert_eq!(p.data, q.data, "{name} diverged");
        }
    }
}
