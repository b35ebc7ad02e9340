//! Probability averaging over independently trained replicas.

use crate::data::Batch;
use crate::error::{DrcnError, Result};
use crate::model::{DrcnModel, ForwardOptions};

/// Arithmetic mean of the members' class probabilities. All members must
/// agree on the class count.
pub fn predict_probs(models: &[&DrcnModel], batch: &Batch) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(DrcnError::Config("ensemble needs at least one member".into()));
    }
    let num_classes = models[0].config.num_classes;
    for m in models {
        if m.config.num_classes != num_classes {
            return Err(DrcnError::Config(format!(
                "ensemble member class count {} differs from {}",
                m.config.num_classes, num_classes
            )));
        }
    }
    let mut mean = vec![0.0; batch.size * num_classes];
    let opts = ForwardOptions { collect_diagnostics: false, ..ForwardOptions::eval() };
    for m in models {
        let pass = m.forward_batch(batch, &opts, None)?;
        for (acc, p) in mean.iter_mut().zip(&pass.probs) {
            *acc += p;
        }
    }
    let inv = 1.0 / models.len() as f64;
    for v in mean.iter_mut() {
        *v *= inv;
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_batches, tokenize, SentencePair, Vocab};
    use crate::model::{ConnectionMode, DrcnModel, ModelConfig};
    use crate::rng::DrcnRng;

    #[test]
    fn mean_of_two_members_matches_brute_force() {
        let pairs = vec![
            SentencePair {
                premise: tokenize("red boat drifts"),
                hypothesis: tokenize("owls hoot"),
                label: 0,
                group_id: None,
            },
            SentencePair {
                premise: tokenize("green truck"),
                hypothesis: tokenize("owls fly now"),
                label: 1,
                group_id: None,
            },
        ];
        let words = Vocab::build_words(&pairs);
        let chars = Vocab::build_chars(&pairs);
        let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
        let mut r1 = DrcnRng::seed_from(1);
        let mut r2 = DrcnRng::seed_from(2);
        let a = DrcnModel::init(cfg.clone(), words.len(), chars.len(), &mut r1).unwrap();
        let b = DrcnModel::init(cfg, words.len(), chars.len(), &mut r2).unwrap();
        let batch = make_batches(&pairs, 2, 8, 6, &words, &chars, None).remove(0);
        let pa = predict_probs(&[&a], &batch).unwrap();
        let pb = predict_probs(&[&b], &batch).unwrap();
        let mean = predict_probs(&[&a, &b], &batch).unwrap();
        for ((x, y), m) in pa.iter().zip(&pb).zip(&mean) {
            assert!(((x + y) / 2.0 - m).abs() < 1e-15);
        }
        // argmax of the mean equals a brute-force recomputation over members
        let c = batch.labels.len();
        let nc = mean.len() / c;
        for i in 0..c {
            let row = &mean[i * nc..(i + 1) * nc];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|u, v| u.1.partial_cmp(v.1).unwrap())
                .unwrap()
                .0;
            let brute: Vec<f64> = (0..nc)
                .map(|j| (pa[i * nc + j] + pb[i * nc + j]) / 2.0)
                .collect();
            let brute_argmax = brute
                .iter()
                .enumerate()
                .max_by(|u, v| u.1.partial_cmp(v.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, brute_argmax);
        }
    }

    #[test]
    fn class_count_mismatch_rejected() {
        let pairs = vec![SentencePair {
            premise: tokenize("red boat"),
            hypothesis: tokenize("owls"),
            label: 0,
            group_id: None,
        }];
        let words = Vocab::build_words(&pairs);
        let chars = Vocab::build_chars(&pairs);
        let mut cfg3 = ModelConfig::micro(ConnectionMode::Dense, true);
        let mut cfg2 = cfg3.clone();
        cfg2.num_classes = 2;
        cfg3.num_classes = 3;
        let mut rng = DrcnRng::seed_from(4);
        let a = DrcnModel::init(cfg3, words.len(), chars.len(), &mut rng).unwrap();
        let b = DrcnModel::init(cfg2, words.len(), chars.len(), &mut rng).unwrap();
        let batch = make_batches(&pairs, 1, 8, 6, &words, &chars, None).remove(0);
        assert!(predict_probs(&[&a, &b], &batch).is_err());
    }
}
