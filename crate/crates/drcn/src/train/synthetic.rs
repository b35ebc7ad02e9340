//! Seeded synthetic alignment task: the hypothesis is either a reordered
//! subset of the premise tokens (positive) or the same with one token
//! substituted by a word absent from the premise (negative). Solving it
//! requires token-level alignment between the sentences, which is what
//! co-attention provides.

use crate::data::SentencePair;
use crate::rng::DrcnRng;

pub const VOCAB_SIZE: usize = 50;

fn word(i: usize) -> String {
    format!("w{i:02}")
}

pub fn generate(n: usize, seed: u64) -> Vec<SentencePair> {
    let mut rng = DrcnRng::stream(seed, "synthetic-alignment");
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let plen = 6 + rng.below(4);
        let mut available: Vec<usize> = (0..VOCAB_SIZE).collect();
        rng.shuffle(&mut available);
        let premise_ids: Vec<usize> = available[..plen].to_vec();
        let hlen = 4 + rng.below(plen.min(6) - 3);
        let mut hyp_ids: Vec<usize> = premise_ids[..hlen].to_vec();
        rng.shuffle(&mut hyp_ids);
        if !positive {
            // controlled substitution: one token the premise does not contain
            let replacement = available[plen + rng.below(VOCAB_SIZE - plen)];
            let at = rng.below(hyp_ids.len());
            hyp_ids[at] = replacement;
        }
        pairs.push(SentencePair {
            premise: premise_ids.iter().map(|&w| word(w)).collect(),
            hypothesis: hyp_ids.iter().map(|&w| word(w)).collect(),
            label: positive as u32,
            group_id: None,
        });
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_match_subset_property() {
        let pairs = generate(500, 3);
        for p in &pairs {
            let subset = p.hypothesis.iter().all(|t| p.premise.contains(t));
            assert_eq!(subset, p.label == 1, "premise {:?} hyp {:?}", p.premise, p.hypothesis);
            if p.label == 0 {
                // exactly one substituted token
                let misses =
                    p.hypothesis.iter().filter(|t| !p.premise.contains(*t)).count();
                assert_eq!(misses, 1);
            }
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let a = generate(100, 7);
        let b = generate(100, 7);
        assert_eq!(a, b);
        let positives = a.iter().filter(|p| p.label == 1).count();
        assert_eq!(positives, 50);
        assert_ne!(a, generate(100, 8));
    }
}
