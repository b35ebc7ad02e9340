//! Padded, masked batches with deterministic shuffling.

use crate::rng::DrcnRng;

use super::{SentencePair, Vocab, PAD_ID};

/// One padded batch. Token/char/flag/mask blocks are flat row-major:
/// tokens and masks are `size×max_len`, chars are `size×max_len×max_word`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub p_len: usize,
    pub q_len: usize,
    pub word_len: usize,
    pub p_tokens: Vec<u32>,
    pub q_tokens: Vec<u32>,
    pub p_chars: Vec<u32>,
    pub q_chars: Vec<u32>,
    pub p_flags: Vec<f64>,
    pub q_flags: Vec<f64>,
    pub p_mask: Vec<u8>,
    pub q_mask: Vec<u8>,
    pub labels: Vec<u32>,
    pub group_ids: Vec<Option<String>>,
    /// Index of each pair in the original dataset order (ranking tie-breaks).
    pub dataset_index: Vec<usize>,
}

impl Batch {
    pub fn p_tokens_of(&self, b: usize) -> &[u32] {
        &self.p_tokens[b * self.p_len..(b + 1) * self.p_len]
    }

    pub fn q_tokens_of(&self, b: usize) -> &[u32] {
        &self.q_tokens[b * self.q_len..(b + 1) * self.q_len]
    }

    pub fn p_mask_of(&self, b: usize) -> &[u8] {
        &self.p_mask[b * self.p_len..(b + 1) * self.p_len]
    }

    pub fn q_mask_of(&self, b: usize) -> &[u8] {
        &self.q_mask[b * self.q_len..(b + 1) * self.q_len]
    }

    pub fn p_flags_of(&self, b: usize) -> &[f64] {
        &self.p_flags[b * self.p_len..(b + 1) * self.p_len]
    }

    pub fn q_flags_of(&self, b: usize) -> &[f64] {
        &self.q_flags[b * self.q_len..(b + 1) * self.q_len]
    }

    /// Characters of token `t` of pair `b` on the premise side.
    pub fn p_chars_of(&self, b: usize, t: usize) -> &[u32] {
        let base = (b * self.p_len + t) * self.word_len;
        &self.p_chars[base..base + self.word_len]
    }

    pub fn q_chars_of(&self, b: usize, t: usize) -> &[u32] {
        let base = (b * self.q_len + t) * self.word_len;
        &self.q_chars[base..base + self.word_len]
    }

    /// Number of real tokens of pair `b` on each side.
    pub fn true_lens(&self, b: usize) -> (usize, usize) {
        let lp = self.p_mask_of(b).iter().map(|&m| m as usize).sum();
        let lq = self.q_mask_of(b).iter().map(|&m| m as usize).sum();
        (lp, lq)
    }
}

/// Exact-match flag per token of `p`: 1.0 iff the lowercased token occurs
/// anywhere in `q`.
pub fn exact_match_flags(p: &[String], q: &[String]) -> Vec<f64> {
    let q_lower: Vec<String> = q.iter().map(|t| t.to_lowercase()).collect();
    p.iter()
        .map(|t| {
            let t = t.to_lowercase();
            if q_lower.contains(&t) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Deterministically shuffle (when `seed` is set) and batch the pairs.
/// Sentences are truncated at `max_len` tokens and words at `max_word_len`
/// characters; padding is per-batch.
pub fn make_batches(
    pairs: &[SentencePair],
    batch_size: usize,
    max_len: usize,
    max_word_len: usize,
    words: &Vocab,
    chars: &Vocab,
    seed: Option<u64>,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    assert!(max_len >= 1 && max_word_len >= 1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    if let Some(seed) = seed {
        DrcnRng::stream(seed, "batch-shuffle").shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| build_batch(pairs, chunk, max_len, max_word_len, words, chars))
        .collect()
}

fn build_batch(
    pairs: &[SentencePair],
    chunk: &[usize],
    max_len: usize,
    max_word_len: usize,
    words: &Vocab,
    chars: &Vocab,
) -> Batch {
    let size = chunk.len();
    let trunc = |toks: &[String]| toks.len().min(max_len);
    let p_len = chunk.iter().map(|&i| trunc(&pairs[i].premise)).max().unwrap_or(1);
    let q_len = chunk.iter().map(|&i| trunc(&pairs[i].hypothesis)).max().unwrap_or(1);
    let word_len = chunk
        .iter()
        .flat_map(|&i| {
            pairs[i]
                .premise
                .iter()
                .take(p_len)
                .chain(pairs[i].hypothesis.iter().take(q_len))
                .map(|t| t.chars().count().min(max_word_len))
        })
        .max()
        .unwrap_or(1)
        .max(1);

    let mut batch = Batch {
        size,
        p_len,
        q_len,
        word_len,
        p_tokens: vec![PAD_ID; size * p_len],
        q_tokens: vec![PAD_ID; size * q_len],
        p_chars: vec![PAD_ID; size * p_len * word_len],
        q_chars: vec![PAD_ID; size * q_len * word_len],
        p_flags: vec![0.0; size * p_len],
        q_flags: vec![0.0; size * q_len],
        p_mask: vec![0; size * p_len],
        q_mask: vec![0; size * q_len],
        labels: Vec::with_capacity(size),
        group_ids: Vec::with_capacity(size),
        dataset_index: chunk.to_vec(),
    };

    for (b, &idx) in chunk.iter().enumerate() {
        let pair = &pairs[idx];
        let p: Vec<&String> = pair.premise.iter().take(p_len.min(pair.premise.len())).collect();
        let q: Vec<&String> =
            pair.hypothesis.iter().take(q_len.min(pair.hypothesis.len())).collect();
        // flags over the truncated sequences the model actually sees
        let p_owned: Vec<String> = p.iter().map(|s| s.to_string()).collect();
        let q_owned: Vec<String> = q.iter().map(|s| s.to_string()).collect();
        let pf = exact_match_flags(&p_owned, &q_owned);
        let qf = exact_match_flags(&q_owned, &p_owned);
        fill_side(
            &p_owned,
            &pf,
            b,
            p_len,
            word_len,
            max_word_len,
            words,
            chars,
            &mut batch.p_tokens,
            &mut batch.p_chars,
            &mut batch.p_flags,
            &mut batch.p_mask,
        );
        fill_side(
            &q_owned,
            &qf,
            b,
            q_len,
            word_len,
            max_word_len,
            words,
            chars,
            &mut batch.q_tokens,
            &mut batch.q_chars,
            &mut batch.q_flags,
            &mut batch.q_mask,
        );
        batch.labels.push(pair.label);
        batch.group_ids.push(pair.group_id.clone());
    }
    batch
}

#[allow(clippy::too_many_arguments)]
fn fill_side(
    toks: &[String],
    flags: &[f64],
    b: usize,
    t_len: usize,
    word_len: usize,
    max_word_len: usize,
    words: &Vocab,
    chars: &Vocab,
    tokens_out: &mut [u32],
    chars_out: &mut [u32],
    flags_out: &mut [f64],
    mask_out: &mut [u8],
) {
    for (t, tok) in toks.iter().enumerate() {
        tokens_out[b * t_len + t] = words.id(tok);
        flags_out[b * t_len + t] = flags[t];
        mask_out[b * t_len + t] = 1;
        for (k, c) in tok.chars().take(max_word_len.min(word_len)).enumerate() {
            chars_out[(b * t_len + t) * word_len + k] = chars.char_id(c);
        }
    }
}
