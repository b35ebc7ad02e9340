//! Pretrained word-embedding loading (GloVe text format).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{DrcnError, Result};
use crate::rng::DrcnRng;

use super::{Vocab, PAD_ID};

/// `|V|×d` embedding matrix. The PAD row is pinned to zero; out-of-vocabulary
/// rows are drawn from N(0, 0.01²) with the run seed.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn random(vocab_len: usize, dim: usize, rng: &mut DrcnRng) -> EmbeddingTable {
        let mut data = vec![0.0; vocab_len * dim];
        for row in 1..vocab_len {
            for k in 0..dim {
                data[row * dim + k] = rng.normal_scaled(0.01);
            }
        }
        EmbeddingTable { rows: vocab_len, dim, data, trainable: true }
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let id = id as usize;
        &self.data[id * self.dim..(id + 1) * self.dim]
    }
}

/// Load GloVe-format vectors for `vocab`, returning the table and the
/// fraction of non-special vocabulary entries found in the file.
pub fn load_glove(
    path: &Path,
    vocab: &Vocab,
    dim: usize,
    rng: &mut DrcnRng,
) -> Result<(EmbeddingTable, f64)> {
    let file = File::open(path).map_err(|e| DrcnError::io(path.display().to_string(), e))?;
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng);
    let mut covered = vec![false; vocab.len()];
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DrcnError::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = match fields.next() {
            Some(t) => t,
            None => continue,
        };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(DrcnError::Format(format!(
                "{} line {}: expected {} dims, found {}",
                path.display(),
                lineno + 1,
                dim,
                values.len()
            )));
        }
        if !vocab.contains(token) {
            continue;
        }
        let id = vocab.id(token);
        if id == PAD_ID {
            continue;
        }
        let base = id as usize * dim;
        for (k, v) in values.iter().enumerate() {
            table.data[base + k] = v.parse::<f64>().map_err(|_| {
                DrcnError::Format(format!(
                    "{} line {}: bad float {v:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
        }
        covered[id as usize] = true;
    }
    // PAD row stays zero regardless of file contents
    for k in 0..dim {
        table.data[k] = 0.0;
    }
    let non_special = vocab.len().saturating_sub(2);
    let coverage = if non_special == 0 {
        0.0
    } else {
        covered.iter().skip(2).filter(|&&c| c).count() as f64 / non_special as f64
    };
    Ok((table, coverage))
}
