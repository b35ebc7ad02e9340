//! Attention-map and max-pool-position CSV export for a single sentence pair.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{make_batches, tokenize, SentencePair, Vocab};
use crate::error::{DrcnError, Result};
use crate::model::{DrcnModel, ForwardOptions};
use crate::tensor::Tensor;

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.iter().map(|h| csv_escape(h)).collect::<Vec<_>>().join(","));
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.iter().map(|c| csv_escape(c)).collect::<Vec<_>>().join(","));
        out.push_str("\r\n");
    }
    fs::write(path, out).map_err(|e| DrcnError::io(path.display().to_string(), e))
}

fn alpha_csv(path: &Path, alpha: &Tensor, p_tokens: &[String], q_tokens: &[String]) -> Result<()> {
    let mut header = vec![String::new()];
    header.extend(q_tokens.iter().cloned());
    let rows: Vec<Vec<String>> = (0..alpha.rows())
        .map(|i| {
            let mut row = vec![p_tokens[i].clone()];
            row.extend((0..alpha.cols()).map(|j| format!("{:.12}", alpha.at2(i, j))));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

fn poolrate_csv(path: &Path, argmax: &[usize], tokens: &[String]) -> Result<()> {
    let mut counts = vec![0usize; tokens.len()];
    for &t in argmax {
        counts[t] += 1;
    }
    let total = argmax.len() as f64;
    let header: Vec<String> = tokens.to_vec();
    let row: Vec<String> =
        counts.iter().map(|&c| format!("{:.12}", c as f64 / total)).collect();
    write_csv(path, &header, &[row])
}

/// Run one premise/hypothesis pair through the model in eval mode and write:
/// `alpha_layer{1..N}.csv` (premise×hypothesis attention weights per layer),
/// `alpha_avg.csv` (their arithmetic mean), and `poolrate_p.csv` /
/// `poolrate_q.csv` (per-token fraction of feature dimensions whose max-pool
/// winner sits on that token). Returns the written paths.
pub fn export_pair_visualization(
    model: &DrcnModel,
    premise: &str,
    hypothesis: &str,
    words: &Vocab,
    chars: &Vocab,
    max_len: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let p_toks = tokenize(premise);
    let q_toks = tokenize(hypothesis);
    if p_toks.is_empty() || q_toks.is_empty() {
        return Err(DrcnError::Config("both sentences need at least one token".into()));
    }
    if !model.config.use_attention {
        return Err(DrcnError::Config(
            "attention is disabled in this model; no attention maps to export".into(),
        ));
    }
    let pair = SentencePair {
        premise: p_toks.clone(),
        hypothesis: q_toks.clone(),
        label: 0,
        group_id: None,
    };
    let pairs = [pair];
    let batch = make_batches(
        &pairs,
        1,
        max_len,
        model.config.char_max_word_len,
        words,
        chars,
        None,
    )
    .remove(0);
    let (lp, lq) = batch.true_lens(0);
    let p_toks: Vec<String> = p_toks.into_iter().take(lp).collect();
    let q_toks: Vec<String> = q_toks.into_iter().take(lq).collect();

    let pass = model.forward_batch(&batch, &ForwardOptions::eval(), None)?;
    fs::create_dir_all(out_dir).map_err(|e| DrcnError::io(out_dir.display().to_string(), e))?;

    let mut written = Vec::new();
    let alphas = &pass.diag.alpha_p[0];
    let mut avg = Tensor::zeros(vec![lp, lq]);
    for (l, alpha) in alphas.iter().enumerate() {
        for (acc, v) in avg.data_mut().iter_mut().zip(alpha.data()) {
            *acc += v / alphas.len() as f64;
        }
        let path = out_dir.join(format!("alpha_layer{}.csv", l + 1));
        alpha_csv(&path, alpha, &p_toks, &q_toks)?;
        written.push(path);
    }
    let avg_path = out_dir.join("alpha_avg.csv");
    alpha_csv(&avg_path, &avg, &p_toks, &q_toks)?;
    written.push(avg_path);

    let p_path = out_dir.join("poolrate_p.csv");
    poolrate_csv(&p_path, &pass.diag.pool_p[0].argmax, &p_toks)?;
    written.push(p_path);
    let q_path = out_dir.join("poolrate_q.csv");
    poolrate_csv(&q_path, &pass.diag.pool_q[0].argmax, &q_toks)?;
    written.push(q_path);
    Ok(written)
}
