//! Batch forward pass: word representation → N stacked co-attentive BiLSTM
//! layers with dense/residual/plain transitions and optional bottlenecks →
//! max-pool interaction → classifier. Both sentences go through the same
//! weight-shared graph on one tape.

use std::collections::BTreeMap;

use crate::data::Batch;
use crate::error::{DrcnError, Result};
use crate::rng::DrcnRng;
use crate::tensor::{PoolRecord, Tape, Tensor, Var, COSINE_EPS};

use super::config::CompKind;
use super::{ConnectionMode, DrcnModel, BN_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub mode: Mode,
    /// Collect attention maps, pool records and per-layer reconstruction
    /// losses (skipped in the training loop for speed).
    pub collect_diagnostics: bool,
    /// Additionally snapshot every layer input and pre-AE transition output.
    pub collect_transitions: bool,
}

impl ForwardOptions {
    pub fn train() -> Self {
        ForwardOptions { mode: Mode::Train, collect_diagnostics: false, collect_transitions: false }
    }

    pub fn eval() -> Self {
        ForwardOptions { mode: Mode::Eval, collect_diagnostics: true, collect_transitions: false }
    }
}

/// Attention maps, pooling records and reconstruction summaries for one batch.
#[derive(Debug, Default)]
pub struct Diagnostics {
    /// `[pair][layer]` premise-side attention weights, I×J row-stochastic.
    pub alpha_p: Vec<Vec<Tensor>>,
    /// `[pair][layer]` hypothesis-side weights, J×I row-stochastic.
    pub alpha_q: Vec<Vec<Tensor>>,
    /// Final-feature pool records per pair.
    pub pool_p: Vec<PoolRecord>,
    pub pool_q: Vec<PoolRecord>,
    /// Mean reconstruction loss per AE layer over all applications.
    pub recon_per_layer: BTreeMap<usize, f64>,
    /// `[pair][layer]` layer inputs x^l (post-AE of the previous layer).
    pub layer_inputs_p: Vec<Vec<Tensor>>,
    pub layer_inputs_q: Vec<Vec<Tensor>>,
    /// `[pair][layer]` transition outputs x^{l+1} before AE compression.
    pub transitions_p: Vec<Vec<Tensor>>,
    pub transitions_q: Vec<Vec<Tensor>>,
}

pub struct ForwardPass {
    pub tape: Tape,
    /// Total objective: cross entropy plus weighted reconstruction sum.
    pub loss: Var,
    pub xent: Var,
    /// Sum over AE layers of mean reconstruction loss; absent without AEs.
    pub recon_total: Option<Var>,
    /// Softmax probabilities, batch × classes.
    pub probs: Vec<f64>,
    pub num_classes: usize,
    /// Batch-norm batch statistics for the running-average update.
    pub bn_stats: Option<BnStats>,
    pub diag: Diagnostics,
}

impl ForwardPass {
    pub fn loss_value(&self) -> f64 {
        self.tape.scalar_value(self.loss)
    }

    pub fn xent_value(&self) -> f64 {
        self.tape.scalar_value(self.xent)
    }

    pub fn recon_value(&self) -> f64 {
        self.recon_total.map_or(0.0, |v| self.tape.scalar_value(v))
    }

    pub fn probs_of(&self, b: usize) -> &[f64] {
        &self.probs[b * self.num_classes..(b + 1) * self.num_classes]
    }
}

/// Batch-norm batch statistics (mean, variance) per feature.
pub type BnStats = (Vec<f64>, Vec<f64>);

/// Registered tape handles for the shared weights of one pass.
struct TapeParams {
    char_kernel: Var,
    char_bias: Var,
    layers: Vec<LayerVars>,
    fc1: (Var, Var),
    fc2: (Var, Var),
    out: (Var, Var),
    bn: Option<(Var, Var)>,
}

struct LayerVars {
    fwd: (Var, Var, Var),
    bwd: (Var, Var, Var),
    res_proj: Option<Var>,
    ae: Option<(Var, Var, Var, Var)>,
}

/// One sentence's evolving state through the stack.
struct SideState {
    /// Word features kept for dense-embedding carry.
    emb: Var,
    comps: Vec<(CompKind, Var)>,
    /// Concatenation of `comps`: the current layer input x^l.
    x: Var,
    len: usize,
}

impl DrcnModel {
    pub fn forward_batch(
        &self,
        batch: &Batch,
        opts: &ForwardOptions,
        mut rng: Option<&mut DrcnRng>,
    ) -> Result<ForwardPass> {
        if opts.mode == Mode::Train && rng.is_none() {
            return Err(DrcnError::Config("training forward needs an RNG for dropout".into()));
        }
        let train = opts.mode == Mode::Train;
        let cfg = &self.config;
        let mut tape = if train { Tape::new() } else { Tape::no_grad() };
        let tp = self.register_params(&mut tape)?;

        let mut diag = Diagnostics::default();
        let mut recon_apps: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
        let mut interaction_rows: Vec<Var> = Vec::with_capacity(batch.size);

        for b in 0..batch.size {
            let (lp, lq) = batch.true_lens(b);
            if lp == 0 || lq == 0 {
                return Err(DrcnError::Config(format!("pair {b} has an empty side")));
            }
            let mut p_side = self.word_rep_side(
                &mut tape,
                &tp,
                batch.p_tokens_of(b),
                |t| batch.p_chars_of(b, t),
                batch.p_flags_of(b),
                lp,
                train,
                rng.as_deref_mut(),
            )?;
            let mut q_side = self.word_rep_side(
                &mut tape,
                &tp,
                batch.q_tokens_of(b),
                |t| batch.q_chars_of(b, t),
                batch.q_flags_of(b),
                lq,
                train,
                rng.as_deref_mut(),
            )?;

            if opts.collect_transitions {
                diag.layer_inputs_p.push(Vec::new());
                diag.layer_inputs_q.push(Vec::new());
                diag.transitions_p.push(Vec::new());
                diag.transitions_q.push(Vec::new());
            }
            if opts.collect_diagnostics {
                diag.alpha_p.push(Vec::new());
                diag.alpha_q.push(Vec::new());
            }

            for l in 1..=cfg.num_layers {
                let lv = &tp.layers[l - 1];
                if opts.collect_transitions {
                    diag.layer_inputs_p[b].push(tape.tensor(p_side.x).clone());
                    diag.layer_inputs_q[b].push(tape.tensor(q_side.x).clone());
                }
                let h_p = self.bilstm(&mut tape, lv, p_side.x, p_side.len)?;
                let h_q = self.bilstm(&mut tape, lv, q_side.x, q_side.len)?;

                let (a_p, a_q) = if cfg.use_attention {
                    let att = co_attention(&mut tape, h_p, h_q)?;
                    if opts.collect_diagnostics {
                        diag.alpha_p[b].push(tape.tensor(att.alpha_p).clone());
                        diag.alpha_q[b].push(tape.tensor(att.alpha_q).clone());
                    }
                    (Some(att.context_p), Some(att.context_q))
                } else {
                    (None, None)
                };

                self.transition(&mut tape, &tp, l, &mut p_side, h_p, a_p)?;
                self.transition(&mut tape, &tp, l, &mut q_side, h_q, a_q)?;

                if opts.collect_transitions {
                    diag.transitions_p[b].push(tape.tensor(p_side.x).clone());
                    diag.transitions_q[b].push(tape.tensor(q_side.x).clone());
                }

                if let Some((ew, eb, dw, db)) = lv.ae {
                    for side in [&mut p_side, &mut q_side] {
                        let (enc, recon) = self.bottleneck(
                            &mut tape,
                            side.x,
                            (ew, eb, dw, db),
                            train,
                            rng.as_deref_mut(),
                        )?;
                        recon_apps.entry(l).or_default().push(recon);
                        side.comps = vec![(CompKind::Enc, enc)];
                        side.x = enc;
                    }
                }
            }

            let (p_vec, rec_p) = tape.max_pool_time(p_side.x, &vec![1u8; p_side.len])?;
            let (q_vec, rec_q) = tape.max_pool_time(q_side.x, &vec![1u8; q_side.len])?;
            if opts.collect_diagnostics {
                diag.pool_p.push(rec_p);
                diag.pool_q.push(rec_q);
            }
            let sum = tape.add(p_vec, q_vec)?;
            let dif = tape.sub(p_vec, q_vec)?;
            let adif = tape.abs(dif);
            let v = tape.concat(&[p_vec, q_vec, sum, dif, adif], 1)?;
            interaction_rows.push(v);
        }

        let v_all = tape.concat(&interaction_rows, 0)?;
        let (logits, bn_stats) =
            self.classifier(&mut tape, &tp, v_all, train, rng)?;
        let labels: Vec<usize> = batch.labels.iter().map(|&l| l as usize).collect();
        let (xent, probs) = tape.cross_entropy_mean(logits, &labels)?;

        let mut recon_total: Option<Var> = None;
        for (&l, apps) in &recon_apps {
            let mut acc = apps[0];
            for &r in &apps[1..] {
                acc = tape.add(acc, r)?;
            }
            let mean_l = tape.scale(acc, 1.0 / apps.len() as f64);
            if opts.collect_diagnostics {
                diag.recon_per_layer.insert(l, tape.scalar_value(mean_l));
            }
            recon_total = Some(match recon_total {
                Some(t) => tape.add(t, mean_l)?,
                None => mean_l,
            });
        }
        let loss = match recon_total {
            Some(r) => {
                let weighted = tape.scale(r, cfg.ae_loss_weight);
                tape.add(xent, weighted)?
            }
            None => xent,
        };
        if !tape.scalar_value(loss).is_finite() {
            return Err(DrcnError::Numeric("non-finite loss in forward pass".into()));
        }

        Ok(ForwardPass {
            tape,
            loss,
            xent,
            recon_total,
            probs,
            num_classes: cfg.num_classes,
            bn_stats,
            diag,
        })
    }

    fn register_params(&self, tape: &mut Tape) -> Result<TapeParams> {
        let p = |tape: &mut Tape, ps: &crate::params::ParamSet, name: &str| -> Result<Var> {
            let param = ps.try_get(name)?;
            Ok(tape.param(name, &param.data, &param.shape)?)
        };
        let ps = &self.params;
        let mut layers = Vec::with_capacity(self.config.num_layers);
        for l in 1..=self.config.num_layers {
            let fwd = (
                p(tape, ps, &format!("layer{l}.fwd.w_x"))?,
                p(tape, ps, &format!("layer{l}.fwd.w_h"))?,
                p(tape, ps, &format!("layer{l}.fwd.b"))?,
            );
            let bwd = (
                p(tape, ps, &format!("layer{l}.bwd.w_x"))?,
                p(tape, ps, &format!("layer{l}.bwd.w_h"))?,
                p(tape, ps, &format!("layer{l}.bwd.b"))?,
            );
            let res_proj = if ps.contains(&format!("layer{l}.res_proj")) {
                Some(p(tape, ps, &format!("layer{l}.res_proj"))?)
            } else {
                None
            };
            let ae = if ps.contains(&format!("ae{l}.enc_w")) {
                Some((
                    p(tape, ps, &format!("ae{l}.enc_w"))?,
                    p(tape, ps, &format!("ae{l}.enc_b"))?,
                    p(tape, ps, &format!("ae{l}.dec_w"))?,
                    p(tape, ps, &format!("ae{l}.dec_b"))?,
                ))
            } else {
                None
            };
            layers.push(LayerVars { fwd, bwd, res_proj, ae });
        }
        Ok(TapeParams {
            char_kernel: p(tape, ps, "char_conv.kernel")?,
            char_bias: p(tape, ps, "char_conv.bias")?,
            layers,
            fc1: (p(tape, ps, "fc1.w")?, p(tape, ps, "fc1.b")?),
            fc2: (p(tape, ps, "fc2.w")?, p(tape, ps, "fc2.b")?),
            out: (p(tape, ps, "out.w")?, p(tape, ps, "out.b")?),
            bn: if self.config.use_batch_norm {
                Some((p(tape, ps, "bn.gamma")?, p(tape, ps, "bn.beta")?))
            } else {
                None
            },
        })
    }

    /// Eq-style word features for one sentence: `[e_tr; e_fix; c; f]` per
    /// token, with embedding dropout over the embedding-derived block.
    #[allow(clippy::too_many_arguments)]
    fn word_rep_side<'a>(
        &self,
        tape: &mut Tape,
        tp: &TapeParams,
        tokens: &[u32],
        chars_of: impl Fn(usize) -> &'a [u32],
        flags: &[f64],
        len: usize,
        train: bool,
        rng: Option<&mut DrcnRng>,
    ) -> Result<SideState> {
        let cfg = &self.config;
        let ids = &tokens[..len];
        let mut parts: Vec<Var> = Vec::with_capacity(3);
        if cfg.use_trainable_emb {
            let t = self.params.get("embed.word_tr");
            parts.push(tape.embed_lookup(
                "embed.word_tr",
                &t.data,
                self.word_rows,
                cfg.word_dim,
                ids,
                true,
            )?);
        }
        if cfg.use_fixed_emb {
            let t = self.params.get("embed.word_fix");
            parts.push(tape.embed_lookup(
                "embed.word_fix",
                &t.data,
                self.word_rows,
                cfg.word_dim,
                ids,
                false,
            )?);
        }
        // char feature per token: embed, convolve, max over positions
        let char_table = self.params.get("embed.char");
        let mut char_rows: Vec<Var> = Vec::with_capacity(len);
        for t in 0..len {
            let block = chars_of(t);
            let true_len = block.iter().take_while(|&&c| c != 0).count().max(1);
            let padded = true_len.max(cfg.char_kernel);
            let mut ids: Vec<u32> = Vec::with_capacity(padded);
            ids.extend_from_slice(&block[..true_len.min(block.len())]);
            ids.resize(padded, 0);
            let emb = tape.embed_lookup(
                "embed.char",
                &char_table.data,
                self.char_rows,
                cfg.char_emb_dim,
                &ids,
                true,
            )?;
            char_rows.push(tape.char_conv_max(
                emb,
                tp.char_kernel,
                tp.char_bias,
                cfg.char_kernel,
            )?);
        }
        parts.push(tape.concat(&char_rows, 0)?);

        let mut feats = tape.concat(&parts, 1)?;
        if train && cfg.emb_keep < 1.0 {
            let rng = rng.expect("train mode provides rng");
            feats = tape.dropout(feats, cfg.emb_keep, rng)?;
        }
        if cfg.use_match_flag {
            let flag = Tensor::new(vec![len, 1], flags[..len].to_vec())?;
            let fv = tape.constant(flag);
            feats = tape.concat(&[feats, fv], 1)?;
        }
        Ok(SideState { emb: feats, comps: vec![(CompKind::Emb, feats)], x: feats, len })
    }

    fn bilstm(&self, tape: &mut Tape, lv: &LayerVars, x: Var, len: usize) -> Result<Var> {
        let f = tape.lstm_seq(x, lv.fwd.0, lv.fwd.1, lv.fwd.2, len, false)?;
        let b = tape.lstm_seq(x, lv.bwd.0, lv.bwd.1, lv.bwd.2, len, true)?;
        Ok(tape.concat(&[f, b], 1)?)
    }

    /// Build layer `l+1`'s input from layer `l`'s output pieces.
    fn transition(
        &self,
        tape: &mut Tape,
        tp: &TapeParams,
        l: usize,
        side: &mut SideState,
        h: Var,
        a: Option<Var>,
    ) -> Result<()> {
        let cfg = &self.config;
        let mut next: Vec<(CompKind, Var)> = Vec::new();
        match cfg.connection_mode {
            ConnectionMode::Plain => {
                next.push((CompKind::Rec, h));
                if let Some(a) = a {
                    next.push((CompKind::Attn, a));
                }
            }
            ConnectionMode::Dense => {
                next.push((CompKind::Rec, h));
                if let Some(a) = a {
                    next.push((CompKind::Attn, a));
                }
                for &(kind, var) in &side.comps {
                    if cfg.keeps_in_history(kind) {
                        next.push((kind, var));
                    }
                }
            }
            ConnectionMode::Residual => {
                let mut r = match a {
                    Some(a) => tape.add(h, a)?,
                    None => h,
                };
                let res_in = side.comps[0].1;
                let routed = match tp.layers[l - 1].res_proj {
                    Some(w) => tape.matmul(res_in, w)?,
                    None => res_in,
                };
                r = tape.add(r, routed)?;
                next.push((CompKind::Res, r));
                if cfg.dense_emb {
                    next.push((CompKind::Emb, side.emb));
                }
            }
        }
        // In full dense mode this concatenation is exactly [h; a; x^l], so the
        // trailing slice of the new input reproduces the previous one.
        side.x = concat_comps(tape, &next)?;
        side.comps = next;
        Ok(())
    }

    /// ReLU encoder, linear decoder; returns the (dropped-out) encoding and
    /// the mean-squared reconstruction loss over the full input block.
    fn bottleneck(
        &self,
        tape: &mut Tape,
        x: Var,
        (ew, eb, dw, db): (Var, Var, Var, Var),
        train: bool,
        rng: Option<&mut DrcnRng>,
    ) -> Result<(Var, Var)> {
        let z = tape.matmul(x, ew)?;
        let z = tape.add_bias(z, eb)?;
        let mut enc = tape.relu(z);
        if train && self.config.ae_keep < 1.0 {
            let rng = rng.expect("train mode provides rng");
            enc = tape.dropout(enc, self.config.ae_keep, rng)?;
        }
        let d = tape.matmul(enc, dw)?;
        let recon = tape.add_bias(d, db)?;
        let diff = tape.sub(recon, x)?;
        let sq = tape.mul(diff, diff)?;
        let loss = tape.mean_all(sq);
        Ok((enc, loss))
    }

    /// Dropout → FC → ReLU → [BN] → dropout → FC → ReLU → dropout → FC.
    fn classifier(
        &self,
        tape: &mut Tape,
        tp: &TapeParams,
        v: Var,
        train: bool,
        mut rng: Option<&mut DrcnRng>,
    ) -> Result<(Var, Option<BnStats>)> {
        let cfg = &self.config;
        let drop = |tape: &mut Tape, x: Var, rng: &mut Option<&mut DrcnRng>| -> Result<Var> {
            if train && cfg.fc_keep < 1.0 {
                let r = rng.as_deref_mut().expect("train mode provides rng");
                Ok(tape.dropout(x, cfg.fc_keep, r)?)
            } else {
                Ok(x)
            }
        };
        let x = drop(tape, v, &mut rng)?;
        let z1 = tape.matmul(x, tp.fc1.0)?;
        let z1 = tape.add_bias(z1, tp.fc1.1)?;
        let mut r1 = tape.relu(z1);
        let mut bn_stats = None;
        if let Some((gamma, beta)) = tp.bn {
            if train {
                let (y, mean, var) = tape.batch_norm_train(r1, gamma, beta, BN_EPS)?;
                bn_stats = Some((mean, var));
                r1 = y;
            } else {
                r1 = self.batch_norm_eval(tape, r1, gamma, beta)?;
            }
        }
        let x = drop(tape, r1, &mut rng)?;
        let z2 = tape.matmul(x, tp.fc2.0)?;
        let z2 = tape.add_bias(z2, tp.fc2.1)?;
        let r2 = tape.relu(z2);
        let x = drop(tape, r2, &mut rng)?;
        let logits = tape.matmul(x, tp.out.0)?;
        let logits = tape.add_bias(logits, tp.out.1)?;
        Ok((logits, bn_stats))
    }

    /// Affine normalization with stored running statistics.
    fn batch_norm_eval(&self, tape: &mut Tape, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let mean = &self.params.get("bn.run_mean").data;
        let var = &self.params.get("bn.run_var").data;
        let neg_mean: Vec<f64> = mean.iter().map(|m| -m).collect();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let n = mean.len();
        let nm = tape.constant(Tensor::new(vec![n], neg_mean)?);
        let is = tape.constant(Tensor::new(vec![n], inv_std)?);
        let centered = tape.add_bias(x, nm)?;
        let xhat = tape.mul_cols(centered, is)?;
        let scaled = tape.mul_cols(xhat, gamma)?;
        Ok(tape.add_bias(scaled, beta)?)
    }
}

fn concat_comps(tape: &mut Tape, comps: &[(CompKind, Var)]) -> Result<Var> {
    if comps.len() == 1 {
        return Ok(comps[0].1);
    }
    let vars: Vec<Var> = comps.iter().map(|&(_, v)| v).collect();
    Ok(tape.concat(&vars, 1)?)
}

/// Cosine score matrix, row-stochastic weights and attentive contexts for
/// both directions. `h_p: I×2h`, `h_q: J×2h`; the Q side reuses the
/// transposed score matrix.
pub struct CoAttention {
    pub scores: Var,
    pub alpha_p: Var,
    pub alpha_q: Var,
    pub context_p: Var,
    pub context_q: Var,
}

pub fn co_attention(tape: &mut Tape, h_p: Var, h_q: Var) -> Result<CoAttention> {
    let i_n = tape.tensor(h_p).rows();
    let j_n = tape.tensor(h_q).rows();
    let scores = tape.cosine_matrix(h_p, h_q, COSINE_EPS)?;
    let alpha_p = tape.softmax_masked_rows(scores, &vec![1u8; j_n])?;
    let context_p = tape.matmul(alpha_p, h_q)?;
    let scores_t = tape.transpose2(scores)?;
    let alpha_q = tape.softmax_masked_rows(scores_t, &vec![1u8; i_n])?;
    let context_q = tape.matmul(alpha_q, h_p)?;
    Ok(CoAttention { scores, alpha_p, alpha_q, context_p, context_q })
}
