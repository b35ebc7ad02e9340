//! Architecture configuration and the width arithmetic that follows from it.

use crate::error::{DrcnError, Result};

/// How layer `l+1`'s input is assembled from layer `l`'s pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionMode {
    /// Concatenate hidden, attentive and all preceding features.
    Dense,
    /// Sum hidden (+ attentive) features with the projected previous input.
    Residual,
    /// Feed only the current layer's outputs forward.
    Plain,
}

impl ConnectionMode {
    pub fn parse(s: &str) -> Result<ConnectionMode> {
        match s {
            "dense" => Ok(ConnectionMode::Dense),
            "residual" => Ok(ConnectionMode::Residual),
            "plain" => Ok(ConnectionMode::Plain),
            _ => Err(DrcnError::Config(format!("unknown connection_mode {s:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConnectionMode::Dense => "dense",
            ConnectionMode::Residual => "residual",
            ConnectionMode::Plain => "plain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of stacked BiLSTM layers.
    pub num_layers: usize,
    /// LSTM hidden units per direction; a BiLSTM step emits twice this.
    pub lstm_hidden: usize,
    pub word_dim: usize,
    pub char_emb_dim: usize,
    pub char_out_dim: usize,
    pub char_kernel: usize,
    pub char_max_word_len: usize,
    /// Autoencoder bottleneck width.
    pub ae_hidden: usize,
    /// 1-based layer indices whose transition output is compressed by an AE.
    pub ae_layers: Vec<usize>,
    /// Weight of the summed reconstruction losses in the training objective.
    pub ae_loss_weight: f64,
    pub fc_hidden: usize,
    pub num_classes: usize,
    pub connection_mode: ConnectionMode,
    pub use_attention: bool,
    pub use_match_flag: bool,
    pub use_trainable_emb: bool,
    pub use_fixed_emb: bool,
    /// Dense mode: carry previous layers' recurrent features forward.
    pub dense_rec_history: bool,
    /// Dense mode: carry previous layers' attentive features forward.
    pub dense_attn_history: bool,
    /// Carry the word features to every layer (dense/residual modes).
    pub dense_emb: bool,
    /// Allow a width-matching linear projection on the residual path.
    pub residual_proj: bool,
    pub emb_keep: f64,
    pub fc_keep: f64,
    pub ae_keep: f64,
    pub use_batch_norm: bool,
}

impl ModelConfig {
    /// Published DRCN defaults sized for SNLI-style NLI.
    pub fn paper_default(num_classes: usize, batch_norm: bool) -> ModelConfig {
        let num_layers = 5;
        ModelConfig {
            num_layers,
            lstm_hidden: 100,
            word_dim: 300,
            char_emb_dim: 16,
            char_out_dim: 32,
            char_kernel: 3,
            char_max_word_len: 16,
            ae_hidden: 200,
            ae_layers: (1..num_layers).collect(),
            ae_loss_weight: 1.0,
            fc_hidden: 1000,
            num_classes,
            connection_mode: ConnectionMode::Dense,
            use_attention: true,
            use_match_flag: true,
            use_trainable_emb: true,
            use_fixed_emb: true,
            dense_rec_history: true,
            dense_attn_history: true,
            dense_emb: true,
            residual_proj: true,
            emb_keep: 0.5,
            fc_keep: 0.8,
            ae_keep: 0.8,
            use_batch_norm: batch_norm,
        }
    }

    /// Tiny configuration for gradient checking: hidden 4, 2 layers, short
    /// sequences, every mechanism enabled.
    pub fn micro(mode: ConnectionMode, attention: bool) -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            lstm_hidden: 4,
            word_dim: 6,
            char_emb_dim: 3,
            char_out_dim: 4,
            char_kernel: 2,
            char_max_word_len: 6,
            ae_hidden: 5,
            ae_layers: vec![1],
            ae_loss_weight: 1.0,
            fc_hidden: 8,
            num_classes: 3,
            connection_mode: mode,
            use_attention: attention,
            use_match_flag: true,
            use_trainable_emb: true,
            use_fixed_emb: true,
            dense_rec_history: true,
            dense_attn_history: true,
            dense_emb: true,
            residual_proj: true,
            emb_keep: 1.0,
            fc_keep: 1.0,
            ae_keep: 1.0,
            use_batch_norm: false,
        }
    }

    /// Width of the per-token word feature `[e_tr; e_fix; c; f]`.
    pub fn word_feature_width(&self) -> usize {
        let mut w = self.char_out_dim;
        if self.use_trainable_emb {
            w += self.word_dim;
        }
        if self.use_fixed_emb {
            w += self.word_dim;
        }
        if self.use_match_flag {
            w += 1;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(DrcnError::Config(m));
        if self.num_layers < 1 {
            return fail("num_layers must be >= 1".into());
        }
        if self.lstm_hidden < 1 || self.fc_hidden < 1 || self.num_classes < 2 {
            return fail("lstm_hidden/fc_hidden/num_classes too small".into());
        }
        if self.char_kernel < 1 || self.char_out_dim < 1 || self.char_emb_dim < 1 {
            return fail("character convolution dimensions must be positive".into());
        }
        if self.char_max_word_len < self.char_kernel {
            return fail(format!(
                "char_max_word_len {} shorter than char_kernel {}",
                self.char_max_word_len, self.char_kernel
            ));
        }
        for keep in [self.emb_keep, self.fc_keep, self.ae_keep] {
            if !(0.0 < keep && keep <= 1.0) {
                return fail(format!("dropout keep {keep} outside (0,1]"));
            }
        }
        if self.ae_loss_weight < 0.0 {
            return fail("ae_loss_weight must be nonnegative".into());
        }
        for &l in &self.ae_layers {
            if l < 1 || l > self.num_layers {
                return fail(format!("ae layer index {l} outside 1..={}", self.num_layers));
            }
        }
        let plan = self.plan()?;
        for (l, &w) in plan.transition_widths.iter().enumerate() {
            if self.ae_layers.contains(&(l + 1)) && self.ae_hidden >= w {
                return fail(format!(
                    "ae_hidden {} is not a bottleneck for layer {} transition width {w}",
                    self.ae_hidden,
                    l + 1
                ));
            }
        }
        Ok(())
    }

    /// Static width plan: input width per layer, transition width per layer
    /// (pre-AE), whether each layer needs a residual projection, and the
    /// width that reaches pooling.
    pub fn plan(&self) -> Result<LayerPlan> {
        let two_h = 2 * self.lstm_hidden;
        let mut comps: Vec<(CompKind, usize)> = vec![(CompKind::Emb, self.word_feature_width())];
        let mut layer_inputs = Vec::with_capacity(self.num_layers);
        let mut transition_widths = Vec::with_capacity(self.num_layers);
        let mut res_proj_in = vec![None; self.num_layers];
        for l in 1..=self.num_layers {
            let d_l: usize = comps.iter().map(|&(_, w)| w).sum();
            layer_inputs.push(d_l);
            let mut next: Vec<(CompKind, usize)> = Vec::new();
            match self.connection_mode {
                ConnectionMode::Plain => {
                    next.push((CompKind::Rec, two_h));
                    if self.use_attention {
                        next.push((CompKind::Attn, two_h));
                    }
                }
                ConnectionMode::Dense => {
                    next.push((CompKind::Rec, two_h));
                    if self.use_attention {
                        next.push((CompKind::Attn, two_h));
                    }
                    for &(kind, w) in &comps {
                        if self.keeps_in_history(kind) {
                            next.push((kind, w));
                        }
                    }
                }
                ConnectionMode::Residual => {
                    // residual stream input: the leading component (the
                    // embedding itself at the first layer)
                    let (_, res_in_w) = comps[0];
                    if res_in_w != two_h {
                        if !self.residual_proj {
                            return Err(DrcnError::Config(format!(
                                "residual width mismatch at layer {l}: {res_in_w} vs {two_h} \
                                 and residual_proj is disabled"
                            )));
                        }
                        res_proj_in[l - 1] = Some(res_in_w);
                    }
                    next.push((CompKind::Res, two_h));
                    if self.dense_emb {
                        next.push((CompKind::Emb, self.word_feature_width()));
                    }
                }
            }
            let t_w: usize = next.iter().map(|&(_, w)| w).sum();
            transition_widths.push(t_w);
            comps = if self.ae_layers.contains(&l) {
                vec![(CompKind::Enc, self.ae_hidden)]
            } else {
                next
            };
        }
        let final_width: usize = comps.iter().map(|&(_, w)| w).sum();
        Ok(LayerPlan {
            word_feature_width: self.word_feature_width(),
            layer_inputs,
            transition_widths,
            res_proj_in,
            final_width,
        })
    }

    pub(crate) fn keeps_in_history(&self, kind: CompKind) -> bool {
        match kind {
            CompKind::Rec | CompKind::Enc | CompKind::Res => self.dense_rec_history,
            CompKind::Attn => self.dense_attn_history,
            CompKind::Emb => self.dense_emb,
        }
    }
}

/// Feature-class tag for the pieces that make up a layer input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompKind {
    Rec,
    Attn,
    Emb,
    Enc,
    Res,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub word_feature_width: usize,
    /// `d_l` for `l = 1..=num_layers`.
    pub layer_inputs: Vec<usize>,
    /// Transition output width per layer, before any AE compression.
    pub transition_widths: Vec<usize>,
    /// For residual layers whose incoming stream width differs from `2h`:
    /// the projection's input width.
    pub res_proj_in: Vec<Option<usize>>,
    /// Width of the features that reach max-pooling.
    pub final_width: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_word_feature_width_is_633() {
        let cfg = ModelConfig::paper_default(3, true);
        assert_eq!(cfg.word_feature_width(), 300 + 300 + 32 + 1);
    }

    #[test]
    fn width_333_without_fixed_embedding() {
        let mut cfg = ModelConfig::paper_default(3, true);
        cfg.use_fixed_emb = false;
        assert_eq!(cfg.word_feature_width(), 300 + 32 + 1);
    }

    #[test]
    fn dense_growth_is_4h_per_layer_without_ae() {
        let mut cfg = ModelConfig::paper_default(3, false);
        cfg.ae_layers.clear();
        let plan = cfg.plan().unwrap();
        for l in 1..cfg.num_layers {
            assert_eq!(plan.layer_inputs[l], plan.layer_inputs[l - 1] + 4 * cfg.lstm_hidden);
        }
    }

    #[test]
    fn ae_resets_width_to_bottleneck() {
        let cfg = ModelConfig::paper_default(3, true);
        let plan = cfg.plan().unwrap();
        // AE after layers 1..=4: inputs of layers 2..=5 start from 200 + …
        assert_eq!(plan.layer_inputs[0], 633);
        assert_eq!(plan.layer_inputs[1], 200);
        assert_eq!(plan.transition_widths[0], 633 + 400);
        // final transition: [h; a; x] = 200 + 200 + 200
        assert_eq!(plan.final_width, 600);
    }

    #[test]
    fn residual_needs_projection_only_on_width_mismatch() {
        let cfg_attn = {
            let mut c = ModelConfig::paper_default(3, false);
            c.connection_mode = ConnectionMode::Residual;
            c.ae_layers.clear();
            c.dense_emb = false;
            c
        };
        let plan = cfg_attn.plan().unwrap();
        assert_eq!(plan.res_proj_in[0], Some(633));
        assert!(plan.res_proj_in[1..].iter().all(|p| p.is_none()));
        assert_eq!(plan.final_width, 200);

        let mut no_proj = cfg_attn;
        no_proj.residual_proj = false;
        assert!(no_proj.plan().is_err());
    }

    #[test]
    fn plain_mode_widths() {
        let mut cfg = ModelConfig::paper_default(3, false);
        cfg.connection_mode = ConnectionMode::Plain;
        cfg.ae_layers.clear();
        cfg.use_attention = false;
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.layer_inputs, vec![633, 200, 200, 200, 200]);
        assert_eq!(plan.final_width, 200);
    }

    #[test]
    fn validate_rejects_non_bottleneck_ae() {
        let mut cfg = ModelConfig::micro(ConnectionMode::Dense, true);
        cfg.ae_hidden = 4096;
        assert!(cfg.validate().is_err());
    }
}
