//! The DRCN network: word representation, a stack of densely-connected
//! co-attentive BiLSTM layers with optional autoencoder bottlenecks, max-pool
//! interaction and the classifier head.

mod config;
mod forward;


pub use config::{CompKind, ConnectionMode, LayerPlan, ModelConfig};
pub use forward::{co_attention, CoAttention, Diagnostics, ForwardOptions, ForwardPass, Mode};

use crate::data::EmbeddingTable;
use crate::error::{DrcnError, Result};
use crate::params::{Param, ParamSet};
use crate::rng::DrcnRng;

pub const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

pub struct DrcnModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub word_rows: usize,
    pub char_rows: usize,
}

impl DrcnModel {
    /// Fresh model with Glorot-uniform weights. Embedding tables start at
    /// N(0, 0.01²) with zero PAD rows; use [`DrcnModel::load_word_embeddings`]
    /// to overwrite them with pretrained vectors.
    pub fn init(
        config: ModelConfig,
        word_rows: usize,
        char_rows: usize,
        rng: &mut DrcnRng,
    ) -> Result<DrcnModel> {
        config.validate()?;
        let plan = config.plan()?;
        let mut params = ParamSet::new();
        let h = config.lstm_hidden;
        let two_h = 2 * h;

        let embed = |params: &mut ParamSet,
                         name: &str,
                         rows: usize,
                         dim: usize,
                         trainable: bool,
                         r: &mut DrcnRng| {
            let table = EmbeddingTable::random(rows, dim, r);
            params.insert_full(
                name,
                Param {
                    data: table.data,
                    shape: vec![rows, dim],
                    trainable,
                    no_decay: true,
                    frozen_prefix: dim, // PAD row stays zero
                },
            );
        };
        if config.use_trainable_emb {
            embed(&mut params, "embed.word_tr", word_rows, config.word_dim, true, rng);
        }
        if config.use_fixed_emb {
            embed(&mut params, "embed.word_fix", word_rows, config.word_dim, false, rng);
        }
        embed(&mut params, "embed.char", char_rows, config.char_emb_dim, true, rng);

        let kdim = config.char_kernel * config.char_emb_dim;
        params.insert(
            "char_conv.kernel",
            rng.glorot(kdim, config.char_out_dim),
            vec![kdim, config.char_out_dim],
        );
        // ReLU-feeding biases start slightly positive: exact-zero pre-activations
        // park finite differences on the ReLU kink and leave units dead at init
        params.insert(
            "char_conv.bias",
            vec![0.01; config.char_out_dim],
            vec![config.char_out_dim],
        );

        for l in 1..=config.num_layers {
            let d = plan.layer_inputs[l - 1];
            for dir in ["fwd", "bwd"] {
                params.insert(
                    &format!("layer{l}.{dir}.w_x"),
                    rng.glorot(d, 4 * h),
                    vec![d, 4 * h],
                );
                params.insert(
                    &format!("layer{l}.{dir}.w_h"),
                    rng.glorot(h, 4 * h),
                    vec![h, 4 * h],
                );
                // forget-gate bias starts at 1 to keep early memory open
                let mut b = vec![0.0; 4 * h];
                for v in b.iter_mut().take(2 * h).skip(h) {
                    *v = 1.0;
                }
                params.insert(&format!("layer{l}.{dir}.b"), b, vec![4 * h]);
            }
            if let Some(in_w) = plan.res_proj_in[l - 1] {
                params.insert(
                    &format!("layer{l}.res_proj"),
                    rng.glorot(in_w, two_h),
                    vec![in_w, two_h],
                );
            }
            if config.ae_layers.contains(&l) {
                let t_w = plan.transition_widths[l - 1];
                params.insert(
                    &format!("ae{l}.enc_w"),
                    rng.glorot(t_w, config.ae_hidden),
                    vec![t_w, config.ae_hidden],
                );
                params.insert(
                    &format!("ae{l}.enc_b"),
                    vec![0.01; config.ae_hidden],
                    vec![config.ae_hidden],
                );
                params.insert(
                    &format!("ae{l}.dec_w"),
                    rng.glorot(config.ae_hidden, t_w),
                    vec![config.ae_hidden, t_w],
                );
                params.insert(&format!("ae{l}.dec_b"), vec![0.0; t_w], vec![t_w]);
            }
        }

        let v_w = 5 * plan.final_width;
        params.insert("fc1.w", rng.glorot(v_w, config.fc_hidden), vec![v_w, config.fc_hidden]);
        params.insert("fc1.b", vec![0.01; config.fc_hidden], vec![config.fc_hidden]);
        params.insert(
            "fc2.w",
            rng.glorot(config.fc_hidden, config.fc_hidden),
            vec![config.fc_hidden, config.fc_hidden],
        );
        params.insert("fc2.b", vec![0.01; config.fc_hidden], vec![config.fc_hidden]);
        params.insert(
            "out.w",
            rng.glorot(config.fc_hidden, config.num_classes),
            vec![config.fc_hidden, config.num_classes],
        );
        params.insert("out.b", vec![0.0; config.num_classes], vec![config.num_classes]);

        if config.use_batch_norm {
            let f = config.fc_hidden;
            params.insert("bn.gamma", vec![1.0; f], vec![f]);
            params.insert("bn.beta", vec![0.0; f], vec![f]);
            params.insert_full(
                "bn.run_mean",
                Param { data: vec![0.0; f], shape: vec![f], trainable: false, no_decay: true, frozen_prefix: 0 },
            );
            params.insert_full(
                "bn.run_var",
                Param { data: vec![1.0; f], shape: vec![f], trainable: false, no_decay: true, frozen_prefix: 0 },
            );
        }

        Ok(DrcnModel { config, params, word_rows, char_rows })
    }

    /// Copy a pretrained table into the trainable and fixed word embeddings.
    pub fn load_word_embeddings(&mut self, table: &EmbeddingTable) -> Result<()> {
        if table.rows != self.word_rows || table.dim != self.config.word_dim {
            return Err(DrcnError::Config(format!(
                "embedding table {}×{} does not match model {}×{}",
                table.rows, table.dim, self.word_rows, self.config.word_dim
            )));
        }
        if self.config.use_trainable_emb {
            self.params.get_mut("embed.word_tr").data = table.data.clone();
        }
        if self.config.use_fixed_emb {
            self.params.get_mut("embed.word_fix").data = table.data.clone();
        }
        Ok(())
    }

    pub fn plan(&self) -> LayerPlan {
        self.config.plan().expect("validated at init")
    }

    /// Exponential running-statistic update after a training forward pass.
    pub fn update_bn_running(&mut self, mean: &[f64], var: &[f64]) {
        if !self.config.use_batch_norm {
            return;
        }
        let rm = &mut self.params.get_mut("bn.run_mean").data;
        for (r, &m) in rm.iter_mut().zip(mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        let rv = &mut self.params.get_mut("bn.run_var").data;
        for (r, &v) in rv.iter_mut().zip(var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    }

    /// Trainable parameter counts: (non-embedding, embedding).
    pub fn param_counts(&self) -> (usize, usize) {
        let mut embedding = 0usize;
        let mut other = 0usize;
        for (name, p) in self.params.iter() {
            if !p.trainable {
                continue;
            }
            if name.starts_with("embed.") {
                embedding += p.numel();
            } else {
                other += p.numel();
            }
        }
        (other, embedding)
    }
}
