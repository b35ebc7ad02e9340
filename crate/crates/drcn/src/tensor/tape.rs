//! Operation tape for reverse-mode differentiation.
//!
//! Every op computes its result eagerly, stores it in the tape arena and, when
//! gradients are enabled and an input requires them, records itself. The
//! backward pass walks the record in exact reverse order; fan-out gradients
//! accumulate by summation, so accumulation order is fixed by recording order
//! and repeated runs are bit-identical.

use std::collections::BTreeMap;

use super::kernels::{mm, mm_acc, mm_nt, mm_nt_acc, mm_tn_acc, transpose};
use super::{Result, Tensor, TensorError};
use crate::rng::DrcnRng;

/// Handle to a tensor stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Per-output-dimension time index chosen by max-over-time pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolRecord {
    pub argmax: Vec<usize>,
}

/// A recorded operation. Fields hold whatever the backward pass needs beyond
/// the arena tensors themselves.
#[derive(Debug, Clone)]
pub enum Op {
    Matmul { a: Var, b: Var, out: Var },
    Add { a: Var, b: Var, out: Var },
    Sub { a: Var, b: Var, out: Var },
    Mul { a: Var, b: Var, out: Var },
    Scale { a: Var, c: f64, out: Var },
    AddBias { a: Var, bias: Var, out: Var },
    MulCols { a: Var, s: Var, out: Var },
    Tanh { a: Var, out: Var },
    Sigmoid { a: Var, out: Var },
    Relu { a: Var, out: Var },
    Abs { a: Var, out: Var },
    Concat { inputs: Vec<Var>, axis: usize, sizes: Vec<usize>, out: Var },
    Slice { a: Var, axis: usize, start: usize, len: usize, out: Var },
    Reshape { a: Var, out: Var },
    Transpose { a: Var, out: Var },
    SumAll { a: Var, out: Var },
    MeanAll { a: Var, out: Var },
    SoftmaxMaskedRows { mask: Vec<u8>, out: Var, a: Var },
    CosineMatrix { a: Var, b: Var, eps: f64, out: Var },
    MaxPoolTime { a: Var, argmax: Vec<usize>, out: Var },
    Dropout { a: Var, mask: Vec<f64>, out: Var },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, var: Vec<f64>, eps: f64, out: Var },
    CrossEntropyMean { logits: Var, labels: Vec<usize>, probs: Vec<f64>, out: Var },
    LstmSeq {
        x: Var,
        w_x: Var,
        w_h: Var,
        b: Var,
        len: usize,
        reverse: bool,
        hidden: usize,
        gates: Vec<f64>, // len×4h, post-activation, in processing order
        cells: Vec<f64>, // len×h, in processing order
        out: Var,
    },
    CharConvMax {
        x: Var,
        kernel: Var,
        bias: Var,
        width: usize,
        winners: Vec<usize>, // per filter: winning window position
        active: Vec<bool>,   // per filter: pre-activation of winner > 0
        out: Var,
    },
    EmbedLookup { table: String, rows: usize, ids: Vec<u32>, out: Var },
}

/// Recording tape plus tensor arena.
pub struct Tape {
    tensors: Vec<Tensor>,
    ops: Vec<Op>,
    grad_enabled: bool,
    /// Named parameters registered this pass, for gradient extraction.
    params: Vec<(String, Var)>,
    /// Gradients scattered into embedding tables that live outside the arena.
    embed_grads: BTreeMap<String, Vec<f64>>,
}

pub type GradMap = BTreeMap<String, Vec<f64>>;

impl Tape {
    pub fn new() -> Self {
        Tape {
            tensors: Vec::new(),
            ops: Vec::new(),
            grad_enabled: true,
            params: Vec::new(),
            embed_grads: BTreeMap::new(),
        }
    }

    /// A tape that records nothing; forward values only (eval mode).
    pub fn no_grad() -> Self {
        let mut t = Tape::new();
        t.grad_enabled = false;
        t
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.tensors[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.tensors[v.0].data()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.tensors[v.0].numel(), 1);
        self.tensors[v.0].data()[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.tensors[v.0].grad()
    }

    /// Insert a non-differentiable constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t)
    }

    /// Insert a leaf honoring the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad() && self.grad_enabled;
        let mut fresh = Tensor::new(t.shape().to_vec(), t.data().to_vec()).unwrap();
        if rg {
            fresh = fresh.with_grad();
        }
        self.push(fresh)
    }

    /// Register a named parameter leaf (data is copied into the arena).
    pub fn param(&mut self, name: &str, data: &[f64], shape: &[usize]) -> Result<Var> {
        let mut t = Tensor::new(shape.to_vec(), data.to_vec())?;
        if self.grad_enabled {
            t = t.with_grad();
        }
        let v = self.push(t);
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    fn push(&mut self, t: Tensor) -> Var {
        self.tensors.push(t);
        Var(self.tensors.len() - 1)
    }

    fn push_out(&mut self, shape: Vec<usize>, data: Vec<f64>, needs_grad: bool) -> Var {
        let mut t = Tensor::new(shape, data).expect("internal shape bug");
        if needs_grad && self.grad_enabled {
            t = t.with_grad();
        }
        self.push(t)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        self.grad_enabled && vars.iter().any(|v| self.tensors[v.0].requires_grad())
    }

    fn record(&mut self, op: Op) {
        self.ops.push(op);
    }

    // ───────────────────────── ops ─────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(TensorError::Dimension(format!(
                "matmul {:?} · {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let data = mm(ta.data(), tb.data(), m, k, n);
        let ng = self.needs(&[a, b]);
        let out = self.push_out(vec![m, n], data, ng);
        if ng {
            self.record(Op::Matmul { a, b, out });
        }
        Ok(out)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.tensors[a.0].shape() != self.tensors[b.0].shape() {
            return Err(TensorError::Dimension(format!(
                "{what}: {:?} vs {:?}",
                self.tensors[a.0].shape(),
                self.tensors[b.0].shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data: Vec<f64> = self.tensors[a.0]
            .data()
            .iter()
            .zip(self.tensors[b.0].data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a, b]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(Op::Add { a, b, out });
        }
        Ok(out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data: Vec<f64> = self.tensors[a.0]
            .data()
            .iter()
            .zip(self.tensors[b.0].data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a, b]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(Op::Sub { a, b, out });
        }
        Ok(out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data: Vec<f64> = self.tensors[a.0]
            .data()
            .iter()
            .zip(self.tensors[b.0].data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a, b]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(Op::Mul { a, b, out });
        }
        Ok(out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data: Vec<f64> = self.tensors[a.0].data().iter().map(|x| x * c).collect();
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(Op::Scale { a, c, out });
        }
        out
    }

    /// Row-broadcast add: `a: m×n` plus `bias: [n]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = (self.tensors[a.0].rows(), self.tensors[a.0].cols());
        if self.tensors[bias.0].numel() != n {
            return Err(TensorError::Dimension(format!(
                "add_bias: bias len {} vs {} cols",
                self.tensors[bias.0].numel(),
                n
            )));
        }
        let mut data = self.tensors[a.0].data().to_vec();
        let bd = self.tensors[bias.0].data();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += bd[j];
            }
        }
        let ng = self.needs(&[a, bias]);
        let out = self.push_out(vec![m, n], data, ng);
        if ng {
            self.record(Op::AddBias { a, bias, out });
        }
        Ok(out)
    }

    /// Row-broadcast multiply: `a: m×n` times `s: [n]` per column.
    pub fn mul_cols(&mut self, a: Var, s: Var) -> Result<Var> {
        let (m, n) = (self.tensors[a.0].rows(), self.tensors[a.0].cols());
        if self.tensors[s.0].numel() != n {
            return Err(TensorError::Dimension(format!(
                "mul_cols: scale len {} vs {} cols",
                self.tensors[s.0].numel(),
                n
            )));
        }
        let mut data = self.tensors[a.0].data().to_vec();
        let sd = self.tensors[s.0].data();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] *= sd[j];
            }
        }
        let ng = self.needs(&[a, s]);
        let out = self.push_out(vec![m, n], data, ng);
        if ng {
            self.record(Op::MulCols { a, s, out });
        }
        Ok(out)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, make: impl Fn(Var, Var) -> Op) -> Var {
        let data: Vec<f64> = self.tensors[a.0].data().iter().map(|&x| f(x)).collect();
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(make(a, out));
        }
        out
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, |a, out| Op::Tanh { a, out })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, |a, out| Op::Sigmoid { a, out })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, |a, out| Op::Relu { a, out })
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, |a, out| Op::Abs { a, out })
    }

    /// Concatenate along `axis` (rank-2 tensors; rank-1 allowed on axis 0 when
    /// all inputs are rank-1).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(TensorError::Argument("concat of empty list".into()));
        }
        let first = self.tensors[inputs[0].0].shape().to_vec();
        if first.len() == 1 {
            if axis != 0 {
                return Err(TensorError::Dimension("rank-1 concat requires axis 0".into()));
            }
            let mut data = Vec::new();
            let mut sizes = Vec::new();
            for v in inputs {
                let t = &self.tensors[v.0];
                if t.shape().len() != 1 {
                    return Err(TensorError::Dimension("mixed ranks in concat".into()));
                }
                sizes.push(t.numel());
                data.extend_from_slice(t.data());
            }
            let total = data.len();
            let ng = self.needs(inputs);
            let out = self.push_out(vec![total], data, ng);
            if ng {
                self.record(Op::Concat { inputs: inputs.to_vec(), axis: 0, sizes, out });
            }
            return Ok(out);
        }
        if first.len() != 2 || axis > 1 {
            return Err(TensorError::Dimension(format!(
                "concat supports rank-1/rank-2, axis 0/1; got rank {} axis {}",
                first.len(),
                axis
            )));
        }
        let fixed = 1 - axis;
        let mut sizes = Vec::with_capacity(inputs.len());
        for v in inputs {
            let s = self.tensors[v.0].shape();
            if s.len() != 2 || s[fixed] != first[fixed] {
                return Err(TensorError::Dimension(format!(
                    "concat shape {:?} incompatible with {:?} on axis {}",
                    s, first, axis
                )));
            }
            sizes.push(s[axis]);
        }
        let total: usize = sizes.iter().sum();
        let (rows, cols) = if axis == 0 { (total, first[1]) } else { (first[0], total) };
        let mut data = vec![0.0; rows * cols];
        if axis == 0 {
            let mut off = 0;
            for v in inputs {
                let t = &self.tensors[v.0];
                data[off..off + t.numel()].copy_from_slice(t.data());
                off += t.numel();
            }
        } else {
            let mut col_off = 0;
            for (v, &w) in inputs.iter().zip(&sizes) {
                let t = &self.tensors[v.0];
                for i in 0..rows {
                    data[i * cols + col_off..i * cols + col_off + w]
                        .copy_from_slice(&t.data()[i * w..(i + 1) * w]);
                }
                col_off += w;
            }
        }
        let ng = self.needs(inputs);
        let out = self.push_out(vec![rows, cols], data, ng);
        if ng {
            self.record(Op::Concat { inputs: inputs.to_vec(), axis, sizes, out });
        }
        Ok(out)
    }

    /// Contiguous slice along `axis` of a rank-1 or rank-2 tensor.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.tensors[a.0].shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(TensorError::Dimension(format!(
                "slice [{start}..{}] on axis {axis} of {:?}",
                start + len,
                shape
            )));
        }
        let (out_shape, data) = match shape.len() {
            1 => (vec![len], self.tensors[a.0].data()[start..start + len].to_vec()),
            2 => {
                let (rows, cols) = (shape[0], shape[1]);
                if axis == 0 {
                    (
                        vec![len, cols],
                        self.tensors[a.0].data()[start * cols..(start + len) * cols].to_vec(),
                    )
                } else {
                    let src = self.tensors[a.0].data();
                    let mut d = Vec::with_capacity(rows * len);
                    for i in 0..rows {
                        d.extend_from_slice(&src[i * cols + start..i * cols + start + len]);
                    }
                    (vec![rows, len], d)
                }
            }
            r => {
                return Err(TensorError::Dimension(format!("slice on rank-{r} tensor")));
            }
        };
        let ng = self.needs(&[a]);
        let out = self.push_out(out_shape, data, ng);
        if ng {
            self.record(Op::Slice { a, axis, start, len, out });
        }
        Ok(out)
    }

    pub fn reshape(&mut self, a: Var, new_shape: Vec<usize>) -> Result<Var> {
        let numel: usize = new_shape.iter().product();
        if numel != self.tensors[a.0].numel() {
            return Err(TensorError::Dimension(format!(
                "reshape {:?} -> {:?}",
                self.tensors[a.0].shape(),
                new_shape
            )));
        }
        let data = self.tensors[a.0].data().to_vec();
        let ng = self.needs(&[a]);
        let out = self.push_out(new_shape, data, ng);
        if ng {
            self.record(Op::Reshape { a, out });
        }
        Ok(out)
    }

    pub fn transpose2(&mut self, a: Var) -> Result<Var> {
        let (m, n) = (self.tensors[a.0].rows(), self.tensors[a.0].cols());
        let data = transpose(self.tensors[a.0].data(), m, n);
        let ng = self.needs(&[a]);
        let out = self.push_out(vec![n, m], data, ng);
        if ng {
            self.record(Op::Transpose { a, out });
        }
        Ok(out)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.tensors[a.0].data().iter().sum();
        let ng = self.needs(&[a]);
        let out = self.push_out(vec![1], vec![s], ng);
        if ng {
            self.record(Op::SumAll { a, out });
        }
        out
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.tensors[a.0].numel() as f64;
        let s: f64 = self.tensors[a.0].data().iter().sum::<f64>() / n;
        let ng = self.needs(&[a]);
        let out = self.push_out(vec![1], vec![s], ng);
        if ng {
            self.record(Op::MeanAll { a, out });
        }
        out
    }

    /// Row-wise masked softmax over an `m×n` tensor; `mask` has length `n`,
    /// 1 marks live columns. Masked positions are exactly 0 in the output and
    /// each row sums to 1 over live positions. Stabilized by max subtraction.
    pub fn softmax_masked_rows(&mut self, a: Var, mask: &[u8]) -> Result<Var> {
        let (m, n) = match self.tensors[a.0].shape() {
            [n] => (1usize, *n),
            [m, n] => (*m, *n),
            s => return Err(TensorError::Dimension(format!("softmax on rank-{}", s.len()))),
        };
        if mask.len() != n {
            return Err(TensorError::Dimension(format!(
                "mask len {} vs {} columns",
                mask.len(),
                n
            )));
        }
        if mask.iter().all(|&x| x == 0) {
            return Err(TensorError::DegenerateMask("softmax row with all positions masked".into()));
        }
        let src = self.tensors[a.0].data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mut mx = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if mask[j] == 1 && v > mx {
                    mx = v;
                }
            }
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if mask[j] == 1 {
                    let e = (v - mx).exp();
                    data[i * n + j] = e;
                    z += e;
                }
            }
            for j in 0..n {
                if mask[j] == 1 {
                    data[i * n + j] /= z;
                }
            }
        }
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(Op::SoftmaxMaskedRows { mask: mask.to_vec(), out, a });
        }
        Ok(out)
    }

    /// Pairwise cosine similarity: `a: I×d`, `b: J×d` → `I×J`.
    pub fn cosine_matrix(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.cols() {
            return Err(TensorError::Dimension(format!(
                "cosine_matrix {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (i_n, j_n, d) = (ta.rows(), tb.rows(), ta.cols());
        if d == 0 {
            return Err(TensorError::Dimension("cosine of zero-width vectors".into()));
        }
        let na: Vec<f64> = (0..i_n)
            .map(|i| ta.data()[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let nb: Vec<f64> = (0..j_n)
            .map(|j| tb.data()[j * d..(j + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let mut data = vec![0.0; i_n * j_n];
        for i in 0..i_n {
            let u = &ta.data()[i * d..(i + 1) * d];
            for j in 0..j_n {
                let v = &tb.data()[j * d..(j + 1) * d];
                let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                data[i * j_n + j] = dot / (na[i] * nb[j] + eps);
            }
        }
        let ng = self.needs(&[a, b]);
        let out = self.push_out(vec![i_n, j_n], data, ng);
        if ng {
            self.record(Op::CosineMatrix { a, b, eps, out });
        }
        Ok(out)
    }

    /// Per-dimension max over unmasked time steps of `a: T×d`. Ties break to
    /// the lowest time index; gradient flows only to the winners.
    pub fn max_pool_time(&mut self, a: Var, mask: &[u8]) -> Result<(Var, PoolRecord)> {
        let (t_n, d) = (self.tensors[a.0].rows(), self.tensors[a.0].cols());
        if mask.len() != t_n {
            return Err(TensorError::Dimension(format!(
                "pool mask len {} vs {} steps",
                mask.len(),
                t_n
            )));
        }
        if mask.iter().all(|&x| x == 0) {
            return Err(TensorError::DegenerateMask("max-pool with all steps masked".into()));
        }
        let src = self.tensors[a.0].data();
        let mut best = vec![f64::NEG_INFINITY; d];
        let mut argmax = vec![0usize; d];
        for t in 0..t_n {
            if mask[t] == 0 {
                continue;
            }
            for j in 0..d {
                let v = src[t * d + j];
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = t;
                }
            }
        }
        let ng = self.needs(&[a]);
        let out = self.push_out(vec![1, d], best, ng);
        if ng {
            self.record(Op::MaxPoolTime { a, argmax: argmax.clone(), out });
        }
        Ok((out, PoolRecord { argmax }))
    }

    /// Inverted-scaling dropout: keeps each element with probability `keep`
    /// and scales survivors by `1/keep`. Record-time Bernoulli draws come from
    /// the caller's RNG so runs are reproducible.
    pub fn dropout(&mut self, a: Var, keep: f64, rng: &mut DrcnRng) -> Result<Var> {
        if !(0.0 < keep && keep <= 1.0) {
            return Err(TensorError::Argument(format!("dropout keep {keep} outside (0,1]")));
        }
        let n = self.tensors[a.0].numel();
        let inv = 1.0 / keep;
        let mask: Vec<f64> =
            (0..n).map(|_| if rng.uniform() < keep { inv } else { 0.0 }).collect();
        let data: Vec<f64> =
            self.tensors[a.0].data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.tensors[a.0].shape().to_vec();
        let ng = self.needs(&[a]);
        let out = self.push_out(shape, data, ng);
        if ng {
            self.record(Op::Dropout { a, mask, out });
        }
        Ok(out)
    }

    /// Batch normalization over the batch axis of `x: B×F` using batch
    /// statistics (training mode). Returns the output and the batch mean/var
    /// so the caller can update running estimates.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (b_n, f_n) = (self.tensors[x.0].rows(), self.tensors[x.0].cols());
        if self.tensors[gamma.0].numel() != f_n || self.tensors[beta.0].numel() != f_n {
            return Err(TensorError::Dimension("batch_norm parameter width".into()));
        }
        if b_n == 0 {
            return Err(TensorError::Argument("batch_norm over empty batch".into()));
        }
        let src = self.tensors[x.0].data();
        let mut mean = vec![0.0; f_n];
        for i in 0..b_n {
            for j in 0..f_n {
                mean[j] += src[i * f_n + j];
            }
        }
        for m in mean.iter_mut() {
            *m /= b_n as f64;
        }
        let mut var = vec![0.0; f_n];
        for i in 0..b_n {
            for j in 0..f_n {
                let d = src[i * f_n + j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= b_n as f64;
        }
        let g = self.tensors[gamma.0].data();
        let be = self.tensors[beta.0].data();
        let mut data = vec![0.0; b_n * f_n];
        for i in 0..b_n {
            for j in 0..f_n {
                let xhat = (src[i * f_n + j] - mean[j]) / (var[j] + eps).sqrt();
                data[i * f_n + j] = g[j] * xhat + be[j];
            }
        }
        let ng = self.needs(&[x, gamma, beta]);
        let out = self.push_out(vec![b_n, f_n], data, ng);
        if ng {
            self.record(Op::BatchNormTrain {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                var: var.clone(),
                eps,
                out,
            });
        }
        Ok((out, mean, var))
    }

    /// Mean cross-entropy with an internally stabilized softmax over
    /// `logits: B×C`. Also returns the softmax probabilities.
    pub fn cross_entropy_mean(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, Vec<f64>)> {
        let (b_n, c_n) = (self.tensors[logits.0].rows(), self.tensors[logits.0].cols());
        if labels.len() != b_n {
            return Err(TensorError::Dimension(format!(
                "{} labels for batch of {}",
                labels.len(),
                b_n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c_n) {
            return Err(TensorError::Argument(format!("label {bad} >= {c_n} classes")));
        }
        let src = self.tensors[logits.0].data();
        let mut probs = vec![0.0; b_n * c_n];
        let mut loss = 0.0;
        for i in 0..b_n {
            let row = &src[i * c_n..(i + 1) * c_n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                probs[i * c_n + j] = e;
                z += e;
            }
            for j in 0..c_n {
                probs[i * c_n + j] /= z;
            }
            loss -= (probs[i * c_n + labels[i]]).max(f64::MIN_POSITIVE).ln();
        }
        loss /= b_n as f64;
        let ng = self.needs(&[logits]);
        let out = self.push_out(vec![1], vec![loss], ng);
        if ng {
            self.record(Op::CrossEntropyMean {
                logits,
                labels: labels.to_vec(),
                probs: probs.clone(),
                out,
            });
        }
        Ok((out, probs))
    }

    /// One LSTM direction over `x: T×d`. Steps `0..len` are processed
    /// (left→right, or right→left within that prefix when `reverse`); rows at
    /// and beyond `len` stay zero. Gate layout in the fused weight matrices is
    /// `[input, forget, cell, output]`.
    pub fn lstm_seq(
        &mut self,
        x: Var,
        w_x: Var,
        w_h: Var,
        b: Var,
        len: usize,
        reverse: bool,
    ) -> Result<Var> {
        let (t_n, d) = (self.tensors[x.0].rows(), self.tensors[x.0].cols());
        let four_h = self.tensors[w_x.0].cols();
        if !four_h.is_multiple_of(4) {
            return Err(TensorError::Dimension("lstm weight cols not divisible by 4".into()));
        }
        let h = four_h / 4;
        if self.tensors[w_x.0].rows() != d
            || self.tensors[w_h.0].shape() != [h, four_h]
            || self.tensors[b.0].numel() != four_h
        {
            return Err(TensorError::Dimension(format!(
                "lstm shapes: x {:?} w_x {:?} w_h {:?} b {:?}",
                self.tensors[x.0].shape(),
                self.tensors[w_x.0].shape(),
                self.tensors[w_h.0].shape(),
                self.tensors[b.0].shape()
            )));
        }
        if len > t_n {
            return Err(TensorError::Argument(format!("lstm len {len} > {t_n} steps")));
        }
        // Input projection for all steps at once.
        let xw = mm(self.tensors[x.0].data(), self.tensors[w_x.0].data(), t_n, d, four_h);
        let whd = self.tensors[w_h.0].data().to_vec();
        let bd = self.tensors[b.0].data().to_vec();

        let mut out = vec![0.0; t_n * h];
        let mut gates = vec![0.0; len * four_h];
        let mut cells = vec![0.0; len * h];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for s in 0..len {
            let t = if reverse { len - 1 - s } else { s };
            let mut pre = bd.clone();
            for (p, &v) in pre.iter_mut().zip(&xw[t * four_h..(t + 1) * four_h]) {
                *p += v;
            }
            mm_acc(&h_prev, &whd, 1, h, four_h, &mut pre);
            let g = &mut gates[s * four_h..(s + 1) * four_h];
            for j in 0..h {
                g[j] = sigmoid(pre[j]); // input
                g[h + j] = sigmoid(pre[h + j]); // forget
                g[2 * h + j] = pre[2 * h + j].tanh(); // cell candidate
                g[3 * h + j] = sigmoid(pre[3 * h + j]); // output
            }
            let c = &mut cells[s * h..(s + 1) * h];
            for j in 0..h {
                c[j] = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
            }
            for j in 0..h {
                out[t * h + j] = g[3 * h + j] * c[j].tanh();
            }
            h_prev.copy_from_slice(&out[t * h..(t + 1) * h]);
            c_prev.copy_from_slice(c);
        }
        let ng = self.needs(&[x, w_x, w_h, b]);
        let out = self.push_out(vec![t_n, h], out, ng);
        if ng {
            self.record(Op::LstmSeq { x, w_x, w_h, b, len, reverse, hidden: h, gates, cells, out });
        }
        Ok(out)
    }

    /// Character convolution with ReLU and max-over-positions, fused:
    /// `x: L×dc` windows of `width` rows flattened against
    /// `kernel: (width·dc)×f`, plus `bias: [f]`; output `1×f`.
    pub fn char_conv_max(&mut self, x: Var, kernel: Var, bias: Var, width: usize) -> Result<Var> {
        let (l_n, dc) = (self.tensors[x.0].rows(), self.tensors[x.0].cols());
        let f_n = self.tensors[kernel.0].cols();
        if self.tensors[kernel.0].rows() != width * dc || self.tensors[bias.0].numel() != f_n {
            return Err(TensorError::Dimension(format!(
                "char conv: kernel {:?} bias {:?} for width {} dc {}",
                self.tensors[kernel.0].shape(),
                self.tensors[bias.0].shape(),
                width,
                dc
            )));
        }
        if l_n < width {
            return Err(TensorError::Dimension(format!(
                "char conv input of {l_n} rows shorter than kernel width {width}"
            )));
        }
        let npos = l_n - width + 1;
        let xd = self.tensors[x.0].data();
        let kd = self.tensors[kernel.0].data();
        let bd = self.tensors[bias.0].data();
        let mut best = vec![f64::NEG_INFINITY; f_n];
        let mut winners = vec![0usize; f_n];
        for p in 0..npos {
            let window = &xd[p * dc..(p + width) * dc];
            let pre = mm(window, kd, 1, width * dc, f_n);
            for j in 0..f_n {
                let v = pre[j] + bd[j];
                if v > best[j] {
                    best[j] = v;
                    winners[j] = p;
                }
            }
        }
        let active: Vec<bool> = best.iter().map(|&v| v > 0.0).collect();
        let data: Vec<f64> = best.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let ng = self.needs(&[x, kernel, bias]);
        let out = self.push_out(vec![1, f_n], data, ng);
        if ng {
            self.record(Op::CharConvMax { x, kernel, bias, width, winners, active, out });
        }
        Ok(out)
    }

    /// Gather embedding rows by id. The table lives outside the tape; when
    /// `trainable`, the backward pass scatters row gradients into a per-table
    /// accumulator retrievable from [`Tape::into_grads`]. Row 0 (PAD) is
    /// frozen and never receives gradient.
    pub fn embed_lookup(
        &mut self,
        table_name: &str,
        table: &[f64],
        rows: usize,
        dim: usize,
        ids: &[u32],
        trainable: bool,
    ) -> Result<Var> {
        debug_assert_eq!(table.len(), rows * dim);
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            if id >= rows {
                return Err(TensorError::Lookup { id, rows });
            }
            data.extend_from_slice(&table[id * dim..(id + 1) * dim]);
        }
        let ng = self.grad_enabled && trainable;
        let out = self.push_out(vec![ids.len(), dim], data, ng);
        if ng {
            self.embed_grads.entry(table_name.to_string()).or_insert_with(|| vec![0.0; rows * dim]);
            self.record(Op::EmbedLookup { table: table_name.to_string(), rows, ids: ids.to_vec(), out });
        }
        Ok(out)
    }

    // ─────────────────────── backward ───────────────────────

    /// Reverse sweep from a scalar loss. Gradients accumulate into each
    /// tensor's grad buffer; named parameter and embedding-table gradients can
    /// then be collected with [`Tape::into_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.tensors[loss.0].numel() != 1 {
            return Err(TensorError::Argument("backward needs a scalar loss".into()));
        }
        let lv = self.tensors[loss.0].data()[0];
        if !lv.is_finite() {
            return Err(TensorError::NonFinite("loss".into()));
        }
        if !self.tensors[loss.0].requires_grad() {
            return Err(TensorError::Argument("loss does not require grad".into()));
        }
        *self.tensors[loss.0].grad_mut() = Some(vec![1.0]);
        for idx in (0..self.ops.len()).rev() {
            let op = self.ops[idx].clone();
            self.backward_op(&op);
        }
        Ok(())
    }

    fn out_grad(&self, v: Var) -> Option<Vec<f64>> {
        self.tensors[v.0].grad().map(|g| g.to_vec())
    }

    fn accum(&mut self, v: Var, g: &[f64]) {
        if !self.tensors[v.0].requires_grad() {
            return;
        }
        let n = self.tensors[v.0].numel();
        debug_assert_eq!(g.len(), n);
        let slot = self.tensors[v.0].grad_mut();
        match slot {
            Some(acc) => {
                for (a, &x) in acc.iter_mut().zip(g) {
                    *a += x;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    fn backward_op(&mut self, op: &Op) {
        match op {
            Op::Matmul { a, b, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let (m, k) = (self.tensors[a.0].rows(), self.tensors[a.0].cols());
                let n = self.tensors[b.0].cols();
                let da = mm_nt(&g, self.tensors[b.0].data(), m, n, k);
                let mut db = vec![0.0; k * n];
                mm_tn_acc(self.tensors[a.0].data(), &g, m, k, n, &mut db);
                self.accum(*a, &da);
                self.accum(*b, &db);
            }
            Op::Add { a, b, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                self.accum(*a, &g);
                self.accum(*b, &g);
            }
            Op::Sub { a, b, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                self.accum(*a, &g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                self.accum(*b, &neg);
            }
            Op::Mul { a, b, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> =
                    g.iter().zip(self.tensors[b.0].data()).map(|(x, y)| x * y).collect();
                let db: Vec<f64> =
                    g.iter().zip(self.tensors[a.0].data()).map(|(x, y)| x * y).collect();
                self.accum(*a, &da);
                self.accum(*b, &db);
            }
            Op::Scale { a, c, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> = g.iter().map(|x| x * c).collect();
                self.accum(*a, &da);
            }
            Op::AddBias { a, bias, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let n = self.tensors[bias.0].numel();
                let m = g.len() / n;
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += g[i * n + j];
                    }
                }
                self.accum(*a, &g);
                self.accum(*bias, &db);
            }
            Op::MulCols { a, s, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let n = self.tensors[s.0].numel();
                let m = g.len() / n;
                let sd = self.tensors[s.0].data().to_vec();
                let ad = self.tensors[a.0].data();
                let mut da = vec![0.0; g.len()];
                let mut ds = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[i * n + j] * sd[j];
                        ds[j] += g[i * n + j] * ad[i * n + j];
                    }
                }
                self.accum(*a, &da);
                self.accum(*s, &ds);
            }
            Op::Tanh { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.tensors[out.0].data())
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect();
                self.accum(*a, &da);
            }
            Op::Sigmoid { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.tensors[out.0].data())
                    .map(|(gi, y)| gi * y * (1.0 - y))
                    .collect();
                self.accum(*a, &da);
            }
            Op::Relu { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.tensors[a.0].data())
                    .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accum(*a, &da);
            }
            Op::Abs { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.tensors[a.0].data())
                    .map(|(gi, &x)| gi * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
                    .collect();
                self.accum(*a, &da);
            }
            Op::Concat { inputs, axis, sizes, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let out_shape = self.tensors[out.0].shape().to_vec();
                if out_shape.len() == 1 || *axis == 0 {
                    let mut off = 0;
                    for (v, &w) in inputs.iter().zip(sizes) {
                        let n = self.tensors[v.0].numel();
                        self.accum(*v, &g[off..off + n]);
                        off += n;
                        let _ = w;
                    }
                } else {
                    let rows = out_shape[0];
                    let cols = out_shape[1];
                    let mut col_off = 0;
                    for (v, &w) in inputs.iter().zip(sizes) {
                        let mut part = vec![0.0; rows * w];
                        for i in 0..rows {
                            part[i * w..(i + 1) * w].copy_from_slice(
                                &g[i * cols + col_off..i * cols + col_off + w],
                            );
                        }
                        self.accum(*v, &part);
                        col_off += w;
                    }
                }
            }
            Op::Slice { a, axis, start, len, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let shape = self.tensors[a.0].shape().to_vec();
                let mut da = vec![0.0; self.tensors[a.0].numel()];
                match shape.len() {
                    1 => da[*start..start + len].copy_from_slice(&g),
                    2 => {
                        let cols = shape[1];
                        if *axis == 0 {
                            da[start * cols..(start + len) * cols].copy_from_slice(&g);
                        } else {
                            for i in 0..shape[0] {
                                da[i * cols + start..i * cols + start + len]
                                    .copy_from_slice(&g[i * len..(i + 1) * len]);
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                self.accum(*a, &da);
            }
            Op::Reshape { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                self.accum(*a, &g);
            }
            Op::Transpose { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let (n, m) = (self.tensors[out.0].rows(), self.tensors[out.0].cols());
                let da = transpose(&g, n, m);
                self.accum(*a, &da);
            }
            Op::SumAll { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da = vec![g[0]; self.tensors[a.0].numel()];
                self.accum(*a, &da);
            }
            Op::MeanAll { a, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let n = self.tensors[a.0].numel();
                let da = vec![g[0] / n as f64; n];
                self.accum(*a, &da);
            }
            Op::SoftmaxMaskedRows { mask, out, a } => {
                let Some(g) = self.out_grad(*out) else { return };
                let y = self.tensors[out.0].data();
                let n = mask.len();
                let m = y.len() / n;
                let mut da = vec![0.0; y.len()];
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(yj, gj)| yj * gj).sum();
                    for j in 0..n {
                        // masked positions have y=0, so da stays 0 there
                        da[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accum(*a, &da);
            }
            Op::CosineMatrix { a, b, eps, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let (i_n, d) = (self.tensors[a.0].rows(), self.tensors[a.0].cols());
                let j_n = self.tensors[b.0].rows();
                let ad = self.tensors[a.0].data();
                let bd = self.tensors[b.0].data();
                let na: Vec<f64> = (0..i_n)
                    .map(|i| ad[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
                    .collect();
                let nb: Vec<f64> = (0..j_n)
                    .map(|j| bd[j * d..(j + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
                    .collect();
                let mut da = vec![0.0; i_n * d];
                let mut db = vec![0.0; j_n * d];
                for i in 0..i_n {
                    let u = &ad[i * d..(i + 1) * d];
                    let inv_nu = if na[i] > 0.0 { 1.0 / na[i] } else { 0.0 };
                    for j in 0..j_n {
                        let gij = g[i * j_n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        let v = &bd[j * d..(j + 1) * d];
                        let inv_nv = if nb[j] > 0.0 { 1.0 / nb[j] } else { 0.0 };
                        let den = na[i] * nb[j] + eps;
                        let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                        let coef = dot / (den * den);
                        for k in 0..d {
                            da[i * d + k] += gij * (v[k] / den - coef * nb[j] * u[k] * inv_nu);
                            db[j * d + k] += gij * (u[k] / den - coef * na[i] * v[k] * inv_nv);
                        }
                    }
                }
                self.accum(*a, &da);
                self.accum(*b, &db);
            }
            Op::MaxPoolTime { a, argmax, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let d = self.tensors[a.0].cols();
                let mut da = vec![0.0; self.tensors[a.0].numel()];
                for (j, &t) in argmax.iter().enumerate() {
                    da[t * d + j] = g[j];
                }
                self.accum(*a, &da);
            }
            Op::Dropout { a, mask, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let da: Vec<f64> = g.iter().zip(mask).map(|(gi, m)| gi * m).collect();
                self.accum(*a, &da);
            }
            Op::BatchNormTrain { x, gamma, beta, mean, var, eps, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let (b_n, f_n) = (self.tensors[x.0].rows(), self.tensors[x.0].cols());
                let xd = self.tensors[x.0].data();
                let gd = self.tensors[gamma.0].data().to_vec();
                let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let mut dgamma = vec![0.0; f_n];
                let mut dbeta = vec![0.0; f_n];
                let mut sum_dxhat = vec![0.0; f_n];
                let mut sum_dxhat_xhat = vec![0.0; f_n];
                let mut xhat = vec![0.0; b_n * f_n];
                for i in 0..b_n {
                    for j in 0..f_n {
                        let xh = (xd[i * f_n + j] - mean[j]) * inv[j];
                        xhat[i * f_n + j] = xh;
                        let gi = g[i * f_n + j];
                        dgamma[j] += gi * xh;
                        dbeta[j] += gi;
                        let dxh = gi * gd[j];
                        sum_dxhat[j] += dxh;
                        sum_dxhat_xhat[j] += dxh * xh;
                    }
                }
                let mut dx = vec![0.0; b_n * f_n];
                let bf = b_n as f64;
                for i in 0..b_n {
                    for j in 0..f_n {
                        let dxh = g[i * f_n + j] * gd[j];
                        dx[i * f_n + j] = inv[j] / bf
                            * (bf * dxh - sum_dxhat[j] - xhat[i * f_n + j] * sum_dxhat_xhat[j]);
                    }
                }
                self.accum(*x, &dx);
                self.accum(*gamma, &dgamma);
                self.accum(*beta, &dbeta);
            }
            Op::CrossEntropyMean { logits, labels, probs, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let c_n = self.tensors[logits.0].cols();
                let b_n = labels.len();
                let scale = g[0] / b_n as f64;
                let mut da = vec![0.0; b_n * c_n];
                for i in 0..b_n {
                    for j in 0..c_n {
                        let y = if labels[i] == j { 1.0 } else { 0.0 };
                        da[i * c_n + j] = scale * (probs[i * c_n + j] - y);
                    }
                }
                self.accum(*logits, &da);
            }
            Op::LstmSeq { x, w_x, w_h, b, len, reverse, hidden, gates, cells, out } => {
                let Some(g_out) = self.out_grad(*out) else { return };
                let h = *hidden;
                let four_h = 4 * h;
                let d = self.tensors[x.0].cols();
                let xd = self.tensors[x.0].data().to_vec();
                let wxd = self.tensors[w_x.0].data().to_vec();
                let whd = self.tensors[w_h.0].data().to_vec();
                let outd = self.tensors[out.0].data().to_vec();
                let len = *len;

                let mut dpre_all = vec![0.0; len * four_h];
                let mut dwh = vec![0.0; h * four_h];
                let mut db = vec![0.0; four_h];
                let mut dh_carry = vec![0.0; h];
                let mut dc_carry = vec![0.0; h];
                for s in (0..len).rev() {
                    let t = if *reverse { len - 1 - s } else { s };
                    let gt = &gates[s * four_h..(s + 1) * four_h];
                    let ct = &cells[s * h..(s + 1) * h];
                    let (c_prev, h_prev): (Vec<f64>, Vec<f64>) = if s == 0 {
                        (vec![0.0; h], vec![0.0; h])
                    } else {
                        let tp = if *reverse { len - s } else { s - 1 };
                        (
                            cells[(s - 1) * h..s * h].to_vec(),
                            outd[tp * h..(tp + 1) * h].to_vec(),
                        )
                    };
                    let dpre = &mut dpre_all[s * four_h..(s + 1) * four_h];
                    for j in 0..h {
                        let dh = g_out[t * h + j] + dh_carry[j];
                        let tc = ct[j].tanh();
                        let o = gt[3 * h + j];
                        let mut dc = dc_carry[j] + dh * o * (1.0 - tc * tc);
                        let i_g = gt[j];
                        let f_g = gt[h + j];
                        let g_g = gt[2 * h + j];
                        let d_o = dh * tc;
                        let d_i = dc * g_g;
                        let d_f = dc * c_prev[j];
                        let d_g = dc * i_g;
                        dpre[j] = d_i * i_g * (1.0 - i_g);
                        dpre[h + j] = d_f * f_g * (1.0 - f_g);
                        dpre[2 * h + j] = d_g * (1.0 - g_g * g_g);
                        dpre[3 * h + j] = d_o * o * (1.0 - o);
                        dc *= f_g;
                        dc_carry[j] = dc;
                    }
                    // dh_{prev} = dpre · w_hᵀ ; dw_h += h_prevᵀ · dpre
                    let dpre_copy = dpre.to_vec();
                    dh_carry = mm_nt(&dpre_copy, &whd, 1, four_h, h);
                    mm_tn_acc(&h_prev, &dpre_copy, 1, h, four_h, &mut dwh);
                    for j in 0..four_h {
                        db[j] += dpre_copy[j];
                    }
                }
                // dx rows and dw_x in bulk over the processed prefix.
                let mut dx = vec![0.0; self.tensors[x.0].numel()];
                let mut dwx = vec![0.0; d * four_h];
                for s in 0..len {
                    let t = if *reverse { len - 1 - s } else { s };
                    let dpre = &dpre_all[s * four_h..(s + 1) * four_h];
                    mm_nt_acc(dpre, &wxd, 1, four_h, d, &mut dx[t * d..(t + 1) * d]);
                    mm_tn_acc(&xd[t * d..(t + 1) * d], dpre, 1, d, four_h, &mut dwx);
                }
                self.accum(*x, &dx);
                self.accum(*w_x, &dwx);
                self.accum(*w_h, &dwh);
                self.accum(*b, &db);
            }
            Op::CharConvMax { x, kernel, bias, width, winners, active, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let dc = self.tensors[x.0].cols();
                let f_n = self.tensors[bias.0].numel();
                let xd = self.tensors[x.0].data().to_vec();
                let kd = self.tensors[kernel.0].data().to_vec();
                let wdc = *width * dc;
                let mut dx = vec![0.0; self.tensors[x.0].numel()];
                let mut dk = vec![0.0; wdc * f_n];
                let mut dbias = vec![0.0; f_n];
                for j in 0..f_n {
                    if !active[j] || g[j] == 0.0 {
                        continue;
                    }
                    let p = winners[j];
                    dbias[j] += g[j];
                    let window = &xd[p * dc..p * dc + wdc];
                    for r in 0..wdc {
                        dk[r * f_n + j] += g[j] * window[r];
                        dx[p * dc + r] += g[j] * kd[r * f_n + j];
                    }
                }
                self.accum(*x, &dx);
                self.accum(*kernel, &dk);
                self.accum(*bias, &dbias);
            }
            Op::EmbedLookup { table, rows, ids, out } => {
                let Some(g) = self.out_grad(*out) else { return };
                let dim = self.tensors[out.0].cols();
                let acc = self
                    .embed_grads
                    .get_mut(table)
                    .expect("embed grad buffer registered at lookup time");
                debug_assert_eq!(acc.len(), rows * dim);
                for (t, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    if id == 0 {
                        continue; // PAD row stays frozen
                    }
                    for k in 0..dim {
                        acc[id * dim + k] += g[t * dim + k];
                    }
                }
            }
        }
    }

    /// Collect gradients for all registered named parameters and embedding
    /// tables. Parameters that received no gradient yield zeros.
    pub fn into_grads(mut self) -> GradMap {
        let mut grads: GradMap = BTreeMap::new();
        for (name, var) in std::mem::take(&mut self.params) {
            let n = self.tensors[var.0].numel();
            let g = self.tensors[var.0].take_grad().unwrap_or_else(|| vec![0.0; n]);
            match grads.get_mut(&name) {
                // same param registered twice: fold
                Some(acc) => {
                    for (a, x) in acc.iter_mut().zip(&g) {
                        *a += x;
                    }
                }
                None => {
                    grads.insert(name, g);
                }
            }
        }
        for (name, g) in std::mem::take(&mut self.embed_grads) {
            grads.insert(name, g);
        }
        grads
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
