//! Dense feedforward network with an expanding class-incremental head.
//!
//! Hidden layer `l` holds `W_l` of shape `d_l × (d_{l-1} + 1)`: the last column
//! is the bias, fed by a constant-1 row appended to the layer input. The head
//! maps the final features `a_L` (`d_L` rows, no bias) to one logit per class
//! seen so far; `head_task_offsets` records which head rows belong to which task.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{purpose, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Architecture: `[d₀, d₁, …, d_L]` where `d_L` feeds the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Hidden layers (from the input side) frozen after the first task.
    #[serde(default)]
    pub freeze_first_n_layers: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Config("layer_dims needs at least two entries".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Config("layer_dims entries must be >= 1".into()));
        }
        if self.freeze_first_n_layers > self.num_hidden() {
            return Err(Error::Config(format!(
                "freeze_first_n_layers ({}) exceeds hidden layer count ({})",
                self.freeze_first_n_layers,
                self.num_hidden()
            )));
        }
        Ok(())
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn feature_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    /// Input dimension of every layer whose activations are tracked in
    /// subspace memory: hidden layers (with bias channel), then the head.
    pub fn extracted_layer_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layer_dims[..self.num_hidden()]
            .iter()
            .map(|d| d + 1)
            .collect();
        dims.push(self.feature_dim());
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub activation: Activation,
    pub hidden_weights: Vec<DenseMatrix>,
    pub head: DenseMatrix,
    /// `offsets[t]..offsets[t+1]` are the head rows of task `t`.
    pub head_task_offsets: Vec<usize>,
}

/// Everything the forward pass produced for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Inputs of each hidden layer (bias row appended), then `a_L`. Empty when
    /// the forward pass ran without capture.
    pub layer_inputs: Vec<DenseMatrix>,
    pub pre_activations: Vec<DenseMatrix>,
    pub logits: DenseMatrix,
}

impl ForwardTrace {
    /// Input activations of the head.
    pub fn features(&self) -> Option<&DenseMatrix> {
        self.layer_inputs.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub hidden_grads: Vec<DenseMatrix>,
    pub head_grad: DenseMatrix,
    /// Head rows that may be updated.
    pub head_rows: Range<usize>,
    /// Leading hidden layers that must not be updated.
    pub frozen_hidden: usize,
}

impl GradientSet {
    /// Folds `weight_decay · W` into every trainable block.
    pub fn add_weight_decay(&mut self, params: &ModelParams, weight_decay: f64) {
        if weight_decay == 0.0 {
            return;
        }
        for (g, w) in self
            .hidden_grads
            .iter_mut()
            .zip(&params.hidden_weights)
            .skip(self.frozen_hidden)
        {
            for (gi, wi) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *gi += weight_decay * wi;
            }
        }
        for r in self.head_rows.clone() {
            let w = params.head.row(r).to_vec();
            for (gi, wi) in self.head_grad.row_mut(r).iter_mut().zip(w) {
                *gi += weight_decay * wi;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.hidden_grads.iter().all(DenseMatrix::is_finite) && self.head_grad.is_finite()
    }
}

fn append_bias_row(x: &DenseMatrix) -> DenseMatrix {
    let mut data = x.as_slice().to_vec();
    data.extend(std::iter::repeat_n(1.0, x.cols()));
    DenseMatrix::from_vec(x.rows() + 1, x.cols(), data).expect("shape by construction")
}

impl ModelParams {
    /// Random hidden weights (He/Xavier normal, zero bias) and an empty head.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_for(seed, &[purpose::INIT]);
        let hidden_weights = spec
            .layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = match spec.activation {
                    Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                    Activation::Tanh => (1.0 / fan_in as f64).sqrt(),
                };
                let normal = Normal::new(0.0, std).expect("positive std");
                DenseMatrix::from_fn(fan_out, fan_in + 1, |_, j| {
                    if j == fan_in {
                        0.0
                    } else {
                        normal.sample(&mut rng)
                    }
                })
            })
            .collect();
        Ok(ModelParams {
            activation: spec.activation,
            hidden_weights,
            head: DenseMatrix::zeros(0, spec.feature_dim()),
            head_task_offsets: vec![0],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_weights[0].cols() - 1
    }

    pub fn feature_dim(&self) -> usize {
        self.head.cols()
    }

    pub fn num_tasks(&self) -> usize {
        self.head_task_offsets.len() - 1
    }

    pub fn total_classes(&self) -> usize {
        self.head.rows()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.hidden_weights.iter().map(DenseMatrix::rows));
        dims
    }

    pub fn task_rows(&self, task: usize) -> Result<Range<usize>> {
        if task >= self.num_tasks() {
            return Err(Error::Input(format!(
                "task {task} has no head rows ({} tasks in head)",
                self.num_tasks()
            )));
        }
        Ok(self.head_task_offsets[task]..self.head_task_offsets[task + 1])
    }

    /// Appends `new_classes` randomly initialised head rows for a new task.
    /// Existing rows are copied bit-for-bit.
    pub fn expand_head(&self, new_classes: usize, init_seed: u64) -> Result<Self> {
        if new_classes == 0 {
            return Err(Error::Input("expand_head needs at least one class".into()));
        }
        let d = self.feature_dim();
        let mut rng = rng_for(init_seed, &[purpose::HEAD]);
        let normal = Normal::new(0.0, 0.01).expect("positive std");
        let extra = DenseMatrix::from_fn(new_classes, d, |_, _| normal.sample(&mut rng));
        let mut next = self.clone();
        next.head = self.head.vcat(&extra)?;
        next.head_task_offsets
            .push(self.total_classes() + new_classes);
        Ok(next)
    }

    /// Runs the network on `d₀ × n` inputs.
    pub fn forward(&self, batch_inputs: &DenseMatrix, capture: bool) -> Result<ForwardTrace> {
        if batch_inputs.rows() != self.input_dim() {
            return Err(Error::dim(
                "forward",
                format!("{} input rows", self.input_dim()),
                format!("{} input rows", batch_inputs.rows()),
            ));
        }
        let mut layer_inputs = Vec::new();
        let mut pre_activations = Vec::new();
        let mut a = batch_inputs.clone();
        for w in &self.hidden_weights {
            let inp = append_bias_row(&a);
            let z = w.matmul(&inp)?;
            let mut h = z.clone();
            h.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = self.activation.apply(*v));
            if capture {
                layer_inputs.push(inp);
                pre_activations.push(z);
            }
            a = h;
        }
        let logits = self.head.matmul(&a)?;
        if capture {
            layer_inputs.push(a);
        }
        Ok(ForwardTrace {
            layer_inputs,
            pre_activations,
            logits,
        })
    }

    /// Final features `a_L` (`d_L × n`).
    pub fn features(&self, batch_inputs: &DenseMatrix) -> Result<DenseMatrix> {
        let mut trace = self.forward(batch_inputs, true)?;
        Ok(trace.layer_inputs.pop().expect("captured"))
    }

    /// Masked cross-entropy over the active task's head rows and its gradients.
    ///
    /// `target_rows` are absolute head rows and must fall inside the active
    /// task's range. Gradients of every other head row are exactly zero.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        target_rows: &[usize],
        active_task: usize,
    ) -> Result<(GradientSet, f64)> {
        let rows = self.task_rows(active_task)?;
        let n = trace.logits.cols();
        if trace.layer_inputs.len() != self.hidden_weights.len() + 1 {
            return Err(Error::Input("backward needs a captured forward trace".into()));
        }
        if target_rows.len() != n {
            return Err(Error::dim("backward", format!("{n} targets"), target_rows.len()));
        }
        if let Some(&bad) = target_rows.iter().find(|r| !rows.contains(r)) {
            return Err(Error::Input(format!(
                "target row {bad} outside active task rows {rows:?}"
            )));
        }
        if n == 0 {
            return Err(Error::Input("backward on an empty batch".into()));
        }

        let inv_n = 1.0 / n as f64;
        let mut dlogits = DenseMatrix::zeros(self.total_classes(), n);
        let mut loss = 0.0;
        for j in 0..n {
            let max = rows
                .clone()
                .map(|r| trace.logits[(r, j)])
                .fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = rows.clone().map(|r| (trace.logits[(r, j)] - max).exp()).sum();
            let log_denom = denom.ln();
            loss -= trace.logits[(target_rows[j], j)] - max - log_denom;
            for r in rows.clone() {
                let p = (trace.logits[(r, j)] - max).exp() / denom;
                let y = if r == target_rows[j] { 1.0 } else { 0.0 };
                dlogits[(r, j)] = (p - y) * inv_n;
            }
        }
        loss *= inv_n;

        let features = trace.layer_inputs.last().expect("checked length");
        let head_grad = dlogits.matmul(&features.transpose())?;
        let mut da = self.head.t_matmul(&dlogits)?;

        let nh = self.hidden_weights.len();
        let mut hidden_grads = vec![DenseMatrix::zeros(0, 0); nh];
        for l in (0..nh).rev() {
            let z = &trace.pre_activations[l];
            let mut dz = da;
            for (g, &zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *g *= self.activation.derivative(zv);
            }
            hidden_grads[l] = dz.matmul(&trace.layer_inputs[l].transpose())?;
            if l > 0 {
                let w = &self.hidden_weights[l];
                let in_dim = w.cols() - 1;
                // drop the bias column when propagating to the previous layer
                let full = w.t_matmul(&dz)?;
                da = DenseMatrix::from_fn(in_dim, n, |i, j| full[(i, j)]);
            } else {
                da = DenseMatrix::zeros(0, 0);
            }
        }
        Ok((
            GradientSet {
                hidden_grads,
                head_grad,
                head_rows: rows,
                frozen_hidden: 0,
            },
            loss,
        ))
    }

    /// `W ← W − lr·(grad + weight_decay·W)` on every trainable block.
    pub fn sgd_step(&self, grads: &GradientSet, lr: f64, weight_decay: f64) -> Result<Self> {
        if !(lr >= 0.0) || !(weight_decay >= 0.0) {
            return Err(Error::Input(format!(
                "sgd_step needs lr >= 0 and weight_decay >= 0 (got {lr}, {weight_decay})"
            )));
        }
        if !grads.is_finite() {
            return Err(Error::Numerical {
                op: "sgd_step",
                rows: grads.head_grad.rows(),
                cols: grads.head_grad.cols(),
                detail: "non-finite gradient".into(),
            });
        }
        if grads.hidden_grads.len() != self.hidden_weights.len()
            || grads.head_grad.shape() != self.head.shape()
        {
            return Err(Error::dim("sgd_step", "gradients matching params", "mismatched gradient set"));
        }
        let mut next = self.clone();
        for (l, (w, g)) in next
            .hidden_weights
            .iter_mut()
            .zip(&grads.hidden_grads)
            .enumerate()
        {
            if l < grads.frozen_hidden {
                continue;
            }
            if w.shape() != g.shape() {
                return Err(Error::dim("sgd_step", format!("{:?}", w.shape()), format!("{:?}", g.shape())));
            }
            for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *wi -= lr * (gi + weight_decay * *wi);
            }
        }
        for r in grads.head_rows.clone() {
            let g = grads.head_grad.row(r).to_vec();
            for (wi, gi) in next.head.row_mut(r).iter_mut().zip(g) {
                *wi -= lr * (gi + weight_decay * *wi);
            }
        }
        Ok(next)
    }

    /// Order-sensitive FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for w in &self.hidden_weights {
            w.as_slice().iter().for_each(|x| feed(x.to_bits()));
        }
        self.head.as_slice().iter().for_each(|x| feed(x.to_bits()));
        self.head_task_offsets.iter().for_each(|&o| feed(o as u64));
        h
    }

    /// Flat little-endian checkpoint: magic, activation code, layer dims, head
    /// task offsets, then every weight block row-major as `f64`.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.push(self.activation.code());
        let dims = self.layer_dims();
        buf.extend_from_slice(&(dims.len() as u64).to_le_bytes());
        for d in &dims {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&(self.head_task_offsets.len() as u64).to_le_bytes());
        for o in &self.head_task_offsets {
            buf.extend_from_slice(&(*o as u64).to_le_bytes());
        }
        for w in self.hidden_weights.iter().chain(std::iter::once(&self.head)) {
            for v in w.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::parse(path, "bad checkpoint magic"));
        }
        let activation = Activation::from_code(cur.take(1)?[0])
            .ok_or_else(|| Error::parse(path, "unknown activation code"))?;
        let n_dims = cur.u64()? as usize;
        let dims: Vec<usize> = (0..n_dims).map(|_| cur.u64().map(|v| v as usize)).collect::<Result<_>>()?;
        let n_off = cur.u64()? as usize;
        let offsets: Vec<usize> = (0..n_off).map(|_| cur.u64().map(|v| v as usize)).collect::<Result<_>>()?;
        if dims.len() < 2 || offsets.is_empty() {
            return Err(Error::parse(path, "truncated checkpoint header"));
        }
        let mut hidden_weights = Vec::new();
        for w in dims.windows(2) {
            hidden_weights.push(cur.matrix(w[1], w[0] + 1)?);
        }
        let classes = *offsets.last().expect("non-empty");
        let head = cur.matrix(classes, *dims.last().expect("non-empty"))?;
        if cur.pos != bytes.len() {
            return Err(Error::parse(path, "trailing bytes in checkpoint"));
        }
        Ok(ModelParams {
            activation,
            hidden_weights,
            head,
            head_task_offsets: offsets,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8] = b"FPTPCKP1";

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, "unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        let data = (0..rows * cols)
            .map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"))))
            .collect::<Result<Vec<f64>>>()?;
        DenseMatrix::from_vec(rows, cols, data)
    }
}

/// Random inputs helper for tests and examples.
pub fn random_inputs(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn spec(dims: &[usize], act: Activation) -> ModelSpec {
        ModelSpec {
            layer_dims: dims.to_vec(),
            activation: act,
            freeze_first_n_layers: 0,
        }
    }

    #[test]
    fn identity_layer_passes_input_to_head() {
        let mut p = ModelParams::init(&spec(&[3, 3], Activation::Relu), 1).unwrap();
        let mut w = DenseMatrix::zeros(3, 4);
        for i in 0..3 {
            w[(i, i)] = 1.0;
        }
        p.hidden_weights[0] = w;
        let p = p.expand_head(2, 5).unwrap();
        let x = DenseMatrix::from_rows(&[vec![0.5], vec![1.5], vec![2.0]]);
        let t = p.forward(&x, false).unwrap();
        assert_eq!(t.logits, p.head.matmul(&x).unwrap());
        assert!(t.layer_inputs.is_empty());
    }

    #[test]
    fn relu_kills_negative_preactivations() {
        let mut p = ModelParams::init(&spec(&[2, 3, 2], Activation::Relu), 1).unwrap();
        p.hidden_weights[0] = DenseMatrix::from_fn(3, 3, |_, j| if j < 2 { -1.0 } else { 0.0 });
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.1]]);
        let t = p.forward(&x, true).unwrap();
        let next = &t.layer_inputs[1];
        for j in 0..2 {
            for i in 0..3 {
                assert_eq!(next[(i, j)], 0.0);
            }
            assert_eq!(next[(3, j)], 1.0);
        }
    }

    #[test]
    fn captured_shapes() {
        let p = ModelParams::init(&spec(&[4, 5, 6], Activation::Tanh), 3)
            .unwrap()
            .expand_head(2, 1)
            .unwrap();
        let x = random_inputs(&mut rng_for(0, &[]), 4, 3);
        let t = p.forward(&x, true).unwrap();
        let shapes: Vec<_> = t.layer_inputs.iter().map(DenseMatrix::shape).collect();
        assert_eq!(shapes, vec![(5, 3), (6, 3), (6, 3)]);
        assert_eq!(t.logits.shape(), (2, 3));
        // replaying the head on captured features is bitwise identical
        assert!(p.head.matmul(t.features().unwrap()).unwrap().bit_eq(&t.logits));
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let p = ModelParams::init(&spec(&[2, 3], Activation::Relu), 1).unwrap();
        let mut p = p.expand_head(4, 1).unwrap();
        p.head = DenseMatrix::zeros(4, 3);
        let x = DenseMatrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.4]]);
        let t = p.forward(&x, true).unwrap();
        let (_, loss) = p.backward(&t, &[0, 3], 0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn previous_task_rows_get_zero_gradient() {
        let p = ModelParams::init(&spec(&[3, 4], Activation::Relu), 2)
            .unwrap()
            .expand_head(2, 1)
            .unwrap()
            .expand_head(3, 2)
            .unwrap();
        let x = random_inputs(&mut rng_for(9, &[]), 3, 5);
        let t = p.forward(&x, true).unwrap();
        let (g, _) = p.backward(&t, &[2, 3, 4, 2, 3], 1).unwrap();
        for r in 0..2 {
            assert!(g.head_grad.row(r).iter().all(|&v| v == 0.0));
        }
        assert_eq!(g.head_rows, 2..5);
        assert!(p.backward(&t, &[0, 3, 4, 2, 3], 1).is_err());
    }

    #[test]
    fn expansion_preserves_prefix_and_old_logits() {
        let p = ModelParams::init(&spec(&[3, 4], Activation::Relu), 2)
            .unwrap()
            .expand_head(10, 1)
            .unwrap();
        let q = p.expand_head(10, 2).unwrap();
        assert_eq!(q.head.shape(), (20, 4));
        for r in 0..10 {
            assert_eq!(p.head.row(r), q.head.row(r));
        }
        let x = random_inputs(&mut rng_for(1, &[]), 3, 2);
        let lp = p.forward(&x, false).unwrap().logits;
        let lq = q.forward(&x, false).unwrap().logits;
        for r in 0..10 {
            assert_eq!(lp.row(r), lq.row(r));
        }
        let a = q.expand_head(3, 5).unwrap().expand_head(4, 6).unwrap();
        let b = q.expand_head(7, 5).unwrap();
        assert_eq!(a.head.shape(), b.head.shape());
        assert!(p.expand_head(0, 1).is_err());
    }

    #[test]
    fn sgd_hand_cases() {
        let mut p = ModelParams::init(&spec(&[1, 1], Activation::Relu), 0)
            .unwrap()
            .expand_head(1, 0)
            .unwrap();
        p.hidden_weights[0] = DenseMatrix::from_rows(&[vec![1.0, 0.0]]);
        let mut g = GradientSet {
            hidden_grads: vec![DenseMatrix::from_rows(&[vec![2.0, 0.0]])],
            head_grad: DenseMatrix::zeros(1, 1),
            head_rows: 0..1,
            frozen_hidden: 0,
        };
        let q = p.sgd_step(&g, 0.1, 0.0).unwrap();
        assert!((q.hidden_weights[0][(0, 0)] - 0.8).abs() < 1e-15);

        p.hidden_weights[0] = DenseMatrix::from_rows(&[vec![2.0, 0.0]]);
        g.hidden_grads[0] = DenseMatrix::zeros(1, 2);
        let q = p.sgd_step(&g, 0.1, 0.5).unwrap();
        assert!((q.hidden_weights[0][(0, 0)] - 1.9).abs() < 1e-15);

        let q = p.sgd_step(&g, 0.1, 0.0).unwrap();
        assert_eq!(q, p);

        g.hidden_grads[0][(0, 0)] = f64::NAN;
        assert!(matches!(p.sgd_step(&g, 0.1, 0.0), Err(Error::Numerical { .. })));
    }

    #[test]
    fn frozen_rows_and_layers_untouched_by_decay() {
        let p = ModelParams::init(&spec(&[2, 3, 3], Activation::Relu), 4)
            .unwrap()
            .expand_head(2, 1)
            .unwrap()
            .expand_head(2, 2)
            .unwrap();
        let x = random_inputs(&mut rng_for(3, &[]), 2, 4);
        let t = p.forward(&x, true).unwrap();
        let (mut g, _) = p.backward(&t, &[2, 3, 2, 3], 1).unwrap();
        g.frozen_hidden = 1;
        g.add_weight_decay(&p, 0.1);
        let q = p.sgd_step(&g, 0.5, 0.1).unwrap();
        assert!(q.hidden_weights[0].bit_eq(&p.hidden_weights[0]));
        for r in 0..2 {
            assert_eq!(q.head.row(r), p.head.row(r));
        }
        assert!(!q.hidden_weights[1].bit_eq(&p.hidden_weights[1]));
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let p = ModelParams::init(&spec(&[3, 5, 2], Activation::Tanh), 11)
            .unwrap()
            .expand_head(3, 1)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        p.write_checkpoint(&path).unwrap();
        let q = ModelParams::read_checkpoint(&path).unwrap();
        assert_eq!(p.checksum(), q.checksum());
        assert_eq!(p, q);
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        let floats = 5 * 4 + 2 * 6 + 3 * 2;
        assert_eq!(len, 8 + 1 + 8 * (1 + 3) + 8 * (1 + 2) + 8 * floats);
        std::fs::write(&path, b"garbage").unwrap();
        assert!(ModelParams::read_checkpoint(&path).is_err());
    }
}
