//! Reverse-mode automatic differentiation over a linear tape.

use std::collections::HashMap;
use std::rc::Rc;

use super::conv::{conv2d_backward, conv2d_forward, sgemm as gemm};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::encoder::loss::{triplet_loss, triplet_loss_grad};

const BN_EPS: f32 = 1e-5;
const LN_EPS: f32 = 1e-5;

/// Marker for a gathered element that reads as zero.
pub const GATHER_ZERO: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    HardSwish,
    HardSigmoid,
    Silu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn forward(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::HardSwish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
            Activation::HardSigmoid => (x + 3.0).clamp(0.0, 6.0) / 6.0,
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f32, y: f32) -> f32 {
        match self {
            Activation::Relu => (x > 0.0) as u8 as f32,
            Activation::HardSwish => {
                if x <= -3.0 {
                    0.0
                } else if x >= 3.0 {
                    1.0
                } else {
                    (2.0 * x + 3.0) / 6.0
                }
            }
            Activation::HardSigmoid => {
                if x > -3.0 && x < 3.0 {
                    1.0 / 6.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Running-statistics update produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub mean_buffer: usize,
    pub var_buffer: usize,
    pub mean: Vec<f32>,
    pub var_unbiased: Vec<f32>,
}

enum Op {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, stride: usize, pad: usize, groups: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f32>, inv_std: Vec<f32>, batch_stats: bool },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f32>, inv_std: Vec<f32> },
    Act { x: Var, kind: Activation },
    Add { a: Var, b: Var },
    ScaleChannels { x: Var, s: Var },
    GlobalAvgPool { x: Var },
    Linear { x: Var, w: Var, b: Option<Var> },
    MaxPool { x: Var, argmax: Vec<u32> },
    ConcatChannels { a: Var, b: Var },
    Gather { x: Var, index: Rc<Vec<u32>> },
    MatMul { a: Var, b: Var },
    Softmax { x: Var },
    Scale { x: Var, c: f32 },
    Sum { x: Var },
    TripletLoss { x: Var, margin: f32 },
    CrossEntropy { x: Var, targets: Vec<usize>, probs: Vec<f32> },
    RowNorm { x: Var },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients from one backward pass.
pub struct Gradients {
    pub params: Vec<Option<Tensor>>,
    inputs: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn input(&self, v: Var) -> Option<&Tensor> {
        self.inputs.get(&v)
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().flatten().all(Tensor::all_finite) && self.inputs.values().all(Tensor::all_finite)
    }
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    pub mode: Mode,
    pub bn_updates: Vec<BnUpdate>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            mode,
            bn_updates: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.store.params[id].value,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.value(v).shape
    }

    pub fn input(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(Tensor::zeros(&[0]), Op::Param(id), true);
        self.param_vars.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: ParamId, stride: usize, pad: usize, groups: usize) -> Var {
        let w = self.param(w);
        let y = conv2d_forward(self.value(x), self.value(w), stride, pad, groups);
        let rg = self.rg(x) || self.rg(w);
        self.push(y, Op::Conv2d { x, w, stride, pad, groups }, rg)
    }

    /// Batch norm over all axes but 1.
    pub fn batch_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId, mean_buffer: usize, var_buffer: usize) -> Var {
        let (gamma, beta) = (self.param(gamma), self.param(beta));
        let xv = self.value(x);
        let shape = xv.shape.clone();
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let m = n * inner;
        let batch_stats = self.mode == Mode::Train;
        let (mean, var) = if batch_stats {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ni in 0..n {
                for ci in 0..c {
                    let s = &xv.data[(ni * c + ci) * inner..][..inner];
                    mean[ci] += s.iter().map(|&v| v as f64).sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            for ni in 0..n {
                for ci in 0..c {
                    let s = &xv.data[(ni * c + ci) * inner..][..inner];
                    var[ci] += s.iter().map(|&v| (v as f64 - mean[ci]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m as f64);
            let mean: Vec<f32> = mean.iter().map(|&v| v as f32).collect();
            let var: Vec<f32> = var.iter().map(|&v| v as f32).collect();
            let unbiased = var.iter().map(|&v| if m > 1 { v * m as f32 / (m - 1) as f32 } else { v }).collect();
            self.bn_updates.push(BnUpdate {
                mean_buffer,
                var_buffer,
                mean: mean.clone(),
                var_unbiased: unbiased,
            });
            (mean, var)
        } else {
            (
                self.store.buffers[mean_buffer].value.data.clone(),
                self.store.buffers[var_buffer].value.data.clone(),
            )
        };
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let xv = self.value(x);
        let mut xhat = vec![0.0; xv.len()];
        let mut y = Tensor::zeros(&shape);
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * inner;
                for k in off..off + inner {
                    let h = (xv.data[k] - mean[ci]) * inv_std[ci];
                    xhat[k] = h;
                    y.data[k] = g[ci] * h + b[ci];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(y, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats }, rg)
    }

    /// Layer norm over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId) -> Var {
        let (gamma, beta) = (self.param(gamma), self.param(beta));
        let xv = self.value(x);
        let d = *xv.shape.last().unwrap();
        let rows = xv.len() / d;
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut y = Tensor::zeros(&xv.shape);
        for r in 0..rows {
            let s = &xv.data[r * d..][..d];
            let mean = s.iter().sum::<f32>() / d as f32;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / d as f32;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (s[j] - mean) * is;
                xhat[r * d + j] = h;
                y.data[r * d + j] = g[j] * h + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(y, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, rg)
    }

    pub fn act(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        let y = Tensor::new(xv.shape.clone(), xv.data.iter().map(|&v| kind.forward(v)).collect());
        let rg = self.rg(x);
        self.push(y, Op::Act { x, kind }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape, bv.shape, "add shape mismatch");
        let y = Tensor::new(av.shape.clone(), av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect());
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Add { a, b }, rg)
    }

    /// `x[n, c, ...] * s[n, c]`.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Var {
        let (xv, sv) = (self.value(x), self.value(s));
        let (n, c) = (xv.shape[0], xv.shape[1]);
        assert_eq!(sv.shape, vec![n, c]);
        let inner = xv.len() / (n * c);
        let mut y = xv.clone();
        for (k, chunk) in y.data.chunks_mut(inner).enumerate() {
            let f = sv.data[k];
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        let rg = self.rg(x) || self.rg(s);
        self.push(y, Op::ScaleChannels { x, s }, rg)
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c) = (xv.shape[0], xv.shape[1]);
        let inner = xv.len() / (n * c);
        let data = xv.data.chunks(inner).map(|s| s.iter().sum::<f32>() / inner as f32).collect();
        let rg = self.rg(x);
        self.push(Tensor::new(vec![n, c], data), Op::GlobalAvgPool { x }, rg)
    }

    /// `x[..., d] @ w[o, d]^T + b[o]`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Var {
        let w = self.param(w);
        let b = b.map(|b| self.param(b));
        let (xv, wv) = (self.value(x), self.value(w));
        let (o, d) = (wv.shape[0], wv.shape[1]);
        assert_eq!(*xv.shape.last().unwrap(), d, "linear input {:?} vs weight {:?}", xv.shape, wv.shape);
        let rows = xv.len() / d;
        let mut shape = xv.shape.clone();
        *shape.last_mut().unwrap() = o;
        let mut y = Tensor::zeros(&shape);
        if let Some(b) = b {
            let bv = &self.value(b).data;
            for r in 0..rows {
                y.data[r * o..(r + 1) * o].copy_from_slice(bv);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        let (xv, wv) = (self.value(x), self.value(w));
        gemm(rows, d, o, &xv.data, false, &wv.data, true, beta, &mut y.data);
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(y, Op::Linear { x, w, b }, rg)
    }

    pub fn max_pool(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let mut y = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = vec![0u32; y.len()];
        for nc in 0..n * c {
            let plane = &xv.data[nc * h * w..][..h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut arg = 0usize;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                let idx = iy as usize * w + ix as usize;
                                if plane[idx] > best {
                                    best = plane[idx];
                                    arg = idx;
                                }
                            }
                        }
                    }
                    let o = (nc * ho + oy) * wo + ox;
                    y.data[o] = best;
                    argmax[o] = (nc * h * w + arg) as u32;
                }
            }
        }
        let rg = self.rg(x);
        self.push(y, Op::MaxPool { x, argmax }, rg)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let n = av.shape[0];
        assert_eq!(av.shape[2..], bv.shape[2..]);
        let (sa, sb) = (av.len() / n, bv.len() / n);
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for i in 0..n {
            data.extend_from_slice(&av.data[i * sa..(i + 1) * sa]);
            data.extend_from_slice(&bv.data[i * sb..(i + 1) * sb]);
        }
        let mut shape = av.shape.clone();
        shape[1] += bv.shape[1];
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(shape, data), Op::ConcatChannels { a, b }, rg)
    }

    /// `y[i] = x[index[i]]` with shape `shape`; [`GATHER_ZERO`] reads as 0.
    pub fn gather(&mut self, x: Var, index: Rc<Vec<u32>>, shape: Vec<usize>) -> Var {
        let xv = self.value(x);
        assert_eq!(index.len(), shape.iter().product::<usize>());
        let data = index
            .iter()
            .map(|&i| if i == GATHER_ZERO { 0.0 } else { xv.data[i as usize] })
            .collect();
        let rg = self.rg(x);
        self.push(Tensor::new(shape, data), Op::Gather { x, index }, rg)
    }

    /// Batched `[B, M, K] @ [B, K, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (bs, m, k) = (av.shape[0], av.shape[1], av.shape[2]);
        let n = bv.shape[2];
        assert_eq!(bv.shape[..2], [bs, k]);
        let mut y = Tensor::zeros(&[bs, m, n]);
        for i in 0..bs {
            gemm(m, k, n, &av.data[i * m * k..][..m * k], false, &bv.data[i * k * n..][..k * n], false, 0.0, &mut y.data[i * m * n..][..m * n]);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::MatMul { a, b }, rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let d = *xv.shape.last().unwrap();
        let mut y = xv.clone();
        y.data.chunks_mut(d).for_each(softmax_in_place);
        let rg = self.rg(x);
        self.push(y, Op::Softmax { x }, rg)
    }

    pub fn scale(&mut self, x: Var, c: f32) -> Var {
        let xv = self.value(x);
        let y = Tensor::new(xv.shape.clone(), xv.data.iter().map(|v| v * c).collect());
        let rg = self.rg(x);
        self.push(y, Op::Scale { x, c }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().map(|&v| v as f64).sum::<f64>() as f32;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Mean triplet margin loss over rows `[anchors; positives; negatives]`.
    pub fn triplet_loss(&mut self, x: Var, margin: f32) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape.len(), 2);
        assert_eq!(xv.shape[0] % 3, 0, "triplet batch must stack anchors, positives, negatives");
        let b = xv.shape[0] / 3;
        let total: f64 = (0..b)
            .map(|i| triplet_loss(xv.row(i), xv.row(b + i), xv.row(2 * b + i), margin) as f64)
            .sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar((total / b as f64) as f32), Op::TripletLoss { x, margin }, rg)
    }

    /// Mean softmax cross-entropy of `logits[n, k]`.
    pub fn cross_entropy(&mut self, x: Var, targets: Vec<usize>) -> Var {
        let xv = self.value(x);
        let k = xv.shape[1];
        let mut probs = xv.data.clone();
        probs.chunks_mut(k).for_each(softmax_in_place);
        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -(probs[i * k + t].max(1e-12) as f64).ln())
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(loss as f32), Op::CrossEntropy { x, targets, probs }, rg)
    }

    /// Euclidean norm of each row of a 2-D tensor.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.shape[0];
        let data = (0..n)
            .map(|i| xv.row(i).iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt() as f32)
            .collect();
        let rg = self.rg(x);
        self.push(Tensor::new(vec![n], data), Op::RowNorm { x }, rg)
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        let n_nodes = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n_nodes).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&self.value(loss).shape, 1.0));
        let mut out = Gradients {
            params: (0..self.store.params.len()).map(|_| None).collect(),
            inputs: HashMap::new(),
        };
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let mut emit = |v: Var, t: Tensor| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match grads[v.0].as_mut() {
                    Some(acc) => acc.add_assign(&t),
                    None => grads[v.0] = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    out.inputs.insert(Var(i), g);
                }
                Op::Param(id) => {
                    out.params[*id] = Some(g);
                }
                Op::Conv2d { x, w, stride, pad, groups } => {
                    let (dx, dw) = conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        &g,
                        *stride,
                        *pad,
                        *groups,
                        self.rg(*x),
                        self.rg(*w),
                    );
                    if let Some(dx) = dx {
                        emit(*x, dx);
                    }
                    if let Some(dw) = dw {
                        emit(*w, dw);
                    }
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                    let shape = &g.shape;
                    let (n, c) = (shape[0], shape[1]);
                    let inner = g.len() / (n * c);
                    let m = (n * inner) as f32;
                    let mut sum_dy = vec![0.0f32; c];
                    let mut sum_dy_xhat = vec![0.0f32; c];
                    for ni in 0..n {
                        for ci in 0..c {
                            let off = (ni * c + ci) * inner;
                            for k in off..off + inner {
                                sum_dy[ci] += g.data[k];
                                sum_dy_xhat[ci] += g.data[k] * xhat[k];
                            }
                        }
                    }
                    let gam = &self.value(*gamma).data;
                    if self.rg(*x) {
                        let mut dx = Tensor::zeros(shape);
                        for ni in 0..n {
                            for ci in 0..c {
                                let off = (ni * c + ci) * inner;
                                let f = gam[ci] * inv_std[ci];
                                for k in off..off + inner {
                                    dx.data[k] = if *batch_stats {
                                        f / m * (m * g.data[k] - sum_dy[ci] - xhat[k] * sum_dy_xhat[ci])
                                    } else {
                                        f * g.data[k]
                                    };
                                }
                            }
                        }
                        emit(*x, dx);
                    }
                    emit(*gamma, Tensor::new(vec![c], sum_dy_xhat));
                    emit(*beta, Tensor::new(vec![c], sum_dy));
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let d = *g.shape.last().unwrap();
                    let rows = g.len() / d;
                    let gam = &self.value(*gamma).data;
                    let mut dgamma = vec![0.0f32; d];
                    let mut dbeta = vec![0.0f32; d];
                    let mut dx = Tensor::zeros(&g.shape);
                    for r in 0..rows {
                        let gy = &g.data[r * d..][..d];
                        let xh = &xhat[r * d..][..d];
                        let mut s1 = 0.0f32;
                        let mut s2 = 0.0f32;
                        for j in 0..d {
                            dgamma[j] += gy[j] * xh[j];
                            dbeta[j] += gy[j];
                            let gh = gy[j] * gam[j];
                            s1 += gh;
                            s2 += gh * xh[j];
                        }
                        let f = inv_std[r] / d as f32;
                        for j in 0..d {
                            dx.data[r * d + j] = f * (d as f32 * gy[j] * gam[j] - s1 - xh[j] * s2);
                        }
                    }
                    emit(*x, dx);
                    emit(*gamma, Tensor::new(vec![d], dgamma));
                    emit(*beta, Tensor::new(vec![d], dbeta));
                }
                Op::Act { x, kind } => {
                    let (xv, yv) = (self.value(*x), &node.value);
                    let data = g
                        .data
                        .iter()
                        .zip(xv.data.iter().zip(&yv.data))
                        .map(|(gy, (&xi, &yi))| gy * kind.derivative(xi, yi))
                        .collect();
                    emit(*x, Tensor::new(g.shape.clone(), data));
                }
                Op::Add { a, b } => {
                    emit(*a, g.clone());
                    emit(*b, g);
                }
                Op::ScaleChannels { x, s } => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let inner = xv.len() / sv.len();
                    if self.rg(*s) {
                        let ds = g
                            .data
                            .chunks(inner)
                            .zip(xv.data.chunks(inner))
                            .map(|(gy, xs)| gy.iter().zip(xs).map(|(a, b)| a * b).sum())
                            .collect();
                        emit(*s, Tensor::new(sv.shape.clone(), ds));
                    }
                    let mut dx = g;
                    for (k, chunk) in dx.data.chunks_mut(inner).enumerate() {
                        let f = sv.data[k];
                        chunk.iter_mut().for_each(|v| *v *= f);
                    }
                    emit(*x, dx);
                }
                Op::GlobalAvgPool { x } => {
                    let xs = &self.value(*x).shape;
                    let inner: usize = xs[2..].iter().product();
                    let mut dx = Tensor::zeros(xs);
                    for (k, chunk) in dx.data.chunks_mut(inner).enumerate() {
                        chunk.fill(g.data[k] / inner as f32);
                    }
                    emit(*x, dx);
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (o, d) = (wv.shape[0], wv.shape[1]);
                    let rows = xv.len() / d;
                    if self.rg(*x) {
                        let mut dx = Tensor::zeros(&xv.shape);
                        gemm(rows, o, d, &g.data, false, &wv.data, false, 0.0, &mut dx.data);
                        emit(*x, dx);
                    }
                    if self.rg(*w) {
                        let mut dw = Tensor::zeros(&wv.shape);
                        gemm(o, rows, d, &g.data, true, &xv.data, false, 0.0, &mut dw.data);
                        emit(*w, dw);
                    }
                    if let Some(b) = b {
                        let mut db = vec![0.0f32; o];
                        for r in 0..rows {
                            for (acc, v) in db.iter_mut().zip(&g.data[r * o..(r + 1) * o]) {
                                *acc += v;
                            }
                        }
                        emit(*b, Tensor::new(vec![o], db));
                    }
                }
                Op::MaxPool { x, argmax } => {
                    let mut dx = Tensor::zeros(&self.value(*x).shape);
                    for (gy, &a) in g.data.iter().zip(argmax) {
                        dx.data[a as usize] += gy;
                    }
                    emit(*x, dx);
                }
                Op::ConcatChannels { a, b } => {
                    let (sa_shape, sb_shape) = (self.value(*a).shape.clone(), self.value(*b).shape.clone());
                    let n = sa_shape[0];
                    let sa: usize = sa_shape[1..].iter().product();
                    let sb: usize = sb_shape[1..].iter().product();
                    let mut da = Vec::with_capacity(n * sa);
                    let mut db = Vec::with_capacity(n * sb);
                    for i in 0..n {
                        let chunk = &g.data[i * (sa + sb)..(i + 1) * (sa + sb)];
                        da.extend_from_slice(&chunk[..sa]);
                        db.extend_from_slice(&chunk[sa..]);
                    }
                    emit(*a, Tensor::new(sa_shape, da));
                    emit(*b, Tensor::new(sb_shape, db));
                }
                Op::Gather { x, index } => {
                    let mut dx = Tensor::zeros(&self.value(*x).shape);
                    for (gy, &k) in g.data.iter().zip(index.iter()) {
                        if k != GATHER_ZERO {
                            dx.data[k as usize] += gy;
                        }
                    }
                    emit(*x, dx);
                }
                Op::MatMul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (bs, m, k) = (av.shape[0], av.shape[1], av.shape[2]);
                    let n = bv.shape[2];
                    if self.rg(*a) {
                        let mut da = Tensor::zeros(&av.shape);
                        for i in 0..bs {
                            gemm(m, n, k, &g.data[i * m * n..][..m * n], false, &bv.data[i * k * n..][..k * n], true, 0.0, &mut da.data[i * m * k..][..m * k]);
                        }
                        emit(*a, da);
                    }
                    if self.rg(*b) {
                        let mut db = Tensor::zeros(&bv.shape);
                        for i in 0..bs {
                            gemm(k, m, n, &av.data[i * m * k..][..m * k], true, &g.data[i * m * n..][..m * n], false, 0.0, &mut db.data[i * k * n..][..k * n]);
                        }
                        emit(*b, db);
                    }
                }
                Op::Softmax { x } => {
                    let d = *g.shape.last().unwrap();
                    let y = &node.value;
                    let mut dx = Tensor::zeros(&g.shape);
                    for r in 0..g.len() / d {
                        let (gy, yy) = (&g.data[r * d..][..d], &y.data[r * d..][..d]);
                        let dot: f32 = gy.iter().zip(yy).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            dx.data[r * d + j] = yy[j] * (gy[j] - dot);
                        }
                    }
                    emit(*x, dx);
                }
                Op::Scale { x, c } => {
                    let mut dx = g;
                    dx.data.iter_mut().for_each(|v| *v *= c);
                    emit(*x, dx);
                }
                Op::Sum { x } => {
                    emit(*x, Tensor::full(&self.value(*x).shape, g.item()));
                }
                Op::TripletLoss { x, margin } => {
                    let xv = self.value(*x);
                    let b = xv.shape[0] / 3;
                    let d = xv.shape[1];
                    let scale = g.item() / b as f32;
                    let mut dx = Tensor::zeros(&xv.shape);
                    for i in 0..b {
                        let (ga, gp, gn) = triplet_loss_grad(xv.row(i), xv.row(b + i), xv.row(2 * b + i), *margin);
                        for (row, gr) in [(i, ga), (b + i, gp), (2 * b + i, gn)] {
                            for (dst, v) in dx.data[row * d..(row + 1) * d].iter_mut().zip(gr) {
                                *dst += v * scale;
                            }
                        }
                    }
                    emit(*x, dx);
                }
                Op::CrossEntropy { x, targets, probs } => {
                    let k = self.value(*x).shape[1];
                    let scale = g.item() / targets.len() as f32;
                    let mut dx = Tensor::new(self.value(*x).shape.clone(), probs.clone());
                    for (i, &t) in targets.iter().enumerate() {
                        dx.data[i * k + t] -= 1.0;
                    }
                    dx.data.iter_mut().for_each(|v| *v *= scale);
                    emit(*x, dx);
                }
                Op::RowNorm { x } => {
                    let xv = self.value(*x);
                    let d = xv.shape[1];
                    let mut dx = Tensor::zeros(&xv.shape);
                    for i in 0..xv.shape[0] {
                        let norm = node.value.data[i];
                        if norm > 0.0 {
                            let f = g.data[i] / norm;
                            for j in 0..d {
                                dx.data[i * d + j] = f * xv.data[i * d + j];
                            }
                        }
                    }
                    emit(*x, dx);
                }
            }
        }
        out
    }
}

fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
