//! Building blocks shared by the backbones.

use std::rc::Rc;

use super::graph::{Activation, Graph, Var, GATHER_ZERO};
use super::params::{Init, ParamId};

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: usize,
    pub running_var: usize,
}

impl BatchNorm {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        g.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var)
    }
}

/// Convolution, batch norm, optional activation.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub weight: ParamId,
    pub bn: BatchNorm,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub act: Option<Activation>,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        groups: usize,
        act: Option<Activation>,
    ) -> Self {
        Self {
            weight: init.conv(&format!("{name}.conv"), cout, cin / groups, k, groups),
            bn: init.bn(&format!("{name}.bn"), cout),
            stride,
            pad: k / 2,
            groups,
            act,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let y = g.conv2d(x, self.weight, self.stride, self.pad, self.groups);
        let y = self.bn.forward(g, y);
        match self.act {
            Some(a) => g.act(y, a),
            None => y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, cin: usize, cout: usize, bias: bool) -> Self {
        let (weight, bias) = init.linear(name, cout, cin, bias);
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        g.linear(x, self.weight, self.bias)
    }
}

/// Squeeze-and-excitation with a hard-sigmoid gate.
#[derive(Debug, Clone)]
pub struct SqueezeExcite {
    pub reduce: Linear,
    pub expand: Linear,
}

impl SqueezeExcite {
    pub fn new(init: &mut Init, name: &str, c: usize, rd: usize) -> Self {
        Self {
            reduce: Linear::new(init, &format!("{name}.conv_reduce"), c, rd, true),
            expand: Linear::new(init, &format!("{name}.conv_expand"), rd, c, true),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let s = g.global_avg_pool(x);
        let s = self.reduce.forward(g, s);
        let s = g.act(s, Activation::Relu);
        let s = self.expand.forward(g, s);
        let s = g.act(s, Activation::HardSigmoid);
        g.scale_channels(x, s)
    }
}

/// Optional 1x1 expansion, depthwise conv, optional SE, 1x1 projection.
#[derive(Debug, Clone)]
pub struct InvertedResidual {
    pub expand: Option<ConvBn>,
    pub dw: ConvBn,
    pub se: Option<SqueezeExcite>,
    pub project: ConvBn,
    pub residual: bool,
}

impl InvertedResidual {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut y = x;
        if let Some(e) = &self.expand {
            y = e.forward(g, y);
        }
        y = self.dw.forward(g, y);
        if let Some(se) = &self.se {
            y = se.forward(g, y);
        }
        y = self.project.forward(g, y);
        if self.residual {
            y = g.add(y, x);
        }
        y
    }
}

/// Pre-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub norm1: (ParamId, ParamId),
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: (ParamId, ParamId),
    pub fc1: Linear,
    pub fc2: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl TransformerLayer {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Self {
        Self {
            norm1: init.ln(&format!("{name}.norm1"), dim),
            qkv: Linear::new(init, &format!("{name}.attn.qkv"), dim, 3 * dim, true),
            proj: Linear::new(init, &format!("{name}.attn.proj"), dim, dim, true),
            norm2: init.ln(&format!("{name}.norm2"), dim),
            fc1: Linear::new(init, &format!("{name}.mlp.fc1"), dim, dim * mlp_ratio, true),
            fc2: Linear::new(init, &format!("{name}.mlp.fc2"), dim * mlp_ratio, dim, true),
            heads,
            dim,
        }
    }

    /// `x`: `[b, t, dim]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = g.layer_norm(x, self.norm1.0, self.norm1.1);
        let h = self.attention(g, h);
        let x = g.add(x, h);
        let h = g.layer_norm(x, self.norm2.0, self.norm2.1);
        let h = self.fc1.forward(g, h);
        let h = g.act(h, Activation::Silu);
        let h = self.fc2.forward(g, h);
        g.add(x, h)
    }

    fn attention(&self, g: &mut Graph, x: Var) -> Var {
        let (b, t) = (g.shape(x)[0], g.shape(x)[1]);
        let (nh, d) = (self.heads, self.dim);
        let hd = d / nh;
        let qkv = self.qkv.forward(g, x);
        // qkv[b, t, which * d + h * hd + e]
        let at = |bi: usize, ti: usize, which: usize, h: usize, e: usize| ((bi * t + ti) * 3 * d + which * d + h * hd + e) as u32;
        let mut qi = Vec::with_capacity(b * nh * t * hd);
        let mut vi = Vec::with_capacity(b * nh * t * hd);
        let mut kti = Vec::with_capacity(b * nh * t * hd);
        for bi in 0..b {
            for h in 0..nh {
                for ti in 0..t {
                    for e in 0..hd {
                        qi.push(at(bi, ti, 0, h, e));
                        vi.push(at(bi, ti, 2, h, e));
                    }
                }
                for e in 0..hd {
                    for ti in 0..t {
                        kti.push(at(bi, ti, 1, h, e));
                    }
                }
            }
        }
        let q = g.gather(qkv, Rc::new(qi), vec![b * nh, t, hd]);
        let kt = g.gather(qkv, Rc::new(kti), vec![b * nh, hd, t]);
        let v = g.gather(qkv, Rc::new(vi), vec![b * nh, t, hd]);
        let scores = g.matmul(q, kt);
        let scores = g.scale(scores, 1.0 / (hd as f32).sqrt());
        let attn = g.softmax(scores);
        let o = g.matmul(attn, v);
        let mut oi = Vec::with_capacity(b * t * d);
        for bi in 0..b {
            for ti in 0..t {
                for h in 0..nh {
                    for e in 0..hd {
                        oi.push((((bi * nh + h) * t + ti) * hd + e) as u32);
                    }
                }
            }
        }
        let o = g.gather(o, Rc::new(oi), vec![b, t, d]);
        self.proj.forward(g, o)
    }
}

/// Index map from `[n, c, h, w]` to `[n * p * p, patches, c]`, zero padding to a multiple of `p`.
pub fn unfold_index(n: usize, c: usize, h: usize, w: usize, p: usize) -> (Vec<u32>, Vec<usize>) {
    let (hp, wp) = (h.div_ceil(p) * p, w.div_ceil(p) * p);
    let (nh, nw) = (hp / p, wp / p);
    let mut idx = Vec::with_capacity(n * hp * wp * c);
    for ni in 0..n {
        for py in 0..p {
            for px in 0..p {
                for by in 0..nh {
                    for bx in 0..nw {
                        let (y, x) = (by * p + py, bx * p + px);
                        for ci in 0..c {
                            idx.push(if y < h && x < w { (((ni * c + ci) * h + y) * w + x) as u32 } else { GATHER_ZERO });
                        }
                    }
                }
            }
        }
    }
    (idx, vec![n * p * p, nh * nw, c])
}

/// Inverse of [`unfold_index`], dropping the padding.
pub fn fold_index(n: usize, c: usize, h: usize, w: usize, p: usize) -> Vec<u32> {
    let (nh, nw) = (h.div_ceil(p), w.div_ceil(p));
    let mut idx = Vec::with_capacity(n * c * h * w);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let (by, py, bx, px) = (y / p, y % p, x / p, x % p);
                    let b = ni * p * p + py * p + px;
                    idx.push(((b * nh * nw + by * nw + bx) * c + ci) as u32);
                }
            }
        }
    }
    idx
}
