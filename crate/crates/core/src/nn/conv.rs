//! 2-D convolution kernels (im2col + GEMM, direct loops for depthwise).

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], w: &[usize], stride: usize, pad: usize, groups: usize) -> Self {
        let (n, c, h, wd) = (x[0], x[1], x[2], x[3]);
        let (o, k) = (w[0], w[2]);
        assert_eq!(w[1] * groups, c, "conv weight {w:?} incompatible with input {x:?}");
        assert_eq!(o % groups, 0);
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "input {x:?} smaller than kernel");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        Self { n, c, h, w: wd, o, k, stride, pad, groups, ho, wo }
    }

    fn is_depthwise(&self) -> bool {
        self.groups == self.c && self.o == self.c && self.groups > 1
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Row-major `c = a @ b + beta * c` with optional operand transposes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    beta: f32,
    c: &mut [f32],
) {
    // Row-major operands; a is m x k (or k x m when transposed), b is k x n (or n x k).
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the strides above describe in-bounds row-major views of the
    // slices, whose lengths were checked against the operand dimensions.
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Unrolls channels `c0..c0+cn` of one sample into a `(cn*k*k) x (ho*wo)` matrix.
fn im2col(x: &[f32], g: &ConvGeom, c0: usize, cn: usize, col: &mut [f32]) {
    let (h, w, k, s, p) = (g.h as isize, g.w as isize, g.k, g.stride as isize, g.pad as isize);
    let hw = g.ho * g.wo;
    for c in 0..cn {
        let plane = &x[(c0 + c) * g.h * g.w..(c0 + c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * hw..][..hw];
                for oy in 0..g.ho {
                    let iy = oy as isize * s - p + ky as isize;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= h {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox as isize * s - p + kx as isize;
                        *d = if ix < 0 || ix >= w { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f32], g: &ConvGeom, c0: usize, cn: usize, dx: &mut [f32]) {
    let (h, w, k, s, p) = (g.h as isize, g.w as isize, g.k, g.stride as isize, g.pad as isize);
    let hw = g.ho * g.wo;
    for c in 0..cn {
        let plane = &mut dx[(c0 + c) * g.h * g.w..(c0 + c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * hw..][..hw];
                for oy in 0..g.ho {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let base = iy as usize * g.w;
                    for ox in 0..g.wo {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < w {
                            plane[base + ix as usize] += row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(x: &Tensor, w: &Tensor, stride: usize, pad: usize, groups: usize) -> Tensor {
    let g = ConvGeom::new(&x.shape, &w.shape, stride, pad, groups);
    let mut y = Tensor::zeros(&[g.n, g.o, g.ho, g.wo]);
    let in_sz = g.c * g.h * g.w;
    let out_sz = g.o * g.ho * g.wo;
    if g.is_depthwise() {
        for n in 0..g.n {
            depthwise_forward(&x.data[n * in_sz..][..in_sz], &w.data, &g, &mut y.data[n * out_sz..][..out_sz]);
        }
        return y;
    }
    let cg = g.c / groups;
    let og = g.o / groups;
    let hw = g.ho * g.wo;
    let kk = cg * g.k * g.k;
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; kk * hw] };
    for n in 0..g.n {
        let xs = &x.data[n * in_sz..][..in_sz];
        let ys = &mut y.data[n * out_sz..][..out_sz];
        for gi in 0..groups {
            let wg = &w.data[gi * og * kk..][..og * kk];
            let yg = &mut ys[gi * og * hw..][..og * hw];
            if g.is_pointwise() {
                sgemm(og, kk, hw, wg, false, &xs[gi * cg * hw..][..kk * hw], false, 0.0, yg);
            } else {
                im2col(xs, &g, gi * cg, cg, &mut col);
                sgemm(og, kk, hw, wg, false, &col, false, 0.0, yg);
            }
        }
    }
    y
}

/// Returns `(dx, dw)`; each is computed only when requested.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    pad: usize,
    groups: usize,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let g = ConvGeom::new(&x.shape, &w.shape, stride, pad, groups);
    let mut dx = need_dx.then(|| Tensor::zeros(&x.shape));
    let mut dw = need_dw.then(|| Tensor::zeros(&w.shape));
    let in_sz = g.c * g.h * g.w;
    let out_sz = g.o * g.ho * g.wo;
    if g.is_depthwise() {
        for n in 0..g.n {
            depthwise_backward(
                &x.data[n * in_sz..][..in_sz],
                &w.data,
                &dy.data[n * out_sz..][..out_sz],
                &g,
                dx.as_mut().map(|t| &mut t.data[n * in_sz..][..in_sz]),
                dw.as_mut().map(|t| &mut t.data[..]),
            );
        }
        return (dx, dw);
    }
    let cg = g.c / groups;
    let og = g.o / groups;
    let hw = g.ho * g.wo;
    let kk = cg * g.k * g.k;
    let pointwise = g.is_pointwise();
    let mut col = if pointwise { Vec::new() } else { vec![0.0; kk * hw] };
    let mut dcol = if pointwise || !need_dx { Vec::new() } else { vec![0.0; kk * hw] };
    for n in 0..g.n {
        let xs = &x.data[n * in_sz..][..in_sz];
        let dys = &dy.data[n * out_sz..][..out_sz];
        for gi in 0..groups {
            let wg = &w.data[gi * og * kk..][..og * kk];
            let dyg = &dys[gi * og * hw..][..og * hw];
            if let Some(dw) = dw.as_mut() {
                let dwg = &mut dw.data[gi * og * kk..][..og * kk];
                if pointwise {
                    sgemm(og, hw, kk, dyg, false, &xs[gi * cg * hw..][..kk * hw], true, 1.0, dwg);
                } else {
                    im2col(xs, &g, gi * cg, cg, &mut col);
                    sgemm(og, hw, kk, dyg, false, &col, true, 1.0, dwg);
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dxs = &mut dx.data[n * in_sz..][..in_sz];
                if pointwise {
                    sgemm(kk, og, hw, wg, true, dyg, false, 1.0, &mut dxs[gi * cg * hw..][..kk * hw]);
                } else {
                    sgemm(kk, og, hw, wg, true, dyg, false, 0.0, &mut dcol);
                    col2im(&dcol, &g, gi * cg, cg, dxs);
                }
            }
        }
    }
    (dx, dw)
}

fn depthwise_forward(x: &[f32], w: &[f32], g: &ConvGeom, y: &mut [f32]) {
    let (k, s, p) = (g.k, g.stride as isize, g.pad as isize);
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..][..g.h * g.w];
        let wc = &w[c * k * k..][..k * k];
        let out = &mut y[c * g.ho * g.wo..][..g.ho * g.wo];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let mut acc = 0.0f32;
                for ky in 0..k {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let row = &plane[iy as usize * g.w..][..g.w];
                    for kx in 0..k {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < g.w as isize {
                            acc += row[ix as usize] * wc[ky * k + kx];
                        }
                    }
                }
                out[oy * g.wo + ox] = acc;
            }
        }
    }
}

fn depthwise_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    mut dx: Option<&mut [f32]>,
    mut dw: Option<&mut [f32]>,
) {
    let (k, s, p) = (g.k, g.stride as isize, g.pad as isize);
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..][..g.h * g.w];
        let wc = &w[c * k * k..][..k * k];
        let grad = &dy[c * g.ho * g.wo..][..g.ho * g.wo];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let go = grad[oy * g.wo + ox];
                if go == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let idx = iy as usize * g.w + ix as usize;
                        if let Some(dw) = dw.as_deref_mut() {
                            dw[c * k * k + ky * k + kx] += go * plane[idx];
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            dx[c * g.h * g.w + idx] += go * wc[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}
