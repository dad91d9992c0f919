//! Integrated-gradients attribution and heat-map rendering.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::nn::{Graph, Mode, ParamStore, Var};
use crate::raster::{to_u8, FloatImage};
use crate::triplets::augment::AugConfig;
use crate::triplets::stack_images;

const CHUNK: usize = 8;

/// A scalar function of an image, differentiable with respect to its pixels.
pub trait Functional {
    /// `F(x)` and `dF/dx` for every image of the batch.
    fn value_and_grad(&self, batch: &[FloatImage]) -> Result<Vec<(f64, FloatImage)>>;
}

/// Functional built on the autograd graph; `head` maps the `[n, ...]` input to `[n]` scalars.
pub struct GraphFunctional<'a> {
    pub store: &'a ParamStore,
    pub head: Box<dyn Fn(&mut Graph, Var) -> Var + 'a>,
}

impl Functional for GraphFunctional<'_> {
    fn value_and_grad(&self, batch: &[FloatImage]) -> Result<Vec<(f64, FloatImage)>> {
        let refs: Vec<&FloatImage> = batch.iter().collect();
        let mut g = Graph::new(self.store, Mode::Eval);
        let x = g.input(stack_images(&refs), true);
        let y = (self.head)(&mut g, x);
        if g.shape(y) != [batch.len()] {
            return Err(Error::Shape(format!("functional must return one scalar per image, got {:?}", g.shape(y))));
        }
        let values: Vec<f64> = g.value(y).data.iter().map(|&v| v as f64).collect();
        let total = g.sum(y);
        let grads = g.backward(total);
        let dx = grads.input(x).ok_or(Error::NonFiniteGradient)?;
        let per = dx.len() / batch.len().max(1);
        Ok(batch
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (img, v))| (v, FloatImage { width: img.width, height: img.height, data: dx.data[i * per..(i + 1) * per].to_vec() }))
            .collect())
    }
}

/// Scalar output of the encoder that is attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    EmbeddingNorm,
    Component(usize),
    /// Attack minus original logit; needs a classifier head.
    AttackLogit,
}

pub fn encoder_functional(model: &EncoderModel, target: Target) -> Result<GraphFunctional<'_>> {
    let d = model.embedding_dim();
    let head: Box<dyn Fn(&mut Graph, Var) -> Var + '_> = match target {
        Target::EmbeddingNorm => Box::new(move |g, x| {
            let e = model.forward(g, x);
            g.row_norm(e)
        }),
        Target::Component(k) if k < d => Box::new(move |g, x| {
            let e = model.forward(g, x);
            let n = g.shape(e)[0];
            g.gather(e, (0..n).map(|i| (i * d + k) as u32).collect::<Vec<_>>().into(), vec![n])
        }),
        Target::Component(k) => return Err(Error::Config(format!("embedding component {k} out of range (dim {d})"))),
        Target::AttackLogit => {
            let cls = model.head.as_ref().ok_or_else(|| Error::Config("model has no classifier head".into()))?;
            Box::new(move |g, x| {
                let e = model.forward(g, x);
                let l = cls.forward(g, e);
                let n = g.shape(l)[0];
                let att = g.gather(l, (0..n).map(|i| (2 * i + 1) as u32).collect::<Vec<_>>().into(), vec![n]);
                let orig = g.gather(l, (0..n).map(|i| (2 * i) as u32).collect::<Vec<_>>().into(), vec![n]);
                let neg = g.scale(orig, -1.0);
                g.add(att, neg)
            })
        }
    };
    Ok(GraphFunctional { store: &model.store, head })
}

/// All-black image in normalized input space.
pub fn black_baseline(width: usize, height: usize, norm: &AugConfig) -> FloatImage {
    let mut img = FloatImage::zeros(width, height);
    for c in 0..3 {
        let v = -norm.mean[c] / norm.std[c];
        img.plane_mut(c).fill(v);
    }
    img
}

/// Right Riemann sum of the gradient along the straight path from `baseline` to `input`.
pub fn integrated_gradients(f: &dyn Functional, input: &FloatImage, baseline: &FloatImage, steps: usize) -> Result<FloatImage> {
    if steps == 0 {
        return Err(Error::Config("integrated gradients needs steps >= 1".into()));
    }
    if (input.width, input.height, input.data.len()) != (baseline.width, baseline.height, baseline.data.len()) {
        return Err(Error::Shape("input and baseline differ in shape".into()));
    }
    let mut total = vec![0.0f64; input.data.len()];
    let ks: Vec<usize> = (1..=steps).collect();
    for chunk in ks.chunks(CHUNK) {
        let batch: Vec<FloatImage> = chunk
            .iter()
            .map(|&k| {
                let a = k as f32 / steps as f32;
                let data = baseline.data.iter().zip(&input.data).map(|(&b, &x)| b + a * (x - b)).collect();
                FloatImage { width: input.width, height: input.height, data }
            })
            .collect();
        for (_, grad) in f.value_and_grad(&batch)? {
            if grad.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient);
            }
            total.iter_mut().zip(&grad.data).for_each(|(t, &g)| *t += g as f64);
        }
    }
    let data = total
        .iter()
        .zip(input.data.iter().zip(&baseline.data))
        .map(|(&t, (&x, &b))| ((x - b) as f64 * t / steps as f64) as f32)
        .collect();
    Ok(FloatImage { width: input.width, height: input.height, data })
}

/// `F(input) - F(baseline)`, the quantity the attributions should sum to.
pub fn output_difference(f: &dyn Functional, input: &FloatImage, baseline: &FloatImage) -> Result<f64> {
    let v = f.value_and_grad(&[input.clone(), baseline.clone()])?;
    Ok(v[0].0 - v[1].0)
}

/// Per-pixel attribution magnitude summed over channels.
pub fn magnitude(map: &FloatImage) -> Vec<f32> {
    let n = map.width * map.height;
    (0..n).map(|i| (0..3).map(|c| map.data[c * n + i].abs()).sum()).collect()
}

/// Mean magnitude inside `[x0, x1) x [y0, y1)` divided by the mean outside.
pub fn region_mass_ratio(map: &FloatImage, rect: (usize, usize, usize, usize)) -> f64 {
    let (x0, y0, x1, y1) = rect;
    let mag = magnitude(map);
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0f64, 0usize, 0.0f64, 0usize);
    for (i, &m) in mag.iter().enumerate() {
        let (x, y) = (i % map.width, i / map.width);
        if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
            inside += m as f64;
            n_in += 1;
        } else {
            outside += m as f64;
            n_out += 1;
        }
    }
    (inside / n_in.max(1) as f64) / (outside / n_out.max(1) as f64)
}

fn heat_color(h: f32) -> [f32; 3] {
    [(3.0 * h).min(1.0), (3.0 * h - 1.0).clamp(0.0, 1.0), (3.0 * h - 2.0).clamp(0.0, 1.0)].map(|v| v * 255.0)
}

/// Blends a normalized heat map of `map` over `input`; zero attribution leaves pixels unchanged.
pub fn render_attribution(map: &FloatImage, input: &RgbImage) -> Result<RgbImage> {
    if (map.width as u32, map.height as u32) != input.dimensions() {
        return Err(Error::Shape(format!(
            "attribution map is {}x{}, image is {:?}",
            map.width,
            map.height,
            input.dimensions()
        )));
    }
    let mag = magnitude(map);
    let max = mag.iter().cloned().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return Ok(input.clone());
    }
    Ok(RgbImage::from_fn(input.width(), input.height(), |x, y| {
        let h = mag[y as usize * map.width + x as usize] / max;
        let a = 0.7 * h;
        let p = input.get_pixel(x, y).0;
        let c = heat_color(h);
        Rgb(std::array::from_fn(|k| to_u8(p[k] as f32 * (1.0 - a) + c[k] * a)))
    }))
}
