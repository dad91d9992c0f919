use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::BnUpdate;
use super::tensor::Tensor;

pub type ParamId = usize;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Trainable parameters plus non-trainable buffers (batch-norm running stats).
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub params: Vec<Param>,
    pub buffers: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param { name: name.into(), value });
        self.params.len() - 1
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.buffers.push(Param { name: name.into(), value });
        self.buffers.len() - 1
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Blends batch statistics into the running buffers.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate], momentum: f32) {
        for u in updates {
            for (r, b) in self.buffers[u.mean_buffer].value.data.iter_mut().zip(&u.mean) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
            for (r, b) in self.buffers[u.var_buffer].value.data.iter_mut().zip(&u.var_unbiased) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }

    /// Every tensor, params first, as `(name, tensor)`.
    pub fn tensors(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().chain(&self.buffers)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut().chain(self.buffers.iter_mut())
    }
}

/// Seeded parameter factory.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: ChaCha8Rng,
}

impl Init<'_> {
    /// He-normal conv weight `[o, i, k, k]` scaled by fan-out.
    pub fn conv(&mut self, name: &str, o: usize, i: usize, k: usize, groups: usize) -> ParamId {
        let fan_out = (k * k * o / groups).max(1);
        let std = (2.0 / fan_out as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let data = (0..o * i * k * k).map(|_| normal.sample(&mut self.rng) as f32).collect();
        self.store.add_param(format!("{name}.weight"), Tensor::new(vec![o, i, k, k], data))
    }

    pub fn linear(&mut self, name: &str, o: usize, i: usize, bias: bool) -> (ParamId, Option<ParamId>) {
        let bound = 1.0 / (i as f32).sqrt();
        let w = (0..o * i).map(|_| self.rng.random_range(-bound..bound)).collect();
        let w = self.store.add_param(format!("{name}.weight"), Tensor::new(vec![o, i], w));
        let b = bias.then(|| {
            let b = (0..o).map(|_| self.rng.random_range(-bound..bound)).collect();
            self.store.add_param(format!("{name}.bias"), Tensor::new(vec![o], b))
        });
        (w, b)
    }

    pub fn bn(&mut self, name: &str, c: usize) -> super::layers::BatchNorm {
        super::layers::BatchNorm {
            gamma: self.store.add_param(format!("{name}.weight"), Tensor::full(&[c], 1.0)),
            beta: self.store.add_param(format!("{name}.bias"), Tensor::zeros(&[c])),
            running_mean: self.store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[c])),
            running_var: self.store.add_buffer(format!("{name}.running_var"), Tensor::full(&[c], 1.0)),
        }
    }

    pub fn ln(&mut self, name: &str, d: usize) -> (ParamId, ParamId) {
        (
            self.store.add_param(format!("{name}.weight"), Tensor::full(&[d], 1.0)),
            self.store.add_param(format!("{name}.bias"), Tensor::zeros(&[d])),
        )
    }
}
