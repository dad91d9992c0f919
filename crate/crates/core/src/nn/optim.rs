use super::params::ParamStore;
use super::tensor::Tensor;

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) {
        if self.m.is_empty() {
            self.m = store.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (i, p) in store.params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in p.value.data.iter_mut().enumerate() {
                let gk = g.data[k];
                *w *= 1.0 - self.lr * self.weight_decay;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        store.add_param("w", Tensor::new(vec![2], vec![1.0, -1.0]));
        let mut opt = AdamW::new(0.1, 0.0);
        opt.step(&mut store, &[Some(Tensor::new(vec![2], vec![3.0, -0.5]))]);
        let w = &store.params[0].value.data;
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_applies_before_moment_update() {
        let mut store = ParamStore::new();
        store.add_param("w", Tensor::new(vec![1], vec![2.0]));
        let mut opt = AdamW::new(0.01, 0.5);
        opt.step(&mut store, &[Some(Tensor::new(vec![1], vec![0.0]))]);
        assert!((store.params[0].value.data[0] - 2.0 * (1.0 - 0.005)).abs() < 1e-6);
    }
}
