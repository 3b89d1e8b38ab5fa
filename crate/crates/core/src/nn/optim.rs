//! First-order optimizers over a [`ParamSet`].

use super::tensor::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            let p = p.data_mut();
            let g = g.data();
            let m = m.data_mut();
            let v = v.data_mut();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    sq: ParamSet,
}

impl RmsProp {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        RmsProp {
            lr,
            decay: 0.99,
            eps: 1e-8,
            sq: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        for ((p, g), s) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.sq.tensors_mut())
        {
            for ((p, g), s) in p.data_mut().iter_mut().zip(g.data()).zip(s.data_mut()) {
                *s = self.decay * *s + (1.0 - self.decay) * g * g;
                *p -= self.lr * g / (s.sqrt() + self.eps);
            }
        }
    }
}

/// Rescales `grads` so its global norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
