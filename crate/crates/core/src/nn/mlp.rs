//! Small fully connected networks with manual backprop.

use rand::Rng;

use super::tensor::{ParamId, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.2 * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.2
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    act: Activation,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().unwrap()
    }
}

impl Mlp {
    /// Hidden layers use `hidden_act`; the last layer is linear.
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        sizes: &[usize],
        hidden_act: Activation,
        rng: &mut R,
    ) -> Self {
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| Layer {
                weight: params.add(format!("{prefix}.l{l}.weight"), Tensor::glorot(w[1], w[0], rng)),
                bias: params.add(format!("{prefix}.l{l}.bias"), Tensor::zeros(w[1], 1)),
                act: if l + 1 == n {
                    Activation::Identity
                } else {
                    hidden_act
                },
            })
            .collect();
        Mlp { layers }
    }

    pub fn bind(params: &ParamSet, prefix: &str, num_layers: usize, hidden_act: Activation) -> Option<Self> {
        let layers = (0..num_layers)
            .map(|l| {
                Some(Layer {
                    weight: params.id(&format!("{prefix}.l{l}.weight"))?,
                    bias: params.id(&format!("{prefix}.l{l}.bias"))?,
                    act: if l + 1 == num_layers {
                        Activation::Identity
                    } else {
                        hidden_act
                    },
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Mlp { layers })
    }

    pub fn weight_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }

    pub fn output_size(&self, params: &ParamSet) -> usize {
        params[self.layers.last().unwrap().weight].rows()
    }

    pub fn forward(&self, params: &ParamSet, x: &[f64]) -> MlpCache {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            post: Vec::with_capacity(self.layers.len()),
        };
        let mut input = x.to_vec();
        for layer in &self.layers {
            let mut pre = params[layer.weight].mul_vec(&input);
            for (p, b) in pre.iter_mut().zip(params[layer.bias].data()) {
                *p += b;
            }
            let post: Vec<f64> = pre.iter().map(|&v| layer.act.apply(v)).collect();
            cache.inputs.push(input);
            cache.pre.push(pre);
            input = post.clone();
            cache.post.push(post);
        }
        cache
    }

    /// Accumulates parameter gradients (scaled by `scale`) and returns dL/dx.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &MlpCache,
        d_out: &[f64],
        grads: Option<&mut ParamSet>,
        scale: f64,
    ) -> Vec<f64> {
        let mut grads = grads;
        let mut d = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            for (j, dj) in d.iter_mut().enumerate() {
                *dj *= layer.act.grad(cache.pre[l][j], cache.post[l][j]);
            }
            if let Some(g) = grads.as_deref_mut() {
                g[layer.weight].add_outer(&d, &cache.inputs[l], scale);
                for (b, dj) in g[layer.bias].data_mut().iter_mut().zip(&d) {
                    *b += scale * dj;
                }
            }
            let mut dx = vec![0.0; cache.inputs[l].len()];
            params[layer.weight].matvec_t_acc(&d, &mut dx);
            d = dx;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded(9);
        let mut p = ParamSet::new();
        let mlp = Mlp::register(&mut p, "m", &[3, 5, 4, 2], Activation::Tanh, &mut rng);
        let x = vec![0.3, -0.7, 0.2];
        let w = [0.5, -1.5];
        let loss = |p: &ParamSet, x: &[f64]| {
            let o = mlp.forward(p, x);
            o.output()[0] * w[0] + o.output()[1] * w[1]
        };
        let cache = mlp.forward(&p, &x);
        let mut g = p.zeros_like();
        let dx = mlp.backward(&p, &cache, &w, Some(&mut g), 1.0);
        let h = 1e-6;
        for k in 0..p.len() {
            for i in 0..p.tensors()[k].len() {
                let mut q = p.clone();
                q.tensors_mut()[k].data_mut()[i] += h;
                let up = loss(&q, &x);
                q.tensors_mut()[k].data_mut()[i] -= 2.0 * h;
                let num = (up - loss(&q, &x)) / (2.0 * h);
                assert!((num - g.tensors()[k].data()[i]).abs() < 1e-7);
            }
        }
        for j in 0..3 {
            let mut xp = x.clone();
            xp[j] += h;
            let up = loss(&p, &xp);
            xp[j] -= 2.0 * h;
            assert!(((up - loss(&p, &xp)) / (2.0 * h) - dx[j]).abs() < 1e-7);
        }
    }
}
