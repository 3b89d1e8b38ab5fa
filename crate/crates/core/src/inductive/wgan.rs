//! Weight-clipped Wasserstein GAN over node embeddings.
//!
//! Embeddings are standardized per dimension before training; samples are
//! mapped back to the original scale.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, ParamSet, RmsProp, Tensor};
use crate::rng::{self, StdRng};

#[derive(Debug, Clone, PartialEq)]
pub struct WganConfig {
    pub noise_dim: usize,
    pub hidden: usize,
    /// Generator updates; each follows `critic_steps` critic updates.
    pub iterations: usize,
    pub critic_steps: usize,
    pub clip: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for WganConfig {
    fn default() -> Self {
        WganConfig {
            noise_dim: 64,
            hidden: 128,
            iterations: 2000,
            critic_steps: 4,
            clip: 0.01,
            lr: 5e-5,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Critic estimate of the Wasserstein distance and generator loss per iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WganHistory {
    pub critic: Vec<f64>,
    pub generator: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Wgan {
    gen_params: ParamSet,
    critic_params: ParamSet,
    generator: Mlp,
    critic: Mlp,
    mean: Vec<f64>,
    std: Vec<f64>,
    noise_dim: usize,
    clip: f64,
}

const GEN_PREFIX: &str = "wgan.gen";
const CRITIC_PREFIX: &str = "wgan.critic";

impl Wgan {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn critic_params(&self) -> &ParamSet {
        &self.critic_params
    }

    /// True when every critic weight lies within `[-clip, clip]`.
    pub fn critic_within_clip(&self) -> bool {
        self.critic_params
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|w| w.abs() <= self.clip))
    }

    pub fn train(embeddings: &EmbeddingTable, cfg: &WganConfig) -> Result<(Wgan, WganHistory)> {
        let rows = embeddings.distinct_rows();
        if rows.len() < 2 {
            return Err(Error::Config("WGAN needs at least two distinct embeddings".into()));
        }
        if cfg.noise_dim == 0 || cfg.hidden == 0 || cfg.batch_size == 0 || cfg.critic_steps == 0 {
            return Err(Error::Config("WGAN sizes must be positive".into()));
        }
        let d = embeddings.dim();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let data: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| (0..d).map(|j| (r[j] - mean[j]) / std[j]).collect())
            .collect();

        let mut rng = rng::seeded(cfg.seed);
        let mut gen_params = ParamSet::new();
        let generator = Mlp::register(
            &mut gen_params,
            GEN_PREFIX,
            &[cfg.noise_dim, cfg.hidden, cfg.hidden, d],
            Activation::LeakyRelu,
            &mut rng,
        );
        let mut critic_params = ParamSet::new();
        let critic = Mlp::register(
            &mut critic_params,
            CRITIC_PREFIX,
            &[d, cfg.hidden, cfg.hidden, 1],
            Activation::LeakyRelu,
            &mut rng,
        );
        let mut gan = Wgan {
            gen_params,
            critic_params,
            generator,
            critic,
            mean,
            std,
            noise_dim: cfg.noise_dim,
            clip: cfg.clip,
        };
        gan.clip_critic();
        let mut gen_opt = RmsProp::new(&gan.gen_params, cfg.lr);
        let mut critic_opt = RmsProp::new(&gan.critic_params, cfg.lr);
        let mut history = WganHistory::default();
        let b = cfg.batch_size;
        let inv_b = 1.0 / b as f64;

        for it in 0..cfg.iterations {
            let mut w_est = 0.0;
            for _ in 0..cfg.critic_steps {
                let mut grads = gan.critic_params.zeros_like();
                let mut real_score = 0.0;
                let mut fake_score = 0.0;
                for _ in 0..b {
                    let real = data.choose(&mut rng).expect("nonempty");
                    let cache = gan.critic.forward(&gan.critic_params, real);
                    real_score += cache.output()[0];
                    gan.critic.backward(&gan.critic_params, &cache, &[-1.0], Some(&mut grads), inv_b);
                    let fake = gan.generate_standardized(&mut rng);
                    let cache = gan.critic.forward(&gan.critic_params, &fake);
                    fake_score += cache.output()[0];
                    gan.critic.backward(&gan.critic_params, &cache, &[1.0], Some(&mut grads), inv_b);
                }
                critic_opt.step(&mut gan.critic_params, &grads);
                gan.clip_critic();
                w_est = (real_score - fake_score) * inv_b;
            }
            let mut grads = gan.gen_params.zeros_like();
            let mut gen_loss = 0.0;
            for _ in 0..b {
                let z = noise(cfg.noise_dim, &mut rng);
                let g_cache = gan.generator.forward(&gan.gen_params, &z);
                let c_cache = gan.critic.forward(&gan.critic_params, g_cache.output());
                gen_loss -= c_cache.output()[0];
                let dx = gan.critic.backward(&gan.critic_params, &c_cache, &[-1.0], None, 1.0);
                gan.generator.backward(&gan.gen_params, &g_cache, &dx, Some(&mut grads), inv_b);
            }
            gen_opt.step(&mut gan.gen_params, &grads);
            if !gan.gen_params.is_finite() || !gan.critic_params.is_finite() || !gen_loss.is_finite() {
                return Err(Error::Numerical(format!("WGAN diverged at iteration {}", it + 1)));
            }
            history.critic.push(w_est);
            history.generator.push(gen_loss * inv_b);
        }
        Ok((gan, history))
    }

    fn clip_critic(&mut self) {
        let c = self.clip;
        for t in self.critic_params.tensors_mut() {
            for w in t.data_mut() {
                *w = w.clamp(-c, c);
            }
        }
    }

    fn generate_standardized(&self, rng: &mut StdRng) -> Vec<f64> {
        let z = noise(self.noise_dim, rng);
        self.generator.forward(&self.gen_params, &z).output().to_vec()
    }

    /// Draws `count` embeddings independently.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<EmbeddingTable> {
        let d = self.dim();
        let mut data = Vec::with_capacity(count * d);
        for _ in 0..count {
            let z = noise(self.noise_dim, rng);
            let out = self.generator.forward(&self.gen_params, &z);
            data.extend(out.output().iter().enumerate().map(|(j, x)| x * self.std[j] + self.mean[j]));
        }
        EmbeddingTable::new(Tensor::from_vec(count, d, data))
    }

    /// All tensors under stable names, for checkpointing.
    pub fn export(&self, out: &mut ParamSet) {
        for (name, t) in self.gen_params.iter().chain(self.critic_params.iter()) {
            out.add(name, t.clone());
        }
        let d = self.dim();
        out.add("wgan.mean", Tensor::from_vec(1, d, self.mean.clone()));
        out.add("wgan.std", Tensor::from_vec(1, d, self.std.clone()));
        out.add("wgan.clip", Tensor::from_vec(1, 1, vec![self.clip]));
    }

    pub fn import(params: &ParamSet) -> Result<Self> {
        let missing = || Error::Checkpoint("missing WGAN tensors".into());
        let mut gen_params = ParamSet::new();
        let mut critic_params = ParamSet::new();
        for (name, t) in params.iter() {
            if name.starts_with(GEN_PREFIX) {
                gen_params.add(name, t.clone());
            } else if name.starts_with(CRITIC_PREFIX) {
                critic_params.add(name, t.clone());
            }
        }
        let generator = Mlp::bind(&gen_params, GEN_PREFIX, 3, Activation::LeakyRelu).ok_or_else(missing)?;
        let critic = Mlp::bind(&critic_params, CRITIC_PREFIX, 3, Activation::LeakyRelu).ok_or_else(missing)?;
        let get = |name: &str| params.id(name).map(|id| params[id].data().to_vec()).ok_or_else(missing);
        let noise_dim = gen_params[gen_params.id("wgan.gen.l0.weight").ok_or_else(missing)?].cols();
        Ok(Wgan {
            gen_params,
            critic_params,
            generator,
            critic,
            mean: get("wgan.mean")?,
            std: get("wgan.std")?,
            noise_dim,
            clip: get("wgan.clip")?[0],
        })
    }
}

fn noise<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WganConfig {
        WganConfig {
            noise_dim: 4,
            hidden: 8,
            iterations: 20,
            batch_size: 8,
            ..WganConfig::default()
        }
    }

    #[test]
    fn shapes_and_clipping() {
        let t = EmbeddingTable::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, -1.0], vec![0.5, 0.5, 0.0]]).unwrap();
        let (gan, hist) = Wgan::train(&t, &small()).unwrap();
        assert!(gan.critic_within_clip());
        assert_eq!(hist.critic.len(), 20);
        let s = gan.sample(5, &mut rng::seeded(0)).unwrap();
        assert_eq!((s.len(), s.dim()), (5, 3));
        assert!(gan.sample(0, &mut rng::seeded(0)).unwrap().is_empty());
        assert_eq!(
            gan.sample(4, &mut rng::seeded(7)).unwrap(),
            gan.sample(4, &mut rng::seeded(7)).unwrap()
        );
    }

    #[test]
    fn needs_two_distinct_rows() {
        let t = EmbeddingTable::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(Wgan::train(&t, &small()).is_err());
    }

    #[test]
    fn export_round_trip() {
        let t = EmbeddingTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (gan, _) = Wgan::train(&t, &small()).unwrap();
        let mut p = ParamSet::new();
        gan.export(&mut p);
        let back = Wgan::import(&p).unwrap();
        assert_eq!(
            gan.sample(3, &mut rng::seeded(1)).unwrap(),
            back.sample(3, &mut rng::seeded(1)).unwrap()
        );
    }
}
