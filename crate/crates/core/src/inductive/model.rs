//! Recurrent walk model over embedding space.
//!
//! Inputs are `f(e) ++ time2vec(t)` with `f(e) = W_f e` a learned linear map of
//! the node embedding. For the next position the model picks a cluster from
//! `softmax(W_K o)`, draws a latent `z = mu_k + eps * sigma_k` with
//! `mu_k = W_{mu,k} o` and `sigma_k = exp(W_{sigma,k} o)`, and decodes the
//! next embedding as a diagonal Gaussian `N(W_mu z, exp(W_sigma z)^2)`. The gap
//! to the next event is a log-normal mixture of `f(e_next) ++ o`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{EmbeddingTable, NearestIndex};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::tensor::{axpy, dot};
use crate::nn::{self, check_gradients, GradCheckReport, Lstm, LstmState, ParamId, ParamSet, Tensor, Time2Vec};
use crate::rng;
use crate::tpp::{MixtureHead, MixtureParams, LOG_SIGMA_CLAMP};
use crate::train::{self, LossCurve, OptimConfig, WalkObjective};
use crate::walker::{Walk, WalkStep};

pub const CHECKPOINT_KIND: &str = "inductive";

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InductiveDims {
    pub embed_dim: usize,
    pub time_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    pub components: usize,
}

impl InductiveDims {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("latent_dim", self.latent_dim),
            ("clusters", self.clusters),
            ("components", self.components),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.time_dim < 2 {
            return Err(Error::Config("time_dim must be >= 2".into()));
        }
        Ok(())
    }
}

/// Hyper-parameters of the inductive pipeline besides the embedding and
/// adversarial stages.
#[derive(Debug, Clone, PartialEq)]
pub struct InductiveConfig {
    pub walk_len: usize,
    pub window: Option<usize>,
    pub embed_dim: usize,
    pub time_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    pub components: usize,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for InductiveConfig {
    fn default() -> Self {
        InductiveConfig {
            walk_len: 20,
            window: Some(crate::walker::DEFAULT_WINDOW),
            embed_dim: 128,
            time_dim: 64,
            hidden_dim: 200,
            output_dim: 200,
            latent_dim: 128,
            clusters: 300,
            components: 128,
            beta: 1e-5,
            lr: 1e-3,
            batch_size: 128,
            epochs: 50,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl InductiveConfig {
    pub fn dims(&self) -> InductiveDims {
        InductiveDims {
            embed_dim: self.embed_dim,
            time_dim: self.time_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            latent_dim: self.latent_dim,
            clusters: self.clusters,
            components: self.components,
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InductiveModel {
    params: ParamSet,
    dims: InductiveDims,
    beta: f64,
    time_scale: f64,
    f_v: ParamId,
    t2v: Time2Vec,
    rnn: Lstm,
    cluster_head: ParamId,
    w_mu_k: ParamId,
    w_sigma_k: ParamId,
    w_mu_z: ParamId,
    w_sigma_z: ParamId,
    mix: MixtureHead,
}

/// Latent draw at one position, kept for the backward pass.
struct Latent {
    mu: Vec<f64>,
    raw_log_sigma: Vec<f64>,
    sigma: Vec<f64>,
    eps: Vec<f64>,
    z: Vec<f64>,
}

fn clamp_log_sigma(raw: f64) -> f64 {
    raw.clamp(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
}

fn inside_clamp(raw: f64) -> bool {
    raw.abs() < LOG_SIGMA_CLAMP
}

impl InductiveModel {
    pub fn new(dims: InductiveDims, beta: f64, time_scale: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1), got {beta}")));
        }
        let mut rng = rng::seeded(seed);
        let mut p = ParamSet::new();
        let (dv, dz, dout, k) = (dims.embed_dim, dims.latent_dim, dims.output_dim, dims.clusters);
        let f_v = p.add("ind.f_v", Tensor::uniform(dv, dv, 1.0 / (dv as f64).sqrt(), &mut rng));
        let t2v = Time2Vec::register(&mut p, "ind.t2v", dims.time_dim, time_scale, &mut rng);
        let rnn = Lstm::register(
            &mut p,
            "ind.rnn",
            &[dv + dims.time_dim, dims.hidden_dim, dout],
            &mut rng,
        );
        let s_o = 1.0 / (dout as f64).sqrt();
        let s_z = 1.0 / (dz as f64).sqrt();
        let cluster_head = p.add("ind.cluster_head", Tensor::uniform(k, dout, s_o, &mut rng));
        let w_mu_k = p.add("ind.w_mu_k", Tensor::uniform(k * dz, dout, s_o, &mut rng));
        let w_sigma_k = p.add("ind.w_sigma_k", Tensor::uniform(k * dz, dout, 0.1 * s_o, &mut rng));
        let w_mu_z = p.add("ind.w_mu_z", Tensor::uniform(dv, dz, s_z, &mut rng));
        let w_sigma_z = p.add("ind.w_sigma_z", Tensor::uniform(dv, dz, 0.1 * s_z, &mut rng));
        let mix = MixtureHead::register(&mut p, "ind.mix", dims.components, dv + dout, &mut rng);
        Ok(InductiveModel {
            params: p,
            dims,
            beta,
            time_scale,
            f_v,
            t2v,
            rnn,
            cluster_head,
            w_mu_k,
            w_sigma_k,
            w_mu_z,
            w_sigma_z,
            mix,
        })
    }

    pub fn dims(&self) -> InductiveDims {
        self.dims
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn transform(&self, params: &ParamSet, emb: &[f64]) -> Vec<f64> {
        params[self.f_v].mul_vec(emb)
    }

    fn input(&self, params: &ParamSet, emb: &[f64], t: f64) -> Vec<f64> {
        let dv = self.dims.embed_dim;
        let mut x = self.transform(params, emb);
        x.resize(dv + self.dims.time_dim, 0.0);
        self.t2v.encode(params, t, &mut x[dv..]);
        x
    }

    fn check_embedding(&self, emb: &[f64]) -> Result<()> {
        if emb.len() != self.dims.embed_dim {
            return Err(Error::Dimension(format!(
                "embedding has {} entries, model expects {}",
                emb.len(),
                self.dims.embed_dim
            )));
        }
        Ok(())
    }

    fn check_cluster(&self, k: usize) -> Result<()> {
        if k >= self.dims.clusters {
            return Err(Error::NodeOutOfRange {
                index: k,
                size: self.dims.clusters,
            });
        }
        Ok(())
    }

    pub fn zero_state(&self) -> LstmState {
        self.rnn.zero_state()
    }

    pub fn rnn_step(&self, state: &mut LstmState, emb: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_embedding(emb)?;
        let x = self.input(&self.params, emb, t);
        self.rnn.step(&self.params, state, &x);
        Ok(state.output().to_vec())
    }

    /// `log p(k | o)` for every cluster.
    pub fn cluster_log_posterior(&self, o: &[f64]) -> Vec<f64> {
        nn::log_softmax(&self.params[self.cluster_head].mul_vec(o))
    }

    /// Mean and raw log-scale of the latent for cluster `k`.
    fn latent_params(&self, params: &ParamSet, o: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
        let dz = self.dims.latent_dim;
        let block = |id: ParamId| -> Vec<f64> {
            let w = &params[id];
            (0..dz).map(|r| dot(w.row(k * dz + r), o)).collect()
        };
        (block(self.w_mu_k), block(self.w_sigma_k))
    }

    fn latent(&self, params: &ParamSet, o: &[f64], k: usize, eps: Vec<f64>) -> Latent {
        let (mu, raw_log_sigma) = self.latent_params(params, o, k);
        let sigma: Vec<f64> = raw_log_sigma.iter().map(|r| clamp_log_sigma(*r).exp()).collect();
        let z = (0..mu.len()).map(|d| mu[d] + eps[d] * sigma[d]).collect();
        Latent {
            mu,
            raw_log_sigma,
            sigma,
            eps,
            z,
        }
    }

    fn draw_eps<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dims.latent_dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Reparameterized latent draw for cluster `k`.
    pub fn sample_z<R: Rng + ?Sized>(&self, o: &[f64], k: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check_cluster(k)?;
        let eps = self.draw_eps(rng);
        Ok(self.latent(&self.params, o, k, eps).z)
    }

    /// `KL(N(mu_k, sigma_k^2) || N(0, I))` in closed form.
    pub fn kl_term(&self, o: &[f64], k: usize) -> Result<f64> {
        self.check_cluster(k)?;
        let (mu, raw) = self.latent_params(&self.params, o, k);
        Ok(kl(&mu, &raw))
    }

    /// Decoder mean and raw log-scale for latent `z`.
    pub fn decode(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.params[self.w_mu_z].mul_vec(z),
            self.params[self.w_sigma_z].mul_vec(z),
        )
    }

    /// `log p(k | o) + log N(target; decode(z))` with one latent draw.
    pub fn decoder_log_prob<R: Rng + ?Sized>(&self, o: &[f64], k: usize, target: &[f64], rng: &mut R) -> Result<f64> {
        self.check_cluster(k)?;
        self.check_embedding(target)?;
        let eps = self.draw_eps(rng);
        let lat = self.latent(&self.params, o, k, eps);
        let (mu, raw) = self.decode(&lat.z);
        Ok(self.cluster_log_posterior(o)[k] - gaussian_nll(target, &mu, &raw))
    }

    pub fn time_params(&self, emb: &[f64], o: &[f64]) -> Result<MixtureParams> {
        self.check_embedding(emb)?;
        let f = self.transform(&self.params, emb);
        self.mix.mixture_params(&self.params, &f, o)
    }

    /// Loss of one walk over source nodes with latent noise drawn from `seed`.
    pub fn walk_nll(&self, walk: &Walk, data: &WalkData<'_>, seed: u64) -> Result<f64> {
        let mut scratch = self.params.zeros_like();
        nll_and_grad(self, &self.params, walk, data, seed, &mut scratch)
    }

    pub fn walk_nll_grad(&self, walk: &Walk, data: &WalkData<'_>, seed: u64, grads: &mut ParamSet) -> Result<f64> {
        nll_and_grad(self, &self.params, walk, data, seed, grads)
    }

    pub fn grad_check(&self, walk: &Walk, data: &WalkData<'_>, seed: u64) -> Result<GradCheckReport> {
        let mut grads = self.params.zeros_like();
        self.walk_nll_grad(walk, data, seed, &mut grads)?;
        let mut scratch = self.params.zeros_like();
        Ok(check_gradients(&self.params, &grads, nn::FD_STEP, |p| {
            scratch.zero();
            nll_and_grad(self, p, walk, data, seed, &mut scratch).expect("walk validated above")
        }))
    }

    pub fn train_with(
        &mut self,
        data: &WalkData<'_>,
        cfg: &OptimConfig,
        walks_for_epoch: impl FnMut(usize) -> Result<Vec<Walk>>,
    ) -> Result<LossCurve> {
        data.validate(self)?;
        let mut params = std::mem::take(&mut self.params);
        let objective = Objective { model: self, data };
        let result = train::fit(&mut params, &objective, cfg, walks_for_epoch, |_| {});
        self.params = params;
        result
    }

    pub fn train(&mut self, walks: &[Walk], data: &WalkData<'_>, cfg: &OptimConfig) -> Result<LossCurve> {
        self.train_with(data, cfg, |_| Ok(walks.to_vec()))
    }

    /// Samples one walk in embedding space from a seed embedding.
    pub fn generate_embedding_walk<R: Rng + ?Sized>(
        &self,
        seed_emb: &[f64],
        t0: f64,
        max_len: usize,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.check_embedding(seed_emb)?;
        let mut state = self.zero_state();
        let mut embs = vec![seed_emb.to_vec()];
        let mut times = vec![t0];
        while embs.len() < max_len {
            let o = self.rnn_step(&mut state, embs.last().unwrap(), *times.last().unwrap())?;
            let post = nn::softmax(&self.params[self.cluster_head].mul_vec(&o));
            let k = nn::sample_categorical(&post, rng);
            let z = self.sample_z(&o, k, rng)?;
            let (mu, raw) = self.decode(&z);
            let emb: Vec<f64> = mu
                .iter()
                .zip(&raw)
                .map(|(m, r)| m + clamp_log_sigma(*r).exp() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let dt = self.time_params(&emb, &o)?.sample(rng);
            times.push(times.last().unwrap() + dt);
            embs.push(emb);
        }
        Ok((embs, times))
    }

    /// One walk per seed over the generated node set `nodes`. Seed `i` uses a
    /// stream derived from `(seed, i)`; every embedding, the seed's included,
    /// is mapped to its cosine-nearest row of `nodes`.
    pub fn generate_walks(
        &self,
        seeds: &[(Vec<f64>, f64)],
        nodes: &NearestIndex,
        max_len: usize,
        seed: u64,
    ) -> Result<Vec<Walk>> {
        if max_len < 2 {
            return Err(Error::Config("generation length must be >= 2".into()));
        }
        if nodes.table().dim() != self.dims.embed_dim {
            return Err(Error::Dimension("generated node table has the wrong width".into()));
        }
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, (emb, t0))| {
                let mut r = rng::derived(seed, i as u64);
                let (embs, times) = self.generate_embedding_walk(emb, *t0, max_len, &mut r)?;
                let steps = embs
                    .iter()
                    .zip(times)
                    .map(|(e, t)| Ok(WalkStep::new(nodes.query(e)?, t)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Walk { steps, ended: false })
            })
            .collect()
    }

    pub fn export(&self, out: &mut ParamSet, meta: &mut BTreeMap<String, String>) {
        for (name, t) in self.params.iter() {
            out.add(name, t.clone());
        }
        meta.insert("beta".into(), self.beta.to_string());
        meta.insert("time_scale".into(), self.time_scale.to_string());
    }

    pub fn import(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected an {CHECKPOINT_KIND} checkpoint, found `{}`",
                ck.kind
            )));
        }
        let src = &ck.params;
        let mut p = ParamSet::new();
        for (name, t) in src.iter() {
            if name.starts_with("ind.") {
                p.add(name, t.clone());
            }
        }
        let missing = |what: &str| Error::Checkpoint(format!("missing tensor {what}"));
        let id = |name: &str| p.id(name).ok_or_else(|| missing(name));
        let f_v = id("ind.f_v")?;
        let cluster_head = id("ind.cluster_head")?;
        let w_mu_k = id("ind.w_mu_k")?;
        let w_sigma_k = id("ind.w_sigma_k")?;
        let w_mu_z = id("ind.w_mu_z")?;
        let w_sigma_z = id("ind.w_sigma_z")?;
        let hidden = p[id("ind.rnn.l0.bias")?].rows() / 4;
        let t2v = Time2Vec::bind(&p, "ind.t2v").ok_or_else(|| missing("ind.t2v"))?;
        let rnn = Lstm::bind(&p, "ind.rnn", 2).ok_or_else(|| missing("ind.rnn"))?;
        let mix = MixtureHead::bind(&p, "ind.mix").ok_or_else(|| missing("ind.mix"))?;
        let (k, dout) = p[cluster_head].shape();
        let dims = InductiveDims {
            embed_dim: p[f_v].rows(),
            time_dim: t2v.dim(),
            hidden_dim: hidden,
            output_dim: dout,
            latent_dim: p[w_mu_z].cols(),
            clusters: k,
            components: mix.components(),
        };
        let consistent = rnn.output_size() == dout
            && rnn.input_size() == dims.embed_dim + dims.time_dim
            && p[w_mu_k].shape() == (k * dims.latent_dim, dout)
            && p[w_sigma_k].shape() == p[w_mu_k].shape()
            && p[w_sigma_z].shape() == p[w_mu_z].shape()
            && p[w_mu_z].rows() == dims.embed_dim
            && mix.features() == dims.embed_dim + dout;
        if !consistent {
            return Err(Error::Checkpoint("inconsistent tensor shapes".into()));
        }
        Ok(InductiveModel {
            params: p,
            dims,
            beta: ck.meta_get("beta")?,
            time_scale: ck.meta_get("time_scale")?,
            f_v,
            t2v,
            rnn,
            cluster_head,
            w_mu_k,
            w_sigma_k,
            w_mu_z,
            w_sigma_z,
            mix,
        })
    }
}

/// Per-node embeddings and cluster labels that training walks refer to.
#[derive(Debug, Clone, Copy)]
pub struct WalkData<'a> {
    pub embeddings: &'a EmbeddingTable,
    pub clusters: &'a [usize],
}

impl WalkData<'_> {
    fn validate(&self, model: &InductiveModel) -> Result<()> {
        if self.embeddings.len() != self.clusters.len() {
            return Err(Error::Dimension("one cluster label per embedding required".into()));
        }
        if self.embeddings.dim() != model.dims.embed_dim {
            return Err(Error::Dimension(format!(
                "embeddings have width {}, model expects {}",
                self.embeddings.dim(),
                model.dims.embed_dim
            )));
        }
        if let Some(&k) = self.clusters.iter().find(|&&k| k >= model.dims.clusters) {
            return Err(Error::NodeOutOfRange {
                index: k,
                size: model.dims.clusters,
            });
        }
        Ok(())
    }
}

struct Objective<'m, 'd> {
    model: &'m InductiveModel,
    data: &'m WalkData<'d>,
}

impl WalkObjective for Objective<'_, '_> {
    fn loss_and_grad(&self, params: &ParamSet, walk: &Walk, seed: u64, grads: &mut ParamSet) -> Result<f64> {
        nll_and_grad(self.model, params, walk, self.data, seed, grads)
    }
}

fn kl(mu: &[f64], raw_log_sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(raw_log_sigma)
        .map(|(m, r)| {
            let ls = clamp_log_sigma(*r);
            0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls)
        })
        .sum()
}

/// `-log N(x; mu, exp(clamp(raw))^2)` with diagonal covariance.
fn gaussian_nll(x: &[f64], mu: &[f64], raw_log_sigma: &[f64]) -> f64 {
    (0..x.len())
        .map(|j| {
            let ls = clamp_log_sigma(raw_log_sigma[j]);
            let u = (x[j] - mu[j]) / ls.exp();
            ls + HALF_LN_2PI + 0.5 * u * u
        })
        .sum()
}

fn nll_and_grad(
    model: &InductiveModel,
    params: &ParamSet,
    walk: &Walk,
    data: &WalkData<'_>,
    seed: u64,
    grads: &mut ParamSet,
) -> Result<f64> {
    let steps = &walk.steps;
    if steps.len() < 2 {
        return Err(Error::Config("walk needs at least two tuples".into()));
    }
    walk.check_increasing()?;
    let n = data.embeddings.len();
    if let Some(s) = steps.iter().find(|s| s.node >= n) {
        return Err(Error::NodeOutOfRange { index: s.node, size: n });
    }
    let dims = model.dims;
    let (dv, dz) = (dims.embed_dim, dims.latent_dim);
    let targets = steps.len() - 1;
    let emb = |v: usize| data.embeddings.row(v);

    let inputs: Vec<Vec<f64>> = steps[..targets]
        .iter()
        .map(|s| model.input(params, emb(s.node), s.t))
        .collect();
    let (outputs, caches) = model.rnn.forward(params, &inputs);

    let mut loss = 0.0;
    let mut d_outputs = Vec::with_capacity(targets);
    let mut eps_rng = rng::seeded(seed);
    for (s, o) in outputs.iter().enumerate() {
        let next = steps[s + 1].node;
        let k = data.clusters[next];
        let target = emb(next);
        let mut d_o = vec![0.0; o.len()];

        // Cluster posterior.
        let logits = params[model.cluster_head].mul_vec(o);
        let lse = nn::log_sum_exp(&logits);
        loss += lse - logits[k];
        let mut d_logits: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        d_logits[k] -= 1.0;
        grads[model.cluster_head].add_outer(&d_logits, o, 1.0);
        params[model.cluster_head].matvec_t_acc(&d_logits, &mut d_o);

        // Latent and decoder.
        let eps: Vec<f64> = (0..dz).map(|_| eps_rng.sample(StandardNormal)).collect();
        let lat = model.latent(params, o, k, eps);
        let mu_z = params[model.w_mu_z].mul_vec(&lat.z);
        let raw_z = params[model.w_sigma_z].mul_vec(&lat.z);
        loss += gaussian_nll(target, &mu_z, &raw_z);
        let mut d_mu_z = vec![0.0; dv];
        let mut d_ls_z = vec![0.0; dv];
        for j in 0..dv {
            let sigma = clamp_log_sigma(raw_z[j]).exp();
            let u = (target[j] - mu_z[j]) / sigma;
            d_mu_z[j] = -u / sigma;
            if inside_clamp(raw_z[j]) {
                d_ls_z[j] = 1.0 - u * u;
            }
        }
        grads[model.w_mu_z].add_outer(&d_mu_z, &lat.z, 1.0);
        grads[model.w_sigma_z].add_outer(&d_ls_z, &lat.z, 1.0);
        let mut d_z = vec![0.0; dz];
        params[model.w_mu_z].matvec_t_acc(&d_mu_z, &mut d_z);
        params[model.w_sigma_z].matvec_t_acc(&d_ls_z, &mut d_z);

        // KL regularizer plus the reparameterized path.
        loss += model.beta * kl(&lat.mu, &lat.raw_log_sigma);
        let mut d_mu_k = vec![0.0; dz];
        let mut d_ls_k = vec![0.0; dz];
        for d in 0..dz {
            d_mu_k[d] = d_z[d] + model.beta * lat.mu[d];
            if inside_clamp(lat.raw_log_sigma[d]) {
                let s = lat.sigma[d];
                d_ls_k[d] = d_z[d] * lat.eps[d] * s + model.beta * (s * s - 1.0);
            }
        }
        for (id, d) in [(model.w_mu_k, &d_mu_k), (model.w_sigma_k, &d_ls_k)] {
            for r in 0..dz {
                axpy(d[r], o, grads[id].row_mut(k * dz + r));
                axpy(d[r], params[id].row(k * dz + r), &mut d_o);
            }
        }

        // Time gap.
        let mut feat = model.transform(params, target);
        feat.extend_from_slice(o);
        let mut d_feat = vec![0.0; feat.len()];
        let dt = steps[s + 1].t - steps[s].t;
        loss += model.mix.nll_backward(params, &feat, dt, 1.0, grads, &mut d_feat)?;
        grads[model.f_v].add_outer(&d_feat[..dv], target, 1.0);
        axpy(1.0, &d_feat[dv..], &mut d_o);
        d_outputs.push(d_o);
    }

    let d_inputs = model.rnn.backward(params, &caches, &d_outputs, grads);
    for (s, d_in) in d_inputs.iter().enumerate() {
        let step = steps[s];
        grads[model.f_v].add_outer(&d_in[..dv], emb(step.node), 1.0);
        model.t2v.backward(params, step.t, &d_in[dv..], grads);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(k: usize) -> InductiveDims {
        InductiveDims {
            embed_dim: 3,
            time_dim: 2,
            hidden_dim: 4,
            output_dim: 3,
            latent_dim: 2,
            clusters: k,
            components: 2,
        }
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_rows(&[
            vec![0.5, -0.2, 0.1],
            vec![-0.3, 0.8, 0.4],
            vec![0.9, 0.1, -0.6],
            vec![0.2, 0.2, 0.2],
        ])
        .unwrap()
    }

    fn walk() -> Walk {
        Walk {
            steps: [(0, 0.5), (2, 1.0), (1, 2.5), (3, 2.7)]
                .iter()
                .map(|&(v, t)| WalkStep::new(v, t))
                .collect(),
            ended: false,
        }
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(kl(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((kl(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
        assert!(kl(&[0.3, -1.0], &[0.7, -0.4]) > 0.0);
    }

    #[test]
    fn zero_weights_make_z_pure_noise() {
        let mut m = InductiveModel::new(dims(2), 1e-5, 5.0, 0).unwrap();
        m.params_mut().zero();
        let o = [0.4, -0.1, 0.7];
        let z = m.sample_z(&o, 1, &mut rng::seeded(3)).unwrap();
        let mut r = rng::seeded(3);
        let eps: Vec<f64> = (0..2).map(|_| r.sample(StandardNormal)).collect();
        assert_eq!(z, eps);
        let post = m.cluster_log_posterior(&o);
        assert!(post.iter().all(|l| (l - 0.5f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn decoder_at_mean() {
        let mut m = InductiveModel::new(dims(1), 1e-5, 5.0, 0).unwrap();
        m.params_mut().zero();
        // Zero decoder weights: mean 0, sigma 1.
        let lp = m.decoder_log_prob(&[0.1, 0.2, 0.3], 0, &[0.0; 3], &mut rng::seeded(0)).unwrap();
        assert!((lp + 3.0 * HALF_LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let emb = table();
        let clusters = vec![0, 1, 1, 0];
        let data = WalkData {
            embeddings: &emb,
            clusters: &clusters,
        };
        for seed in 0..3 {
            let m = InductiveModel::new(dims(2), 0.3, 5.0, seed).unwrap();
            let report = m.grad_check(&walk(), &data, 17).unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn beta_zero_drops_kl() {
        let emb = table();
        let clusters = vec![0, 1, 1, 0];
        let data = WalkData {
            embeddings: &emb,
            clusters: &clusters,
        };
        let m0 = InductiveModel::new(dims(2), 0.0, 5.0, 4).unwrap();
        let mut m1 = m0.clone();
        m1.beta = 0.5;
        let o_kl: f64 = {
            let ins: Vec<Vec<f64>> = walk().steps[..3]
                .iter()
                .map(|s| m0.input(m0.params(), emb.row(s.node), s.t))
                .collect();
            let (outs, _) = m0.rnn.forward(m0.params(), &ins);
            outs.iter()
                .zip(&walk().steps[1..])
                .map(|(o, s)| m0.kl_term(o, clusters[s.node]).unwrap())
                .sum()
        };
        let diff = m1.walk_nll(&walk(), &data, 9).unwrap() - m0.walk_nll(&walk(), &data, 9).unwrap();
        assert!((diff - 0.5 * o_kl).abs() < 1e-10);
    }

    #[test]
    fn generation_maps_into_node_table() {
        let m = InductiveModel::new(dims(2), 1e-5, 5.0, 1).unwrap();
        let nodes = NearestIndex::new(table()).unwrap();
        let seeds = vec![(vec![0.5, -0.2, 0.1], 0.0), (vec![0.2, 0.2, 0.2], 1.0)];
        let walks = m.generate_walks(&seeds, &nodes, 6, 2).unwrap();
        for w in &walks {
            assert_eq!(w.len(), 6);
            w.check_increasing().unwrap();
            assert!(w.steps.iter().all(|s| s.node < 4));
        }
        assert_eq!(walks, m.generate_walks(&seeds, &nodes, 6, 2).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = InductiveModel::new(dims(3), 1e-5, 5.0, 2).unwrap();
        let mut p = ParamSet::new();
        let mut meta = BTreeMap::new();
        m.export(&mut p, &mut meta);
        let back = InductiveModel::import(&Checkpoint::new(CHECKPOINT_KIND, meta, p)).unwrap();
        assert_eq!(back.dims(), m.dims());
        assert_eq!(back.params(), m.params());
    }
}
