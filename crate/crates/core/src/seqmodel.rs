//! Transductive recurrent walk model.
//!
//! Each step feeds `embedding(node) ++ time2vec(t)` of the previous tuple to a
//! two-layer LSTM. The top-layer output `o` scores the next node through a
//! softmax over all nodes plus END, and, together with the next node's
//! embedding, parameterizes the log-normal mixture over the time gap.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{self, check_gradients, GradCheckReport, Lstm, LstmState, ParamId, ParamSet, Tensor, Time2Vec};
use crate::rng;
use crate::tpp::{MixtureHead, MixtureParams};
use crate::train::{self, LossCurve, OptimConfig, WalkObjective};
use crate::walker::{Walk, WalkStep};

pub const CHECKPOINT_KIND: &str = "transductive";

/// Layer sizes of the transductive model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub num_nodes: usize,
    pub node_dim: usize,
    pub time_dim: usize,
    /// Width of the first recurrent layer.
    pub hidden_dim: usize,
    /// Width of the top recurrent layer, i.e. of `o`.
    pub output_dim: usize,
    pub components: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("num_nodes", self.num_nodes),
            ("node_dim", self.node_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
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

/// Training hyper-parameters. Defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub walk_len: usize,
    pub window: Option<usize>,
    pub node_dim: usize,
    pub time_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub components: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            walk_len: 20,
            window: Some(crate::walker::DEFAULT_WINDOW),
            node_dim: 100,
            time_dim: 64,
            hidden_dim: 200,
            output_dim: 200,
            components: 128,
            lr: 1e-3,
            batch_size: 128,
            epochs: 50,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn dims(&self, num_nodes: usize) -> ModelDims {
        ModelDims {
            num_nodes,
            node_dim: self.node_dim,
            time_dim: self.time_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
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

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("walk_len", self.walk_len.to_string());
        put(
            "window",
            self.window.map_or("none".to_string(), |w| w.to_string()),
        );
        put("node_dim", self.node_dim.to_string());
        put("time_dim", self.time_dim.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("output_dim", self.output_dim.to_string());
        put("components", self.components.to_string());
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("clip_norm", self.clip_norm.to_string());
        put("seed", self.seed.to_string());
        m
    }

    /// Overrides fields present in `kv`; unknown keys are ignored.
    pub fn apply_kv(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{k}`")))
        }
        for (k, v) in kv {
            match k.as_str() {
                "walk_len" => self.walk_len = parse(k, v)?,
                "window" => {
                    self.window = if v == "none" { None } else { Some(parse(k, v)?) }
                }
                "node_dim" => self.node_dim = parse(k, v)?,
                "time_dim" => self.time_dim = parse(k, v)?,
                "hidden_dim" => self.hidden_dim = parse(k, v)?,
                "output_dim" => self.output_dim = parse(k, v)?,
                "components" => self.components = parse(k, v)?,
                "lr" => self.lr = parse(k, v)?,
                "batch_size" => self.batch_size = parse(k, v)?,
                "epochs" => self.epochs = parse(k, v)?,
                "clip_norm" => self.clip_norm = parse(k, v)?,
                "seed" => self.seed = parse(k, v)?,
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransductiveModel {
    params: ParamSet,
    dims: ModelDims,
    time_scale: f64,
    node_table: ParamId,
    node_head: ParamId,
    t2v: Time2Vec,
    rnn: Lstm,
    mix: MixtureHead,
}

impl TransductiveModel {
    /// `time_scale` (usually the graph horizon) sets the initial time-encoding periods.
    pub fn new(dims: ModelDims, time_scale: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = rng::seeded(seed);
        let mut params = ParamSet::new();
        let vocab = dims.num_nodes + 1;
        let node_table = params.add(
            "node_table",
            Tensor::uniform(vocab, dims.node_dim, 0.5, &mut rng),
        );
        let t2v = Time2Vec::register(&mut params, "t2v", dims.time_dim, time_scale, &mut rng);
        let rnn = Lstm::register(
            &mut params,
            "rnn",
            &[dims.node_dim + dims.time_dim, dims.hidden_dim, dims.output_dim],
            &mut rng,
        );
        let node_head = params.add(
            "node_head",
            Tensor::uniform(vocab, dims.output_dim, 1.0 / (dims.output_dim as f64).sqrt(), &mut rng),
        );
        let mix = MixtureHead::register(
            &mut params,
            "mix",
            dims.components,
            dims.node_dim + dims.output_dim,
            &mut rng,
        );
        Ok(TransductiveModel {
            params,
            dims,
            time_scale,
            node_table,
            node_head,
            t2v,
            rnn,
            mix,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Index of the END token in the node vocabulary.
    pub fn end_token(&self) -> usize {
        self.dims.num_nodes
    }

    pub fn vocab_size(&self) -> usize {
        self.dims.num_nodes + 1
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node > self.dims.num_nodes {
            return Err(Error::NodeOutOfRange {
                index: node,
                size: self.vocab_size(),
            });
        }
        Ok(())
    }

    fn input(&self, params: &ParamSet, node: usize, t: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dims.node_dim + self.dims.time_dim);
        x.extend_from_slice(params[self.node_table].row(node));
        x.resize(self.dims.node_dim + self.dims.time_dim, 0.0);
        self.t2v.encode(params, t, &mut x[self.dims.node_dim..]);
        x
    }

    pub fn zero_state(&self) -> LstmState {
        self.rnn.zero_state()
    }

    /// Consumes tuple `(node, t)` and returns the output `o` for the next prediction.
    pub fn rnn_step(&self, state: &mut LstmState, node: usize, t: f64) -> Result<Vec<f64>> {
        self.check_node(node)?;
        let x = self.input(&self.params, node, t);
        self.rnn.step(&self.params, state, &x);
        Ok(state.output().to_vec())
    }

    pub fn node_logits(&self, o: &[f64]) -> Vec<f64> {
        self.params[self.node_head].mul_vec(o)
    }

    pub fn node_probs(&self, o: &[f64]) -> Vec<f64> {
        nn::softmax(&self.node_logits(o))
    }

    /// Gap distribution given the chosen next node and `o`.
    pub fn time_params(&self, node: usize, o: &[f64]) -> Result<MixtureParams> {
        self.check_node(node)?;
        self.mix
            .mixture_params(&self.params, self.params[self.node_table].row(node), o)
    }

    /// Negative log-likelihood of `walk` (the constant start term excluded).
    pub fn walk_nll(&self, walk: &Walk) -> Result<f64> {
        let mut scratch = self.params.zeros_like();
        nll_and_grad(self, &self.params, walk, &mut scratch)
    }

    /// `log |E|`: the start-edge term left out of the optimized loss.
    pub fn start_nll(num_edges: usize) -> f64 {
        (num_edges as f64).ln()
    }

    /// Adds the gradient of `walk_nll` to `grads` and returns the loss.
    pub fn walk_nll_grad(&self, walk: &Walk, grads: &mut ParamSet) -> Result<f64> {
        nll_and_grad(self, &self.params, walk, grads)
    }

    /// Trains on the same walks every epoch.
    pub fn train(&mut self, walks: &[Walk], cfg: &OptimConfig) -> Result<LossCurve> {
        self.train_with(cfg, |_| Ok(walks.to_vec()))
    }

    /// Trains with walks supplied per epoch (e.g. resampled from the graph).
    pub fn train_with(
        &mut self,
        cfg: &OptimConfig,
        walks_for_epoch: impl FnMut(usize) -> Result<Vec<Walk>>,
    ) -> Result<LossCurve> {
        let mut params = std::mem::take(&mut self.params);
        let objective = Objective { model: self };
        let result = train::fit(&mut params, &objective, cfg, walks_for_epoch, |_| {});
        self.params = params;
        result
    }

    /// Compares the analytic gradient of `walk_nll` with central differences.
    pub fn grad_check(&self, walk: &Walk) -> Result<GradCheckReport> {
        let mut grads = self.params.zeros_like();
        self.walk_nll_grad(walk, &mut grads)?;
        let mut scratch = self.params.zeros_like();
        Ok(check_gradients(&self.params, &grads, nn::FD_STEP, |p| {
            scratch.zero();
            nll_and_grad(self, p, walk, &mut scratch).expect("walk validated above")
        }))
    }

    /// Samples one synthetic walk of at most `max_len` tuples from `seed`.
    /// `inspect` sees the node distribution and gap mixture at every step.
    pub fn generate_walk_with<R: Rng + ?Sized>(
        &self,
        seed: WalkStep,
        max_len: usize,
        rng: &mut R,
        mut inspect: impl FnMut(&[f64], &MixtureParams),
    ) -> Result<Walk> {
        self.check_node(seed.node)?;
        let mut state = self.zero_state();
        let mut steps = vec![seed];
        let mut ended = false;
        while steps.len() < max_len {
            let prev = *steps.last().unwrap();
            let o = self.rnn_step(&mut state, prev.node, prev.t)?;
            let p = self.node_probs(&o);
            let v = nn::sample_categorical(&p, rng);
            if v == self.end_token() {
                inspect(&p, &MixtureParams::new(vec![0.0], vec![1.0], vec![1.0])?);
                ended = true;
                break;
            }
            let mix = self.time_params(v, &o)?;
            inspect(&p, &mix);
            let dt = mix.sample(rng);
            steps.push(WalkStep::new(v, prev.t + dt));
        }
        Ok(Walk { steps, ended })
    }

    /// One synthetic walk per seed; seed `i` uses a stream derived from `(seed, i)`.
    pub fn generate_walks(&self, seeds: &[WalkStep], max_len: usize, seed: u64) -> Result<Vec<Walk>> {
        if max_len < 2 {
            return Err(Error::Config("generation length must be >= 2".into()));
        }
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut r = rng::derived(seed, i as u64);
                self.generate_walk_with(*s, max_len, &mut r, |_, _| {})
            })
            .collect()
    }

    pub fn to_checkpoint(&self, extra: &BTreeMap<String, String>) -> Checkpoint {
        let mut meta = extra.clone();
        meta.insert("num_nodes".into(), self.dims.num_nodes.to_string());
        meta.insert("time_scale".into(), self.time_scale.to_string());
        Checkpoint::new(CHECKPOINT_KIND, meta, self.params.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected a {CHECKPOINT_KIND} checkpoint, found `{}`",
                ck.kind
            )));
        }
        let missing = |what: &str| Error::Checkpoint(format!("missing tensor {what}"));
        let p = &ck.params;
        let num_nodes: usize = ck.meta_get("num_nodes")?;
        let time_scale: f64 = ck.meta_get("time_scale")?;
        let node_table = p.id("node_table").ok_or_else(|| missing("node_table"))?;
        let node_head = p.id("node_head").ok_or_else(|| missing("node_head"))?;
        let t2v = Time2Vec::bind(p, "t2v").ok_or_else(|| missing("t2v"))?;
        let rnn = Lstm::bind(p, "rnn", 2).ok_or_else(|| missing("rnn"))?;
        let mix = MixtureHead::bind(p, "mix").ok_or_else(|| missing("mix"))?;
        let node_dim = p[node_table].cols();
        let dims = ModelDims {
            num_nodes,
            node_dim,
            time_dim: t2v.dim(),
            hidden_dim: p[p.id("rnn.l0.bias").unwrap()].rows() / 4,
            output_dim: rnn.output_size(),
            components: mix.components(),
        };
        let consistent = p[node_table].rows() == num_nodes + 1
            && p[node_head].shape() == (num_nodes + 1, dims.output_dim)
            && rnn.input_size() == node_dim + dims.time_dim
            && mix.features() == node_dim + dims.output_dim;
        if !consistent {
            return Err(Error::Checkpoint("inconsistent tensor shapes".into()));
        }
        Ok(TransductiveModel {
            params: ck.params.clone(),
            dims,
            time_scale,
            node_table,
            node_head,
            t2v,
            rnn,
            mix,
        })
    }
}

struct Objective<'m> {
    model: &'m TransductiveModel,
}

impl WalkObjective for Objective<'_> {
    fn loss_and_grad(&self, params: &ParamSet, walk: &Walk, _seed: u64, grads: &mut ParamSet) -> Result<f64> {
        nll_and_grad(self.model, params, walk, grads)
    }
}

/// Teacher-forced NLL of a walk under `params` (laid out as `model`), with
/// its gradient accumulated into `grads`.
fn nll_and_grad(model: &TransductiveModel, params: &ParamSet, walk: &Walk, grads: &mut ParamSet) -> Result<f64> {
    let steps = &walk.steps;
    let targets = steps.len() - 1 + usize::from(walk.ended);
    if steps.is_empty() || targets == 0 {
        return Err(Error::Config("walk needs at least one prediction target".into()));
    }
    walk.check_increasing()?;
    for s in steps {
        if s.node >= model.dims.num_nodes {
            return Err(Error::NodeOutOfRange {
                index: s.node,
                size: model.dims.num_nodes,
            });
        }
    }
    let dv = model.dims.node_dim;
    let inputs: Vec<Vec<f64>> = steps[..targets]
        .iter()
        .map(|s| model.input(params, s.node, s.t))
        .collect();
    let (outputs, caches) = model.rnn.forward(params, &inputs);

    let mut loss = 0.0;
    let mut d_outputs = Vec::with_capacity(targets);
    let head = &params[model.node_head];
    for (s, o) in outputs.iter().enumerate() {
        let target = if s + 1 < steps.len() {
            steps[s + 1].node
        } else {
            model.end_token()
        };
        let logits = head.mul_vec(o);
        let lse = nn::log_sum_exp(&logits);
        loss += lse - logits[target];
        let mut d_logits: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        d_logits[target] -= 1.0;
        grads[model.node_head].add_outer(&d_logits, o, 1.0);
        let mut d_o = vec![0.0; o.len()];
        head.matvec_t_acc(&d_logits, &mut d_o);

        if target != model.end_token() {
            let mut feat = params[model.node_table].row(target).to_vec();
            feat.extend_from_slice(o);
            let dt = steps[s + 1].t - steps[s].t;
            let mut d_feat = vec![0.0; feat.len()];
            loss += model.mix.nll_backward(params, &feat, dt, 1.0, grads, &mut d_feat)?;
            nn::tensor::axpy(1.0, &d_feat[..dv], grads[model.node_table].row_mut(target));
            nn::tensor::axpy(1.0, &d_feat[dv..], &mut d_o);
        }
        d_outputs.push(d_o);
    }

    let d_inputs = model.rnn.backward(params, &caches, &d_outputs, grads);
    for (s, d_in) in d_inputs.iter().enumerate() {
        let step = steps[s];
        nn::tensor::axpy(1.0, &d_in[..dv], grads[model.node_table].row_mut(step.node));
        model.t2v.backward(params, step.t, &d_in[dv..], grads);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpp;

    fn tiny(num_nodes: usize, seed: u64) -> TransductiveModel {
        let dims = ModelDims {
            num_nodes,
            node_dim: 4,
            time_dim: 3,
            hidden_dim: 5,
            output_dim: 4,
            components: 2,
        };
        TransductiveModel::new(dims, 10.0, seed).unwrap()
    }

    fn walk(steps: &[(usize, f64)], ended: bool) -> Walk {
        Walk {
            steps: steps.iter().map(|&(v, t)| WalkStep::new(v, t)).collect(),
            ended,
        }
    }

    #[test]
    fn zero_model_two_step_loss() {
        let mut m = tiny(5, 0);
        m.params_mut().zero();
        let w = walk(&[(0, 1.0), (3, 2.5)], false);
        let loss = m.walk_nll(&w).unwrap();
        let uniform = MixtureParams::new(vec![0.0; 2], vec![1.0; 2], vec![0.5; 2]).unwrap();
        let expected = (6.0f64).ln() - uniform.log_prob(1.5).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_head_is_uniform() {
        let mut m = tiny(5, 1);
        let head = m.node_head;
        m.params_mut()[head].fill(0.0);
        let p = m.node_probs(&[0.3, 0.1, -0.2, 0.9]);
        assert!(p.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn identical_walks_identical_losses() {
        let m = tiny(5, 2);
        let w = walk(&[(0, 1.0), (1, 2.0), (4, 3.0)], true);
        assert_eq!(m.walk_nll(&w).unwrap(), m.walk_nll(&w.clone()).unwrap());
    }

    #[test]
    fn rejects_bad_walks() {
        let m = tiny(5, 3);
        assert!(matches!(
            m.walk_nll(&walk(&[(0, 2.0), (1, 2.0)], false)),
            Err(Error::NonIncreasingWalk(1))
        ));
        assert!(m.walk_nll(&walk(&[(0, 2.0)], false)).is_err());
        assert!(m.walk_nll(&walk(&[(0, 1.0), (7, 2.0)], false)).is_err());
        let mut st = m.zero_state();
        assert!(m.rnn_step(&mut st, 9, 0.0).is_err());
    }

    #[test]
    fn end_only_walk_has_node_term_only() {
        let mut m = tiny(3, 4);
        m.params_mut().zero();
        let loss = m.walk_nll(&walk(&[(1, 1.0)], true)).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny(6, 5);
        let w = walk(&[(0, 0.5), (2, 1.7), (5, 2.0), (1, 4.2)], true);
        let report = m.grad_check(&w).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn unused_end_row_has_zero_gradient() {
        let m = tiny(4, 6);
        let w = walk(&[(0, 0.5), (2, 1.7)], false);
        let mut g = m.params().zeros_like();
        m.walk_nll_grad(&w, &mut g).unwrap();
        let table = m.params().id("node_table").unwrap();
        assert!(g[table].row(m.end_token()).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn generated_times_increase_and_lengths_cap() {
        let m = tiny(6, 7);
        let seeds = vec![WalkStep::new(0, 1.0), WalkStep::new(3, 2.0)];
        let walks = m.generate_walks(&seeds, 2, 11).unwrap();
        assert!(walks.iter().all(|w| w.len() <= 2));
        let walks = m.generate_walks(&seeds, 8, 11).unwrap();
        for w in &walks {
            w.check_increasing().unwrap();
        }
        assert_eq!(walks, m.generate_walks(&seeds, 8, 11).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = tiny(6, 8);
        let ck = m.to_checkpoint(&BTreeMap::new());
        let back = TransductiveModel::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap()).unwrap();
        assert_eq!(back.dims(), m.dims());
        let seeds = vec![WalkStep::new(1, 0.0)];
        assert_eq!(
            m.generate_walks(&seeds, 6, 3).unwrap(),
            back.generate_walks(&seeds, 6, 3).unwrap()
        );
    }

    #[test]
    fn clamp_keeps_simultaneous_gap_finite() {
        let fwd = MixtureParams::new(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        assert!(fwd.log_prob(tpp::MIN_GAP).unwrap().is_finite());
    }
}
