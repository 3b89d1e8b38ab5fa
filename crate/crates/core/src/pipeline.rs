//! End-to-end training and generation for both model variants.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::assembly::{assemble, count_alpha, AlphaCounts, GeneratedGraph};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::{SnapshotMode, TemporalGraph};
use crate::inductive::model::{self as imodel, WalkData};
use crate::inductive::sage::sage_embed_boosted;
use crate::inductive::{kmeans_fit, EmbeddingTable, InductiveConfig, InductiveModel, NearestIndex, SageConfig, Wgan, WganConfig};
use crate::nn::{ParamSet, Tensor};
use crate::rng;
use crate::seqmodel::{self, TrainConfig, TransductiveModel};
use crate::train::LossCurve;
use crate::walker::{epoch_seeds, StartSampling, Walk, WalkStep, Walker};

/// Upper bound on generation rounds when distinct triples fall short.
pub const DEFAULT_MAX_GEN_ROUNDS: usize = 10;

/// Edge count above which the longer default generation length applies.
const LONG_WALK_EDGES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Transductive,
    Inductive,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transductive" => Ok(Mode::Transductive),
            "inductive" => Ok(Mode::Inductive),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Transductive => "transductive",
            Mode::Inductive => "inductive",
        })
    }
}

/// Every knob of a run. Zero in `gen_len`, `target_edges` or `target_nodes`
/// means "derive from the source graph".
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub walk_len: usize,
    pub window: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub node_dim: usize,
    pub time_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub components: usize,
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    pub beta: f64,
    pub sage_epochs: usize,
    pub sage_negatives: usize,
    pub sage_boost_rounds: usize,
    pub sage_lr: f64,
    pub wgan_iterations: usize,
    pub wgan_lr: f64,
    pub wgan_hidden: usize,
    pub wgan_noise_dim: usize,
    pub wgan_clip: f64,
    pub gen_len: usize,
    pub target_edges: usize,
    pub target_nodes: usize,
    pub max_gen_rounds: usize,
    pub bin_times: bool,
    pub truncate: bool,
    pub snapshot_mode: SnapshotMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let i = InductiveConfig::default();
        let s = SageConfig::default();
        let w = WganConfig::default();
        RunConfig {
            mode: Mode::Transductive,
            seed: 0,
            walk_len: t.walk_len,
            window: t.window,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            clip_norm: t.clip_norm,
            node_dim: t.node_dim,
            time_dim: t.time_dim,
            hidden_dim: t.hidden_dim,
            output_dim: t.output_dim,
            components: t.components,
            embed_dim: i.embed_dim,
            latent_dim: i.latent_dim,
            clusters: i.clusters,
            beta: i.beta,
            sage_epochs: s.epochs,
            sage_negatives: s.negatives,
            sage_boost_rounds: s.boost_rounds,
            sage_lr: s.lr,
            wgan_iterations: w.iterations,
            wgan_lr: w.lr,
            wgan_hidden: w.hidden,
            wgan_noise_dim: w.noise_dim,
            wgan_clip: w.clip,
            gen_len: 0,
            target_edges: 0,
            target_nodes: 0,
            max_gen_rounds: DEFAULT_MAX_GEN_ROUNDS,
            bin_times: true,
            truncate: true,
            snapshot_mode: SnapshotMode::At,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    /// All settings as `key -> value`, the format of config files.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("mode", self.mode.to_string());
        put("seed", self.seed.to_string());
        put("walk_len", self.walk_len.to_string());
        put("window", self.window.map_or("none".into(), |w| w.to_string()));
        put("epochs", self.epochs.to_string());
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("clip_norm", self.clip_norm.to_string());
        put("node_dim", self.node_dim.to_string());
        put("time_dim", self.time_dim.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("output_dim", self.output_dim.to_string());
        put("components", self.components.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("latent_dim", self.latent_dim.to_string());
        put("clusters", self.clusters.to_string());
        put("beta", self.beta.to_string());
        put("sage_epochs", self.sage_epochs.to_string());
        put("sage_negatives", self.sage_negatives.to_string());
        put("sage_boost_rounds", self.sage_boost_rounds.to_string());
        put("sage_lr", self.sage_lr.to_string());
        put("wgan_iterations", self.wgan_iterations.to_string());
        put("wgan_lr", self.wgan_lr.to_string());
        put("wgan_hidden", self.wgan_hidden.to_string());
        put("wgan_noise_dim", self.wgan_noise_dim.to_string());
        put("wgan_clip", self.wgan_clip.to_string());
        put("gen_len", self.gen_len.to_string());
        put("target_edges", self.target_edges.to_string());
        put("target_nodes", self.target_nodes.to_string());
        put("max_gen_rounds", self.max_gen_rounds.to_string());
        put("bin_times", self.bin_times.to_string());
        put("truncate", self.truncate.to_string());
        put(
            "snapshot_mode",
            match self.snapshot_mode {
                SnapshotMode::At => "at".into(),
                SnapshotMode::Upto => "upto".into(),
            },
        );
        m
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "mode" => self.mode = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "walk_len" => self.walk_len = parse(key, v)?,
            "window" => self.window = if v == "none" { None } else { Some(parse(key, v)?) },
            "epochs" => self.epochs = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "node_dim" => self.node_dim = parse(key, v)?,
            "time_dim" => self.time_dim = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "output_dim" => self.output_dim = parse(key, v)?,
            "components" => self.components = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "latent_dim" => self.latent_dim = parse(key, v)?,
            "clusters" => self.clusters = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "sage_epochs" => self.sage_epochs = parse(key, v)?,
            "sage_negatives" => self.sage_negatives = parse(key, v)?,
            "sage_boost_rounds" => self.sage_boost_rounds = parse(key, v)?,
            "sage_lr" => self.sage_lr = parse(key, v)?,
            "wgan_iterations" => self.wgan_iterations = parse(key, v)?,
            "wgan_lr" => self.wgan_lr = parse(key, v)?,
            "wgan_hidden" => self.wgan_hidden = parse(key, v)?,
            "wgan_noise_dim" => self.wgan_noise_dim = parse(key, v)?,
            "wgan_clip" => self.wgan_clip = parse(key, v)?,
            "gen_len" => self.gen_len = parse(key, v)?,
            "target_edges" => self.target_edges = parse(key, v)?,
            "target_nodes" => self.target_nodes = parse(key, v)?,
            "max_gen_rounds" => self.max_gen_rounds = parse(key, v)?,
            "bin_times" => self.bin_times = parse(key, v)?,
            "truncate" => self.truncate = parse(key, v)?,
            "snapshot_mode" => self.snapshot_mode = v.parse()?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in kv {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            walk_len: self.walk_len,
            window: self.window,
            node_dim: self.node_dim,
            time_dim: self.time_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            components: self.components,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }

    pub fn inductive_config(&self) -> InductiveConfig {
        InductiveConfig {
            walk_len: self.walk_len,
            window: self.window,
            embed_dim: self.embed_dim,
            time_dim: self.time_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            latent_dim: self.latent_dim,
            clusters: self.clusters,
            components: self.components,
            beta: self.beta,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }

    pub fn sage_config(&self) -> SageConfig {
        SageConfig {
            dim: self.embed_dim,
            negatives: self.sage_negatives,
            epochs: self.sage_epochs,
            lr: self.sage_lr,
            boost_rounds: self.sage_boost_rounds,
            seed: rng::derive_seed(self.seed, 11),
            ..SageConfig::default()
        }
    }

    pub fn wgan_config(&self) -> WganConfig {
        WganConfig {
            noise_dim: self.wgan_noise_dim,
            hidden: self.wgan_hidden,
            iterations: self.wgan_iterations,
            clip: self.wgan_clip,
            lr: self.wgan_lr,
            seed: rng::derive_seed(self.seed, 12),
            ..WganConfig::default()
        }
    }

    /// `gen_len`, or 3 for graphs up to 20k edges and 8 beyond.
    pub fn resolved_gen_len(&self, source_edges: usize) -> usize {
        match self.gen_len {
            0 if source_edges <= LONG_WALK_EDGES => 3,
            0 => 8,
            l => l,
        }
    }

    pub fn resolved_target_edges(&self, source_edges: usize) -> usize {
        if self.target_edges == 0 {
            source_edges
        } else {
            self.target_edges
        }
    }

    pub fn resolved_target_nodes(&self, source_nodes: usize) -> usize {
        if self.target_nodes == 0 {
            source_nodes
        } else {
            self.target_nodes
        }
    }
}

fn time_scale(g: &TemporalGraph) -> f64 {
    g.t_max().abs().max(1.0)
}

/// Fresh training walks for every epoch, one per edge.
fn epoch_walks(walker: &Walker<'_>, seed: u64, epoch: usize) -> Result<Vec<Walk>> {
    Ok(walker
        .sample_walk_set(StartSampling::Epoch, rng::derive_seed(seed, 1000 + epoch as u64))?
        .walks)
}

pub fn train_transductive(g: &TemporalGraph, cfg: &RunConfig) -> Result<(TransductiveModel, LossCurve)> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let tc = cfg.train_config();
    let mut model = TransductiveModel::new(tc.dims(g.num_nodes()), time_scale(g), cfg.seed)?;
    let walker = Walker::new(g, tc.walk_len, tc.window)?;
    let curve = model.train_with(&tc.optim(), |e| epoch_walks(&walker, cfg.seed, e))?;
    Ok((model, curve))
}

/// Everything the inductive generator needs.
#[derive(Debug, Clone)]
pub struct InductiveBundle {
    pub model: InductiveModel,
    pub source_embeddings: EmbeddingTable,
    pub clusters: Vec<usize>,
    pub wgan: Wgan,
    /// False positives before each boosting round and after the last one.
    pub false_positive_history: Vec<usize>,
}

pub fn train_inductive(g: &TemporalGraph, cfg: &RunConfig) -> Result<(InductiveBundle, LossCurve)> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let (table, fp_history) = sage_embed_boosted(&g.static_projection(), &cfg.sage_config())?;
    let clusters = kmeans_fit(&table, cfg.clusters, rng::derive_seed(cfg.seed, 13))?;
    let ic = cfg.inductive_config();
    let mut dims = ic.dims();
    dims.embed_dim = table.dim();
    let mut model = InductiveModel::new(dims, ic.beta, time_scale(g), cfg.seed)?;
    let walker = Walker::new(g, ic.walk_len, ic.window)?;
    let data = WalkData {
        embeddings: &table,
        clusters: &clusters.assignment,
    };
    let curve = model.train_with(&data, &ic.optim(), |e| {
        // Walks that ended at their first tuple carry no target here.
        let mut walks = epoch_walks(&walker, cfg.seed, e)?;
        walks.retain(|w| w.len() >= 2);
        Ok(walks)
    })?;
    let (wgan, _) = Wgan::train(&table, &cfg.wgan_config())?;
    let bundle = InductiveBundle {
        model,
        source_embeddings: table,
        clusters: clusters.assignment,
        wgan,
        false_positive_history: fp_history,
    };
    Ok((bundle, curve))
}

impl InductiveBundle {
    pub fn to_checkpoint(&self, extra: &BTreeMap<String, String>) -> Checkpoint {
        let mut params = ParamSet::new();
        let mut meta = extra.clone();
        self.model.export(&mut params, &mut meta);
        self.wgan.export(&mut params);
        params.add("source_embeddings", self.source_embeddings.as_tensor().clone());
        params.add(
            "source_clusters",
            Tensor::from_vec(
                self.clusters.len(),
                1,
                self.clusters.iter().map(|&k| k as f64).collect(),
            ),
        );
        meta.insert("num_nodes".into(), self.source_embeddings.len().to_string());
        Checkpoint::new(imodel::CHECKPOINT_KIND, meta, params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = InductiveModel::import(ck)?;
        let wgan = Wgan::import(&ck.params)?;
        let get = |name: &str| {
            ck.params
                .id(name)
                .map(|id| ck.params[id].clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let source_embeddings = EmbeddingTable::new(get("source_embeddings")?)?;
        let clusters = get("source_clusters")?.data().iter().map(|&k| k as usize).collect();
        Ok(InductiveBundle {
            model,
            source_embeddings,
            clusters,
            wgan,
            false_positive_history: Vec::new(),
        })
    }
}

/// A trained model of either kind.
#[derive(Debug, Clone)]
pub enum Trained {
    Transductive(TransductiveModel),
    Inductive(Box<InductiveBundle>),
}

impl Trained {
    pub fn mode(&self) -> Mode {
        match self {
            Trained::Transductive(_) => Mode::Transductive,
            Trained::Inductive(_) => Mode::Inductive,
        }
    }

    pub fn to_checkpoint(&self, extra: &BTreeMap<String, String>) -> Checkpoint {
        match self {
            Trained::Transductive(m) => m.to_checkpoint(extra),
            Trained::Inductive(b) => b.to_checkpoint(extra),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.kind.as_str() {
            seqmodel::CHECKPOINT_KIND => Ok(Trained::Transductive(TransductiveModel::from_checkpoint(ck)?)),
            imodel::CHECKPOINT_KIND => Ok(Trained::Inductive(Box::new(InductiveBundle::from_checkpoint(ck)?))),
            other => Err(Error::Checkpoint(format!("unknown checkpoint kind `{other}`"))),
        }
    }
}

pub fn train(g: &TemporalGraph, cfg: &RunConfig) -> Result<(Trained, LossCurve)> {
    match cfg.mode {
        Mode::Transductive => {
            let (m, c) = train_transductive(g, cfg)?;
            Ok((Trained::Transductive(m), c))
        }
        Mode::Inductive => {
            let (b, c) = train_inductive(g, cfg)?;
            Ok((Trained::Inductive(Box::new(b)), c))
        }
    }
}

/// Synthetic walks plus the node universe they live in.
pub struct SampledWalks {
    pub walks: Vec<Walk>,
    pub num_nodes: usize,
}

/// One round of generation: a walk from every source edge's seed tuple.
pub fn sample_walks(trained: &Trained, seeds: &[WalkStep], gen_len: usize, nodes: Option<&NearestIndex>, seed: u64) -> Result<Vec<Walk>> {
    match trained {
        Trained::Transductive(m) => m.generate_walks(seeds, gen_len, seed),
        Trained::Inductive(b) => {
            let nodes = nodes.ok_or_else(|| Error::Config("inductive generation needs a node table".into()))?;
            let n = b.source_embeddings.len();
            let emb_seeds: Vec<(Vec<f64>, f64)> = seeds
                .iter()
                .map(|s| {
                    if s.node >= n {
                        return Err(Error::NodeOutOfRange { index: s.node, size: n });
                    }
                    Ok((b.source_embeddings.row(s.node).to_vec(), s.t))
                })
                .collect::<Result<_>>()?;
            b.model.generate_walks(&emb_seeds, nodes, gen_len, seed)
        }
    }
}

/// Generates a graph shaped like `src`. Walks are sampled in rounds until the
/// distinct triples cover the target or the round cap is hit, then assembled.
/// Also returns the wall time spent on sampling and assembly.
pub fn generate(trained: &Trained, src: &TemporalGraph, cfg: &RunConfig) -> Result<(GeneratedGraph, f64)> {
    if src.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let start = Instant::now();
    let gen_len = cfg.resolved_gen_len(src.num_edges());
    let target = cfg.resolved_target_edges(src.num_edges());
    let (num_nodes, nodes) = match trained {
        Trained::Transductive(m) => {
            if m.dims().num_nodes != src.num_nodes() {
                return Err(Error::Config(format!(
                    "model was trained on {} nodes, source graph has {}",
                    m.dims().num_nodes,
                    src.num_nodes()
                )));
            }
            if cfg.target_nodes != 0 && cfg.target_nodes != src.num_nodes() {
                return Err(Error::Config("a different node count needs inductive mode".into()));
            }
            (src.num_nodes(), None)
        }
        Trained::Inductive(b) => {
            if b.source_embeddings.len() != src.num_nodes() {
                return Err(Error::Config("checkpoint does not match the source graph".into()));
            }
            let n = cfg.resolved_target_nodes(src.num_nodes());
            let table = b.wgan.sample(n, &mut rng::derived(cfg.seed, 21))?;
            (n, Some(NearestIndex::new(table)?))
        }
    };
    let seeds = epoch_seeds(src);
    let grid = src.unique_timestamps();
    let mut alpha = AlphaCounts::default();
    let mut walks_sampled = 0usize;
    let mut rounds = 0usize;
    while rounds < cfg.max_gen_rounds.max(1) {
        let round_seed = rng::derive_seed(cfg.seed, 100 + rounds as u64);
        let walks = sample_walks(trained, &seeds, gen_len, nodes.as_ref(), round_seed)?;
        walks_sampled += walks.len();
        rounds += 1;
        let mut counts = count_alpha(&walks, src.t_max(), cfg.truncate);
        if cfg.bin_times {
            counts = counts.binned(&grid)?;
        }
        alpha = alpha.merge(counts);
        if alpha.len() >= target {
            break;
        }
    }
    let mut out = assemble(&alpha, target, num_nodes, rng::derive_seed(cfg.seed, 31))?;
    let seconds = start.elapsed().as_secs_f64();
    let p = &mut out.provenance;
    p.insert("mode".into(), trained.mode().to_string());
    p.insert("seed".into(), cfg.seed.to_string());
    p.insert("gen_len".into(), gen_len.to_string());
    p.insert("num_nodes".into(), num_nodes.to_string());
    p.insert("walks_sampled".into(), walks_sampled.to_string());
    p.insert("rounds".into(), rounds.to_string());
    Ok((out, seconds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut c = RunConfig::default();
        c.mode = Mode::Inductive;
        c.window = None;
        c.snapshot_mode = SnapshotMode::Upto;
        let mut back = RunConfig::default();
        back.apply_kv(&c.to_kv()).unwrap();
        assert_eq!(back, c);
        assert!(back.set("nonsense", "1").is_err());
        assert!(back.set("epochs", "x").is_err());
    }

    #[test]
    fn generation_length_rule() {
        let c = RunConfig::default();
        assert_eq!(c.resolved_gen_len(3000), 3);
        assert_eq!(c.resolved_gen_len(60_000), 8);
        let c = RunConfig { gen_len: 3, ..c };
        assert_eq!(c.resolved_gen_len(60_000), 3);
    }
}
