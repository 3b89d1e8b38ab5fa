//! One-hop mean-aggregation node embeddings trained without supervision.
//!
//! `h_v = W [x_v ; mean_{u in N(v)} x_u]` with a learnable self vector `x_v`.
//! Each edge `(v, j)` contributes `-ln s(h_v.h_j) - sum_k s(-h_v.h_k)` over
//! `Q` negatives `k ~ P_n`, where `s` is the logistic function. Negatives are
//! drawn from nodes that are neither `v` nor adjacent to it.

use rand::Rng;
use rayon::prelude::*;

use super::EmbeddingTable;
use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::nn::lstm::sigmoid;
use crate::nn::tensor::{axpy, dot};
use crate::nn::{Adam, ParamId, ParamSet, Tensor};
use crate::rng::{self, StdRng};

/// Rejection attempts per negative before it is skipped.
const NEGATIVE_TRIES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SageConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub init_scale: f64,
    /// Boosting rounds after the initial fit.
    pub boost_rounds: usize,
    /// Training epochs after each boosting round.
    pub boost_epochs: usize,
    /// Stop boosting once false positives are at most this many.
    pub fp_tolerance: usize,
    pub seed: u64,
}

impl Default for SageConfig {
    fn default() -> Self {
        SageConfig {
            dim: 128,
            negatives: 5,
            epochs: 200,
            lr: 0.01,
            init_scale: 0.1,
            boost_rounds: 3,
            boost_epochs: 50,
            fp_tolerance: 0,
            seed: 0,
        }
    }
}

/// Outcome of one boosting round.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome {
    pub weights: Vec<f64>,
    pub false_positives: usize,
    pub boosted: bool,
}

struct Trainer<'g> {
    params: ParamSet,
    x: ParamId,
    w: ParamId,
    adj: Vec<Vec<usize>>,
    gs: &'g StaticGraph,
    dim: usize,
    negatives: usize,
    opt: Adam,
    rng: StdRng,
}

impl<'g> Trainer<'g> {
    fn new(gs: &'g StaticGraph, cfg: &SageConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if gs.num_nodes() == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut rng = rng::seeded(cfg.seed);
        let mut params = ParamSet::new();
        let x = params.add(
            "sage.self",
            Tensor::uniform(gs.num_nodes(), cfg.dim, cfg.init_scale, &mut rng),
        );
        let w = params.add(
            "sage.weight",
            Tensor::uniform(cfg.dim, 2 * cfg.dim, (1.5 / cfg.dim as f64).sqrt(), &mut rng),
        );
        let opt = Adam::new(&params, cfg.lr);
        Ok(Trainer {
            params,
            x,
            w,
            adj: gs.adjacency(),
            gs,
            dim: cfg.dim,
            negatives: cfg.negatives,
            opt,
            rng,
        })
    }

    fn concat_input(&self, v: usize) -> Vec<f64> {
        let d = self.dim;
        let x = &self.params[self.x];
        let mut c = vec![0.0; 2 * d];
        c[..d].copy_from_slice(x.row(v));
        let nbrs = &self.adj[v];
        if !nbrs.is_empty() {
            let inv = 1.0 / nbrs.len() as f64;
            for &u in nbrs {
                axpy(inv, x.row(u), &mut c[d..]);
            }
        }
        c
    }

    fn embed(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let inputs: Vec<Vec<f64>> = (0..self.gs.num_nodes()).map(|v| self.concat_input(v)).collect();
        let h = inputs.iter().map(|c| self.params[self.w].mul_vec(c)).collect();
        (inputs, h)
    }

    fn sample_negative(&mut self, table: &AliasTable, anchor: usize) -> Option<usize> {
        for _ in 0..NEGATIVE_TRIES {
            let k = table.sample(&mut self.rng);
            if k != anchor && self.adj[anchor].binary_search(&k).is_err() {
                return Some(k);
            }
        }
        None
    }

    /// One full-batch step. Returns the mean loss per positive term.
    fn epoch(&mut self, table: &AliasTable) -> f64 {
        let (inputs, h) = self.embed();
        let n = h.len();
        let mut dh = vec![vec![0.0; self.dim]; n];
        let mut loss = 0.0;
        let mut terms = 0usize;
        for ei in 0..self.gs.num_edges() {
            let (a, b) = self.gs.edges()[ei];
            for (anchor, pos) in [(a, b), (b, a)] {
                let s = dot(&h[anchor], &h[pos]);
                loss += softplus(-s);
                let ds = -sigmoid(-s);
                axpy(ds, &h[pos], &mut dh[anchor]);
                axpy(ds, &h[anchor], &mut dh[pos]);
                for _ in 0..self.negatives {
                    let Some(k) = self.sample_negative(table, anchor) else {
                        continue;
                    };
                    let s = dot(&h[anchor], &h[k]);
                    loss -= sigmoid(-s);
                    let ds = sigmoid(s) * sigmoid(-s);
                    axpy(ds, &h[k], &mut dh[anchor]);
                    axpy(ds, &h[anchor], &mut dh[k]);
                }
                terms += 1;
            }
        }
        if terms == 0 {
            return 0.0;
        }
        let scale = 1.0 / terms as f64;
        let d = self.dim;
        let mut grads = self.params.zeros_like();
        for v in 0..n {
            grads[self.w].add_outer(&dh[v], &inputs[v], scale);
            let mut dc = vec![0.0; 2 * d];
            self.params[self.w].matvec_t_acc(&dh[v], &mut dc);
            axpy(scale, &dc[..d], grads[self.x].row_mut(v));
            let nbrs = &self.adj[v];
            if !nbrs.is_empty() {
                let share = scale / nbrs.len() as f64;
                for &u in nbrs {
                    axpy(share, &dc[d..], grads[self.x].row_mut(u));
                }
            }
        }
        self.opt.step(&mut self.params, &grads);
        loss * scale
    }

    fn train(&mut self, weights: &[f64], epochs: usize) -> Result<Vec<f64>> {
        let table = AliasTable::from_weights(weights)?;
        let mut losses = Vec::with_capacity(epochs);
        for e in 0..epochs {
            let l = self.epoch(&table);
            if !l.is_finite() || !self.params.is_finite() {
                return Err(Error::Numerical(format!("embedding loss became {l} in epoch {}", e + 1)));
            }
            losses.push(l);
        }
        Ok(losses)
    }

    fn table(&self) -> Result<EmbeddingTable> {
        EmbeddingTable::from_rows(&self.embed().1)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Trains embeddings with uniform negatives, no boosting.
pub fn sage_embed(gs: &StaticGraph, cfg: &SageConfig) -> Result<EmbeddingTable> {
    let mut trainer = Trainer::new(gs, cfg)?;
    trainer.train(&vec![1.0; gs.num_nodes()], cfg.epochs)?;
    trainer.table()
}

/// Trains, then alternates boosting and further training. Also returns the
/// false-positive count measured before every boosting round and at the end.
pub fn sage_embed_boosted(gs: &StaticGraph, cfg: &SageConfig) -> Result<(EmbeddingTable, Vec<usize>)> {
    let mut trainer = Trainer::new(gs, cfg)?;
    let mut weights = vec![1.0; gs.num_nodes()];
    trainer.train(&weights, cfg.epochs)?;
    let mut history = Vec::new();
    for _ in 0..cfg.boost_rounds {
        let outcome = boost_negatives(&trainer.table()?, gs, &weights, cfg.fp_tolerance);
        history.push(outcome.false_positives);
        if !outcome.boosted {
            break;
        }
        weights = outcome.weights;
        trainer.train(&weights, cfg.boost_epochs)?;
    }
    let table = trainer.table()?;
    if history.len() == cfg.boost_rounds {
        history.push(false_positive_pairs(&table, gs).len());
    }
    Ok((table, history))
}

/// Non-adjacent pairs `(a, b)`, `a < b`, that the embeddings would call an
/// edge, i.e. with `s(h_a.h_b) > 0.5`.
pub fn false_positive_pairs(table: &EmbeddingTable, gs: &StaticGraph) -> Vec<(usize, usize)> {
    let n = table.len().min(gs.num_nodes());
    (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            (a + 1..n)
                .filter(move |&b| dot(table.row(a), table.row(b)) > 0.0 && !gs.contains(a, b))
                .map(move |b| (a, b))
        })
        .collect()
}

/// Doubles the negative-sampling weight of every endpoint of a false-positive
/// pair, unless there are at most `tolerance` of them.
pub fn boost_negatives(table: &EmbeddingTable, gs: &StaticGraph, weights: &[f64], tolerance: usize) -> BoostOutcome {
    let fps = false_positive_pairs(table, gs);
    let mut out = weights.to_vec();
    let boosted = fps.len() > tolerance;
    if boosted {
        let mut hit = vec![false; out.len()];
        for &(a, b) in &fps {
            hit[a] = true;
            hit[b] = true;
        }
        for (w, h) in out.iter_mut().zip(hit) {
            if h {
                *w *= 2.0;
            }
        }
    }
    BoostOutcome {
        weights: out,
        false_positives: fps.len(),
        boosted,
    }
}

/// Mean per-positive-term loss of `table` under uniform negatives, evaluated
/// by drawing negatives with `rng`. Useful as a sanity probe.
pub fn sage_loss<R: Rng + ?Sized>(table: &EmbeddingTable, gs: &StaticGraph, negatives: usize, rng: &mut R) -> f64 {
    let adj = gs.adjacency();
    let n = table.len();
    let mut loss = 0.0;
    let mut terms = 0;
    for &(a, b) in gs.edges() {
        for (anchor, pos) in [(a, b), (b, a)] {
            loss += softplus(-dot(table.row(anchor), table.row(pos)));
            for _ in 0..negatives {
                let k = (0..NEGATIVE_TRIES)
                    .map(|_| rng.random_range(0..n))
                    .find(|&k| k != anchor && adj[anchor].binary_search(&k).is_err());
                if let Some(k) = k {
                    loss -= sigmoid(-dot(table.row(anchor), table.row(k)));
                }
            }
            terms += 1;
        }
    }
    loss / terms.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_converges() {
        let gs = StaticGraph::from_pairs(2, [(0, 1)]);
        let cfg = SageConfig {
            dim: 8,
            epochs: 300,
            lr: 0.05,
            ..SageConfig::default()
        };
        let t = sage_embed(&gs, &cfg).unwrap();
        assert!(sigmoid(dot(t.row(0), t.row(1))) > 0.9);
    }

    #[test]
    fn boost_rule() {
        let gs = StaticGraph::from_pairs(3, [(0, 1)]);
        let t = EmbeddingTable::from_rows(&[vec![1.0], vec![1.0], vec![-1.0]]).unwrap();
        let out = boost_negatives(&t, &gs, &[1.0; 3], 0);
        assert_eq!(out.false_positives, 0);
        assert_eq!(out.weights, vec![1.0; 3]);
        let t = EmbeddingTable::from_rows(&[vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        let out = boost_negatives(&t, &gs, &[1.0; 3], 0);
        assert_eq!(out.false_positives, 1);
        assert_eq!(out.weights, vec![2.0, 1.0, 2.0]);
    }

    #[test]
    fn isolated_nodes_get_finite_embeddings() {
        let gs = StaticGraph::from_pairs(4, [(0, 1)]);
        let cfg = SageConfig {
            dim: 4,
            epochs: 5,
            ..SageConfig::default()
        };
        let t = sage_embed(&gs, &cfg).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.as_tensor().is_finite());
    }

    #[test]
    fn deterministic() {
        let gs = StaticGraph::from_pairs(5, [(0, 1), (1, 2), (3, 4)]);
        let cfg = SageConfig {
            dim: 4,
            epochs: 10,
            ..SageConfig::default()
        };
        assert_eq!(sage_embed(&gs, &cfg).unwrap(), sage_embed(&gs, &cfg).unwrap());
    }
}
