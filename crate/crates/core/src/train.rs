//! Minibatch training loop shared by the transductive and inductive models.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, ParamSet};
use crate::rng;
use crate::walker::Walk;

/// Walks per gradient shard. Shards are reduced in a fixed order, so the
/// summed gradient does not depend on the number of worker threads.
const SHARD: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            batch_size: 128,
            epochs: 1,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Mean per-walk loss for every epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub epochs: Vec<f64>,
}

impl LossCurve {
    /// `epoch,loss` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epochs.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }

    pub fn last(&self) -> Option<f64> {
        self.epochs.last().copied()
    }
}

/// Per-walk loss and gradient. The `u64` is a per-walk seed for any noise the
/// loss draws; it is fixed for a given (epoch, position) pair.
pub trait WalkObjective: Sync {
    fn loss_and_grad(&self, params: &ParamSet, walk: &Walk, seed: u64, grads: &mut ParamSet) -> Result<f64>;
}

/// Runs `epochs` passes of shuffled minibatch Adam. `walks_for_epoch(e)`
/// supplies the training walks of epoch `e`, which lets callers resample.
pub fn fit(
    params: &mut ParamSet,
    objective: &impl WalkObjective,
    cfg: &OptimConfig,
    mut walks_for_epoch: impl FnMut(usize) -> Result<Vec<Walk>>,
    mut after_step: impl FnMut(&ParamSet),
) -> Result<LossCurve> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut opt = Adam::new(params, cfg.lr);
    let mut curve = LossCurve::default();
    for epoch in 0..cfg.epochs {
        let walks = walks_for_epoch(epoch)?;
        if walks.is_empty() {
            return Err(Error::Config("empty walk set".into()));
        }
        let mut order: Vec<usize> = (0..walks.len()).collect();
        order.shuffle(&mut rng::derived(cfg.seed, epoch as u64));
        let epoch_seed = rng::derive_seed(cfg.seed ^ 0xA5A5_5A5A, epoch as u64);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let shard_results: Vec<Result<(f64, ParamSet)>> = batch
                .par_chunks(SHARD)
                .map(|shard| {
                    let mut g = params.zeros_like();
                    let mut loss = 0.0;
                    for &i in shard {
                        loss += objective.loss_and_grad(
                            params,
                            &walks[i],
                            rng::derive_seed(epoch_seed, i as u64),
                            &mut g,
                        )?;
                    }
                    Ok((loss, g))
                })
                .collect();
            let mut grads: Option<ParamSet> = None;
            let mut batch_loss = 0.0;
            for r in shard_results {
                let (l, g) = r?;
                batch_loss += l;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.add_scaled(&g, 1.0),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {batch_loss} in epoch {}",
                    epoch + 1
                )));
            }
            let mut grads = grads.expect("nonempty batch");
            grads.scale(1.0 / batch.len() as f64);
            if !grads.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in epoch {}",
                    epoch + 1
                )));
            }
            clip_grad_norm(&mut grads, cfg.clip_norm);
            opt.step(params, &grads);
            after_step(params);
            total += batch_loss;
        }
        let mean = total / walks.len() as f64;
        log::info!("epoch {} loss {:.5}", epoch + 1, mean);
        curve.epochs.push(mean);
    }
    Ok(curve)
}
