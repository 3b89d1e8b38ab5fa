//! Temporal random walks.
//!
//! A walk opens at the later endpoint of a uniformly chosen edge and keeps
//! jumping through the current node's temporal neighborhood. The probability of
//! a jump decays exponentially with its time gap. Neighborhoods are capped to
//! the next `window` incident edges and their jump tables are cached.

use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rand::Rng;
use rayon::prelude::*;

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::graph::{Incidence, TemporalEdge, TemporalGraph};
use crate::rng;

pub const DEFAULT_WINDOW: usize = 500;
pub const DEFAULT_CACHE_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkStep {
    pub node: usize,
    pub t: f64,
}

impl WalkStep {
    pub fn new(node: usize, t: f64) -> Self {
        WalkStep { node, t }
    }
}

/// A time-respecting walk. `ended` marks early termination: the last node had
/// no future interaction, which the models learn as the END token.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub steps: Vec<WalkStep>,
    pub ended: bool,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> WalkStep {
        self.steps[0]
    }

    pub fn check_increasing(&self) -> Result<()> {
        for i in 1..self.steps.len() {
            if !(self.steps[i].t > self.steps[i - 1].t) {
                return Err(Error::NonIncreasingWalk(i));
            }
        }
        Ok(())
    }

    /// Consecutive `(u, v, t)` transitions; `t` is the arrival time.
    pub fn transitions(&self) -> impl Iterator<Item = TemporalEdge> + '_ {
        self.steps
            .windows(2)
            .map(|w| TemporalEdge::new(w[0].node, w[1].node, w[1].t))
    }

    /// `v:t` tuples separated by spaces, with a trailing `END` if terminated.
    pub fn to_dump_line(&self) -> String {
        let mut line = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{}:{}", s.node, s.t);
        }
        if self.ended {
            line.push_str(" END");
        }
        line
    }

    pub fn parse_dump_line(line: &str) -> Result<Walk> {
        let mut steps = Vec::new();
        let mut ended = false;
        for tok in line.split_whitespace() {
            if ended {
                return Err(Error::Parse {
                    line: 0,
                    reason: "END must be the last token".into(),
                });
            }
            if tok == "END" {
                ended = true;
                continue;
            }
            let (v, t) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: 0,
                reason: format!("bad tuple `{tok}`"),
            })?;
            let bad = || Error::Parse {
                line: 0,
                reason: format!("bad tuple `{tok}`"),
            };
            let v: usize = v.parse().map_err(|_| bad())?;
            let t: f64 = t.parse().map_err(|_| bad())?;
            steps.push(WalkStep::new(v, t));
        }
        Ok(Walk { steps, ended })
    }
}

/// Incident edges of `v` strictly after `t`, ascending, truncated to `window`.
pub fn temporal_neighborhood(
    g: &TemporalGraph,
    v: usize,
    t: f64,
    window: Option<usize>,
) -> &[Incidence] {
    let inc = g.incidence(v);
    let start = inc.partition_point(|i| i.t <= t);
    let end = match window {
        Some(w) => (start + w).min(inc.len()),
        None => inc.len(),
    };
    &inc[start..end]
}

/// Jump probabilities `exp(t - t_i) / sum_j exp(t - t_j)`.
pub fn jump_distribution(current_time: f64, nbrs: &[Incidence]) -> Result<Vec<f64>> {
    if nbrs.is_empty() {
        return Err(Error::InvalidDistribution("empty temporal neighborhood".into()));
    }
    let shift = nbrs
        .iter()
        .map(|n| current_time - n.t)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = nbrs
        .iter()
        .map(|n| (current_time - n.t - shift).exp())
        .collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    Ok(p)
}

/// How start edges are chosen for a walk set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSampling {
    /// One walk per temporal edge, in edge order.
    Epoch,
    /// `count` start edges drawn uniformly with replacement.
    Uniform(usize),
}

#[derive(Debug, Clone)]
pub struct WalkSet {
    pub walks: Vec<Walk>,
    /// First tuple of every walk, kept to seed generation.
    pub seeds: Vec<WalkStep>,
}

pub struct Walker<'g> {
    graph: &'g TemporalGraph,
    max_len: usize,
    window: Option<usize>,
    cache: Mutex<LruCache<(usize, usize), Arc<AliasTable>>>,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g TemporalGraph, max_len: usize, window: Option<usize>) -> Result<Self> {
        Self::with_cache_budget(graph, max_len, window, DEFAULT_CACHE_BUDGET)
    }

    pub fn with_cache_budget(
        graph: &'g TemporalGraph,
        max_len: usize,
        window: Option<usize>,
        budget: usize,
    ) -> Result<Self> {
        if max_len < 2 {
            return Err(Error::Config(format!("walk length must be >= 2, got {max_len}")));
        }
        if window == Some(0) {
            return Err(Error::Config("window must be >= 1".into()));
        }
        let budget = NonZeroUsize::new(budget.max(1)).unwrap();
        Ok(Walker {
            graph,
            max_len,
            window,
            cache: Mutex::new(LruCache::new(budget)),
        })
    }

    pub fn graph(&self) -> &TemporalGraph {
        self.graph
    }

    pub fn cached_tables(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    fn jump_table(&self, node: usize, start: usize, t: f64, nbrs: &[Incidence]) -> Arc<AliasTable> {
        let key = (node, start);
        if let Some(table) = self.cache.lock().unwrap().get(&key) {
            return Arc::clone(table);
        }
        let p = jump_distribution(t, nbrs).expect("neighborhood is nonempty");
        let table = Arc::new(AliasTable::from_weights(&p).expect("softmax weights are valid"));
        self.cache.lock().unwrap().put(key, Arc::clone(&table));
        table
    }

    /// Next tuple from `(node, t)`, or `None` when the neighborhood is empty.
    pub fn step<R: Rng + ?Sized>(&self, node: usize, t: f64, rng: &mut R) -> Option<WalkStep> {
        let inc = self.graph.incidence(node);
        let start = inc.partition_point(|i| i.t <= t);
        let end = match self.window {
            Some(w) => (start + w).min(inc.len()),
            None => inc.len(),
        };
        let nbrs = &inc[start..end];
        let pick = match nbrs.len() {
            0 => return None,
            1 => 0,
            // Softmax over gaps is shift-invariant in the current time, so the
            // table is a function of the slice alone.
            _ => self.jump_table(node, start, nbrs[0].t, nbrs).sample(rng),
        };
        Some(WalkStep::new(nbrs[pick].neighbor, nbrs[pick].t))
    }

    pub fn sample_walk<R: Rng + ?Sized>(&self, start: &TemporalEdge, rng: &mut R) -> Walk {
        let mut steps = Vec::with_capacity(self.max_len);
        steps.push(WalkStep::new(start.v, start.t));
        let mut ended = false;
        while steps.len() < self.max_len {
            let cur = *steps.last().unwrap();
            match self.step(cur.node, cur.t, rng) {
                Some(next) => steps.push(next),
                None => {
                    ended = true;
                    break;
                }
            }
        }
        Walk { steps, ended }
    }

    /// Walks are sampled in parallel; walk `i` uses a stream derived from
    /// `(seed, i)`, so output is independent of the thread count.
    pub fn sample_walk_set(&self, sampling: StartSampling, seed: u64) -> Result<WalkSet> {
        let edges = self.graph.edges();
        if edges.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let count = match sampling {
            StartSampling::Epoch => edges.len(),
            StartSampling::Uniform(0) => {
                return Err(Error::Config("walk count must be >= 1".into()))
            }
            StartSampling::Uniform(c) => c,
        };
        let walks: Vec<Walk> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::derived(seed, i as u64);
                let edge = match sampling {
                    StartSampling::Epoch => &edges[i],
                    StartSampling::Uniform(_) => &edges[rng.random_range(0..edges.len())],
                };
                self.sample_walk(edge, &mut rng)
            })
            .collect();
        let seeds = walks.iter().map(Walk::first).collect();
        Ok(WalkSet { walks, seeds })
    }
}

/// Seed tuples `(v, t)` of the epoch-mode walk set, one per edge.
pub fn epoch_seeds(g: &TemporalGraph) -> Vec<WalkStep> {
    g.edges().iter().map(|e| WalkStep::new(e.v, e.t)).collect()
}
