//! Synthetic temporal graphs for tests and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::graph::{ordered_pair, TemporalEdge, TemporalGraph};
use crate::rng;

/// Two communities that take turns being active.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityGraphConfig {
    pub nodes_per_community: usize,
    /// Active node pairs inside each community.
    pub pairs_per_community: usize,
    pub cross_pairs: usize,
    pub horizon: f64,
    /// Length of one activity phase; communities alternate.
    pub phase: f64,
    pub active_gap: f64,
    pub idle_gap: f64,
    pub cross_gap: f64,
    /// Log-space spread of the renewal gaps.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for CommunityGraphConfig {
    fn default() -> Self {
        CommunityGraphConfig {
            nodes_per_community: 30,
            pairs_per_community: 200,
            cross_pairs: 20,
            horizon: 60.0,
            phase: 10.0,
            active_gap: 4.0,
            idle_gap: 40.0,
            cross_gap: 20.0,
            sigma: 0.5,
            seed: 7,
        }
    }
}

fn lognormal_with_mean(mean: f64, sigma: f64) -> LogNormal<f64> {
    LogNormal::new(mean.ln() - 0.5 * sigma * sigma, sigma).expect("positive mean and sigma")
}

/// Integer timestamps in `1..=horizon`; every pair is a log-normal renewal
/// process whose mean gap depends on its community's current phase.
pub fn community_graph(cfg: &CommunityGraphConfig) -> Result<TemporalGraph> {
    let c = cfg.nodes_per_community;
    let max_pairs = c * (c - 1) / 2;
    if c < 2 || cfg.pairs_per_community > max_pairs || cfg.cross_pairs > c * c {
        return Err(Error::Config("community graph sizes are inconsistent".into()));
    }
    let mut r = rng::seeded(cfg.seed);
    let mut pairs: Vec<((usize, usize), Option<usize>)> = Vec::new();
    for community in 0..2 {
        let base = community * c;
        let mut all: Vec<(usize, usize)> = (0..c)
            .flat_map(|a| (a + 1..c).map(move |b| (base + a, base + b)))
            .collect();
        all.sort_unstable();
        for p in all.choose_multiple(&mut r, cfg.pairs_per_community) {
            pairs.push((*p, Some(community)));
        }
    }
    let cross: Vec<(usize, usize)> = (0..c).flat_map(|a| (c..2 * c).map(move |b| (a, b))).collect();
    for p in cross.choose_multiple(&mut r, cfg.cross_pairs) {
        pairs.push((*p, None));
    }
    let active = lognormal_with_mean(cfg.active_gap, cfg.sigma);
    let idle = lognormal_with_mean(cfg.idle_gap, cfg.sigma);
    let across = lognormal_with_mean(cfg.cross_gap, cfg.sigma);
    let mut edges = Vec::new();
    for ((u, v), community) in pairs {
        let mut t = r.random::<f64>() * cfg.active_gap;
        while t <= cfg.horizon {
            let gap = match community {
                Some(k) => {
                    let phase = (t / cfg.phase).floor() as usize % 2;
                    if phase == k {
                        active.sample(&mut r)
                    } else {
                        idle.sample(&mut r)
                    }
                }
                None => across.sample(&mut r),
            };
            // A gap that crosses into the next phase restarts the process
            // there, so idle stretches do not swallow active ones.
            let boundary = ((t / cfg.phase).floor() + 1.0) * cfg.phase;
            if community.is_some() && t + gap > boundary {
                t = boundary;
                continue;
            }
            t += gap;
            if t > cfg.horizon {
                break;
            }
            edges.push(TemporalEdge::new(u, v, t.ceil().max(1.0)));
        }
    }
    TemporalGraph::from_edges_dedup(2 * c, edges)
}

/// `count` distinct edges between uniform node pairs at timestamps drawn
/// uniformly from `timestamps`.
pub fn null_graph(num_nodes: usize, timestamps: &[f64], count: usize, seed: u64) -> Result<TemporalGraph> {
    if num_nodes < 2 || timestamps.is_empty() {
        return Err(Error::Config("null graph needs two nodes and a timestamp".into()));
    }
    let capacity = num_nodes * (num_nodes - 1) / 2 * timestamps.len();
    if count > capacity {
        return Err(Error::Config(format!("cannot place {count} distinct edges")));
    }
    let mut r = rng::seeded(seed);
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::with_capacity(count);
    while edges.len() < count {
        let u = r.random_range(0..num_nodes);
        let v = r.random_range(0..num_nodes);
        if u == v {
            continue;
        }
        let t = *timestamps.choose(&mut r).unwrap();
        let (a, b) = ordered_pair(u, v);
        if seen.insert((a, b, t.to_bits())) {
            edges.push(TemporalEdge::new(a, b, t));
        }
    }
    TemporalGraph::new(num_nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn community_graph_shape() {
        let g = community_graph(&CommunityGraphConfig::default()).unwrap();
        assert_eq!(g.num_nodes(), 60);
        assert!((2500..4500).contains(&g.num_edges()), "{}", g.num_edges());
        assert!(g.t_max() <= 60.0);
        let same = community_graph(&CommunityGraphConfig::default()).unwrap();
        assert_eq!(g.edges(), same.edges());
    }

    #[test]
    fn null_graph_is_exact_size() {
        let g = null_graph(10, &[1.0, 2.0, 3.0], 50, 3).unwrap();
        assert_eq!(g.num_edges(), 50);
        assert!(null_graph(3, &[1.0], 4, 0).is_err());
    }
}
