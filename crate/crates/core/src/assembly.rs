//! Turns synthetic walks into a temporal graph.
//!
//! Consecutive walk tuples give triples `(u, v, t)`. Their frequencies `alpha`
//! define, per timestamp, a distribution over node pairs. The target edge
//! count is split across timestamps by alpha mass and filled by weighted
//! sampling without replacement.

use std::collections::{BTreeMap, BTreeSet};

use ordered_float::OrderedFloat;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{ordered_pair, TemporalEdge, TemporalGraph};
use crate::rng;
use crate::walker::Walk;

type Key = (usize, usize, OrderedFloat<f64>);

/// Occurrence counts of unordered triples `(u, v, t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlphaCounts {
    counts: BTreeMap<Key, u64>,
    /// Triples skipped because both endpoints coincide.
    pub self_loops: u64,
    /// Triples dropped by truncation at the horizon.
    pub truncated: u64,
}

impl AlphaCounts {
    pub fn from_triples(triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut a = AlphaCounts::default();
        for (u, v, t) in triples {
            a.add(u, v, t, 1);
        }
        a
    }

    fn add(&mut self, u: usize, v: usize, t: f64, n: u64) {
        if u == v {
            self.self_loops += n;
            return;
        }
        let (a, b) = ordered_pair(u, v);
        *self.counts.entry((a, b, OrderedFloat(t))).or_insert(0) += n;
    }

    /// Adds the counts of `other` to these.
    pub fn merge(mut self, other: AlphaCounts) -> Self {
        for (&(u, v, t), &n) in &other.counts {
            *self.counts.entry((u, v, t)).or_insert(0) += n;
        }
        self.self_loops += other.self_loops;
        self.truncated += other.truncated;
        self
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, u: usize, v: usize, t: f64) -> u64 {
        let (a, b) = ordered_pair(u, v);
        self.counts.get(&(a, b, OrderedFloat(t))).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `((u, v, t), count)` in key order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, f64), u64)> + '_ {
        self.counts.iter().map(|(&(u, v, t), &n)| ((u, v, t.0), n))
    }

    /// Distinct timestamps, ascending.
    pub fn timestamps(&self) -> Vec<f64> {
        let set: BTreeSet<OrderedFloat<f64>> = self.counts.keys().map(|k| k.2).collect();
        set.into_iter().map(|t| t.0).collect()
    }

    /// Re-keys every triple to the nearest of the sorted `timestamps`
    /// (lower one on exact midpoints), merging counts that collide.
    pub fn binned(&self, timestamps: &[f64]) -> Result<AlphaCounts> {
        if timestamps.is_empty() {
            return Err(Error::Config("no timestamps to bin to".into()));
        }
        let mut out = AlphaCounts {
            self_loops: self.self_loops,
            truncated: self.truncated,
            ..AlphaCounts::default()
        };
        for ((u, v, t), n) in self.iter() {
            out.add(u, v, nearest_timestamp(timestamps, t), n);
        }
        Ok(out)
    }
}

/// Nearest entry of the ascending slice `ts`, lower one on ties.
pub fn nearest_timestamp(ts: &[f64], t: f64) -> f64 {
    let i = ts.partition_point(|&x| x < t);
    if i == 0 {
        ts[0]
    } else if i == ts.len() {
        ts[i - 1]
    } else if t - ts[i - 1] <= ts[i] - t {
        ts[i - 1]
    } else {
        ts[i]
    }
}

/// Counts every consecutive triple `(v_{i-1}, v_i, t_i)` of the walks; with
/// `truncate`, triples past `t_max` are dropped.
pub fn count_alpha(walks: &[Walk], t_max: f64, truncate: bool) -> AlphaCounts {
    walks
        .par_iter()
        .fold(AlphaCounts::default, |mut acc, w| {
            for pair in w.steps.windows(2) {
                let t = pair[1].t;
                if truncate && t > t_max {
                    acc.truncated += 1;
                    continue;
                }
                acc.add(pair[0].node, pair[1].node, t, 1);
            }
            acc
        })
        .reduce(AlphaCounts::default, AlphaCounts::merge)
}

/// Normalized alpha over the pairs present at `t`, in pair order.
pub fn edge_distribution(alpha: &AlphaCounts, t: f64) -> Result<Vec<((usize, usize), f64)>> {
    let t = OrderedFloat(t);
    let pairs: Vec<((usize, usize), u64)> = alpha
        .counts
        .iter()
        .filter(|(k, _)| k.2 == t)
        .map(|(k, &n)| ((k.0, k.1), n))
        .collect();
    if pairs.is_empty() {
        return Err(Error::TimestampAbsent(t.0));
    }
    let total: u64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs
        .into_iter()
        .map(|(p, n)| (p, n as f64 / total as f64))
        .collect())
}

/// Splits `target` across `masses` proportionally; floors first, then one
/// extra unit to the largest remainders (earliest index on ties).
pub fn largest_remainder_quotas(masses: &[u64], target: usize) -> Vec<usize> {
    let total: u64 = masses.iter().sum();
    if total == 0 {
        return vec![0; masses.len()];
    }
    let mut quotas = Vec::with_capacity(masses.len());
    let mut remainders = Vec::with_capacity(masses.len());
    for (i, &m) in masses.iter().enumerate() {
        // Exact integer arithmetic: target * m / total.
        let num = target as u128 * m as u128;
        quotas.push((num / total as u128) as usize);
        remainders.push((num % total as u128, i));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(target - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Assembled graph plus provenance entries.
#[derive(Debug, Clone)]
pub struct GeneratedGraph {
    pub graph: TemporalGraph,
    pub provenance: BTreeMap<String, String>,
    /// Per-timestamp quotas, aligned with `alpha.timestamps()`.
    pub quotas: Vec<usize>,
}

/// Samples exactly `min(target, distinct triples)` edges from `alpha` over a
/// node universe of size `num_nodes`.
pub fn assemble(alpha: &AlphaCounts, target: usize, num_nodes: usize, seed: u64) -> Result<GeneratedGraph> {
    if alpha.is_empty() {
        return Err(Error::Config("no synthetic triples to assemble".into()));
    }
    if target == 0 {
        return Err(Error::Config("target edge count must be >= 1".into()));
    }
    if let Some(((u, v, _), _)) = alpha.iter().find(|((u, v, _), _)| *u.max(v) >= num_nodes) {
        return Err(Error::NodeOutOfRange {
            index: u.max(v),
            size: num_nodes,
        });
    }
    let mut by_t: BTreeMap<OrderedFloat<f64>, Vec<(Key, u64)>> = BTreeMap::new();
    for (&k, &n) in &alpha.counts {
        by_t.entry(k.2).or_default().push((k, n));
    }
    let masses: Vec<u64> = by_t.values().map(|v| v.iter().map(|x| x.1).sum()).collect();
    let quotas = largest_remainder_quotas(&masses, target);

    let mut rng = rng::seeded(seed);
    let mut chosen: BTreeSet<Key> = BTreeSet::new();
    let mut unmet = 0usize;
    for (entries, &quota) in by_t.values().zip(&quotas) {
        if quota >= entries.len() {
            chosen.extend(entries.iter().map(|e| e.0));
            unmet += quota - entries.len();
            continue;
        }
        // Efraimidis-Spirakis: keep the `quota` largest ln(u) / w.
        let mut keyed: Vec<(f64, Key)> = entries
            .iter()
            .map(|&(k, w)| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                (u.ln() / w as f64, k)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        chosen.extend(keyed.iter().take(quota).map(|x| x.1));
    }
    if unmet > 0 {
        let mut rest: Vec<(u64, Key)> = alpha
            .counts
            .iter()
            .filter(|(k, _)| !chosen.contains(*k))
            .map(|(&k, &n)| (n, k))
            .collect();
        rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        chosen.extend(rest.iter().take(unmet).map(|x| x.1));
    }
    let edges: Vec<TemporalEdge> = chosen
        .into_iter()
        .map(|(u, v, t)| TemporalEdge::new(u, v, t.0))
        .collect();
    let mut provenance = BTreeMap::new();
    provenance.insert("assembly_seed".into(), seed.to_string());
    provenance.insert("target_edges".into(), target.to_string());
    provenance.insert("emitted_edges".into(), edges.len().to_string());
    provenance.insert("distinct_triples".into(), alpha.len().to_string());
    Ok(GeneratedGraph {
        graph: TemporalGraph::new(num_nodes, edges)?,
        provenance,
        quotas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walker::WalkStep;

    fn walk(steps: &[(usize, f64)]) -> Walk {
        Walk {
            steps: steps.iter().map(|&(v, t)| WalkStep::new(v, t)).collect(),
            ended: false,
        }
    }

    #[test]
    fn counting() {
        let a = count_alpha(&[walk(&[(0, 1.0), (1, 3.0), (2, 5.0)])], 10.0, true);
        assert_eq!(a.len(), 2);
        assert_eq!(a.get(0, 1, 3.0), 1);
        assert_eq!(a.get(2, 1, 5.0), 1);
        let twice = vec![walk(&[(0, 1.0), (1, 3.0)]), walk(&[(1, 2.0), (0, 3.0)])];
        assert_eq!(count_alpha(&twice, 10.0, true).get(0, 1, 3.0), 2);
        let late = count_alpha(&[walk(&[(0, 1.0), (1, 3.0), (2, 11.0)])], 10.0, true);
        assert_eq!((late.len(), late.truncated), (1, 1));
        let loops = count_alpha(&[walk(&[(0, 1.0), (0, 3.0)])], 10.0, true);
        assert_eq!((loops.len(), loops.self_loops), (0, 1));
    }

    #[test]
    fn distributions() {
        let a = AlphaCounts::from_triples([(0, 1, 2.0), (0, 1, 2.0), (0, 1, 2.0), (2, 3, 2.0), (4, 5, 7.0)]);
        let d = edge_distribution(&a, 2.0).unwrap();
        assert_eq!(d, vec![((0, 1), 0.75), ((2, 3), 0.25)]);
        assert_eq!(edge_distribution(&a, 7.0).unwrap(), vec![((4, 5), 1.0)]);
        assert!(edge_distribution(&a, 3.0).is_err());
    }

    #[test]
    fn quotas_sum_to_target() {
        assert_eq!(largest_remainder_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder_quotas(&[3, 1], 4), vec![3, 1]);
        assert_eq!(largest_remainder_quotas(&[5, 3, 2], 7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn exact_fill_and_single_triple() {
        let a = AlphaCounts::from_triples([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 2.0)]);
        let g = assemble(&a, 3, 4, 0).unwrap();
        assert_eq!(g.graph.num_edges(), 3);
        let one = AlphaCounts::from_triples([(3, 1, 4.0)]);
        let g = assemble(&one, 1, 4, 0).unwrap();
        assert_eq!(g.graph.edges(), &[TemporalEdge::new(1, 3, 4.0)]);
        let g = assemble(&one, 5, 4, 0).unwrap();
        assert_eq!(g.graph.num_edges(), 1);
    }

    #[test]
    fn binning_merges() {
        let a = AlphaCounts::from_triples([(0, 1, 1.2), (0, 1, 0.9), (1, 2, 2.5)]);
        let b = a.binned(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.get(0, 1, 1.0), 2);
        assert_eq!(b.get(1, 2, 2.0), 1);
        assert_eq!(nearest_timestamp(&[1.0, 2.0], 9.0), 2.0);
        assert_eq!(nearest_timestamp(&[1.0, 2.0], -9.0), 1.0);
    }
}
