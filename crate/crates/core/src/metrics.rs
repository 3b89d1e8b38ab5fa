//! Snapshot statistics and source-vs-generated error reports.
//!
//! Statistics are computed over the nodes incident to at least one edge of
//! the snapshot.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::assembly::nearest_timestamp;
use crate::error::{Error, Result};
use crate::graph::{ordered_pair, SnapshotMode, StaticGraph, TemporalGraph};

pub const STAT_NAMES: [&str; 10] = [
    "mean_degree",
    "wedge_count",
    "triangle_count",
    "ple",
    "red_entropy",
    "lcc_size",
    "num_components",
    "global_cf",
    "mean_betweenness",
    "mean_closeness",
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SnapshotStats {
    pub mean_degree: f64,
    pub wedge_count: f64,
    pub triangle_count: f64,
    pub ple: f64,
    pub red_entropy: f64,
    pub lcc_size: f64,
    pub num_components: f64,
    pub global_cf: f64,
    pub mean_betweenness: f64,
    pub mean_closeness: f64,
}

impl SnapshotStats {
    /// Values in `STAT_NAMES` order.
    pub fn values(&self) -> [f64; 10] {
        [
            self.mean_degree,
            self.wedge_count,
            self.triangle_count,
            self.ple,
            self.red_entropy,
            self.lcc_size,
            self.num_components,
            self.global_cf,
            self.mean_betweenness,
            self.mean_closeness,
        ]
    }
}

/// Compact adjacency over the incident nodes of a snapshot.
struct Compact {
    adj: Vec<Vec<usize>>,
    m: usize,
}

impl Compact {
    fn new(g: &StaticGraph) -> Self {
        let nodes = g.incident_nodes();
        let mut index = vec![usize::MAX; g.num_nodes()];
        for (i, &v) in nodes.iter().enumerate() {
            index[v] = i;
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        for &(a, b) in g.edges() {
            adj[index[a]].push(index[b]);
            adj[index[b]].push(index[a]);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Compact { adj, m: g.num_edges() }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }
}

fn count_triangles(adj: &[Vec<usize>]) -> u64 {
    let mut tri = 0u64;
    for (a, na) in adj.iter().enumerate() {
        for &b in na.iter().filter(|&&b| b > a) {
            // Common neighbors above b, by sorted merge.
            let (mut i, mut j) = (0, 0);
            let nb = &adj[b];
            while i < na.len() && j < nb.len() {
                match na[i].cmp(&nb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if na[i] > b {
                            tri += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    tri
}

fn components(adj: &[Vec<usize>]) -> (usize, usize) {
    let n = adj.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, list) in adj.iter().enumerate() {
        for &b in list {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut sizes = vec![0usize; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        sizes[r] += 1;
    }
    let nc = sizes.iter().filter(|&&s| s > 0).count();
    (nc, sizes.into_iter().max().unwrap_or(0))
}

/// Brandes betweenness (unnormalized, undirected: each pair once) and
/// closeness `r / sum of distances` for every node.
fn betweenness_closeness(adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
    let n = adj.len();
    let mut bc = vec![0.0; n];
    let mut close = vec![0.0; n];
    let mut dist = vec![-1i64; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = -1);
        sigma.iter_mut().for_each(|x| *x = 0.0);
        delta.iter_mut().for_each(|x| *x = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();
        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let reached = order.len() - 1;
        let total: i64 = order.iter().map(|&v| dist[v]).sum();
        if reached > 0 {
            close[s] = reached as f64 / total as f64;
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Every unordered pair was counted from both ends.
    bc.iter_mut().for_each(|b| *b /= 2.0);
    (bc, close)
}

/// The ten statistics of one snapshot. An edgeless snapshot yields all zeros.
pub fn stats(g: &StaticGraph) -> SnapshotStats {
    if g.num_edges() == 0 {
        log::warn!("statistics requested for an empty snapshot");
        return SnapshotStats::default();
    }
    let c = Compact::new(g);
    let n = c.n();
    let two_m = 2.0 * c.m as f64;
    let degrees: Vec<f64> = c.adj.iter().map(|l| l.len() as f64).collect();
    let wedges: f64 = degrees.iter().map(|d| d * (d - 1.0) / 2.0).sum();
    let triangles = count_triangles(&c.adj) as f64;
    let ple = 1.0 + n as f64 / degrees.iter().map(|d| (2.0 * d).ln()).sum::<f64>();
    let red_entropy = if n > 1 {
        degrees
            .iter()
            .map(|d| {
                let p = d / two_m;
                -p * p.ln()
            })
            .sum::<f64>()
            / (n as f64).ln()
    } else {
        0.0
    };
    let (nc, lcc) = components(&c.adj);
    let (bc, close) = betweenness_closeness(&c.adj);
    let pairs = if n > 2 {
        ((n - 1) * (n - 2)) as f64 / 2.0
    } else {
        1.0
    };
    let mean_betweenness = bc.iter().map(|b| b / pairs).sum::<f64>() / n as f64;
    let mean_closeness = close.iter().sum::<f64>() / n as f64;
    SnapshotStats {
        mean_degree: two_m / n as f64,
        wedge_count: wedges,
        triangle_count: triangles,
        ple,
        red_entropy,
        lcc_size: lcc as f64,
        num_components: nc as f64,
        global_cf: if wedges > 0.0 { 3.0 * triangles / wedges } else { 0.0 },
        mean_betweenness,
        mean_closeness,
    }
}

/// Whether generated node IDs refer to the same nodes as the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeIdentity {
    #[default]
    Shared,
    /// Fresh labels: no generated edge can coincide with a source edge.
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatError {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub stats: BTreeMap<&'static str, StatError>,
    pub overlap_percent: f64,
    pub snapshots: usize,
    pub generation_seconds: Option<f64>,
    /// Aligned per-snapshot values: (timestamp, source, generated).
    pub per_snapshot: Vec<(f64, SnapshotStats, SnapshotStats)>,
}

impl ErrorReport {
    pub fn median(&self, stat: &str) -> Option<f64> {
        self.stats.get(stat).map(|e| e.median)
    }

    /// `statistic,median_abs_err,mean_abs_err,std` rows in `STAT_NAMES` order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("statistic,median_abs_err,mean_abs_err,std\n");
        for name in STAT_NAMES {
            let e = self.stats[name];
            let _ = writeln!(s, "{name},{},{},{}", e.median, e.mean, e.std);
        }
        s
    }

    pub fn to_json(&self) -> String {
        let stats: serde_json::Map<String, serde_json::Value> = STAT_NAMES
            .iter()
            .map(|name| {
                let e = self.stats[name];
                let entry = serde_json::json!({
                    "median_abs_err": e.median,
                    "mean_abs_err": e.mean,
                    "std": e.std,
                });
                (name.to_string(), entry)
            })
            .collect();
        let doc = serde_json::json!({
            "statistics": stats,
            "edge_overlap_percent": self.overlap_percent,
            "snapshots": self.snapshots,
            "generation_seconds": self.generation_seconds,
        });
        serde_json::to_string_pretty(&doc).expect("plain JSON values") + "\n"
    }

    /// Raw per-snapshot statistics, one row per (timestamp, side).
    pub fn snapshots_csv(&self) -> String {
        let mut s = format!("t,side,{}\n", STAT_NAMES.join(","));
        for (t, src, gen) in &self.per_snapshot {
            for (side, st) in [("source", src), ("generated", gen)] {
                let vals: Vec<String> = st.values().iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{t},{side},{}", vals.join(","));
            }
        }
        s
    }
}
fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summary of absolute errors; `std` is the population standard deviation.
pub fn summarize(errors: &[f64]) -> StatError {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = errors.len().max(1) as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    StatError {
        median: median(&sorted),
        mean,
        std: var.sqrt(),
    }
}

/// Percentage of source edges `(pair, t)` reproduced by `gen`. Generated
/// timestamps already on the source grid match exactly; otherwise a pair
/// match within half a time unit counts.
pub fn edge_overlap(src: &TemporalGraph, gen: &TemporalGraph, identity: NodeIdentity) -> f64 {
    if identity == NodeIdentity::Disjoint || src.num_edges() == 0 {
        return 0.0;
    }
    let src_ts = src.unique_timestamps();
    let on_grid = gen
        .edges()
        .iter()
        .all(|e| src_ts.binary_search_by(|x| x.total_cmp(&e.t)).is_ok());
    let hits = if on_grid {
        let set: HashSet<(usize, usize, u64)> = gen.edges().iter().map(|e| e.key()).collect();
        src.edges().iter().filter(|e| set.contains(&e.key())).count()
    } else {
        let mut by_pair: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for e in gen.edges() {
            by_pair.entry(e.pair()).or_default().push(e.t);
        }
        by_pair.values_mut().for_each(|v| v.sort_by(f64::total_cmp));
        src.edges()
            .iter()
            .filter(|e| {
                by_pair
                    .get(&e.pair())
                    .is_some_and(|ts| (nearest_timestamp(ts, e.t) - e.t).abs() < 0.5)
            })
            .count()
    };
    100.0 * hits as f64 / src.num_edges() as f64
}

/// Snapshots of `g` at each of the sorted `grid` timestamps, with edges
/// first moved to their nearest grid point.
pub fn aligned_snapshots(g: &TemporalGraph, grid: &[f64], mode: SnapshotMode) -> Vec<StaticGraph> {
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); grid.len()];
    for e in g.edges() {
        let t = nearest_timestamp(grid, e.t);
        let i = grid.partition_point(|&x| x < t);
        buckets[i].push(ordered_pair(e.u, e.v));
    }
    match mode {
        SnapshotMode::At => buckets
            .into_iter()
            .map(|b| StaticGraph::from_pairs(g.num_nodes(), b))
            .collect(),
        SnapshotMode::Upto => {
            let mut acc = Vec::new();
            buckets
                .into_iter()
                .map(|b| {
                    acc.extend(b);
                    StaticGraph::from_pairs(g.num_nodes(), acc.iter().copied())
                })
                .collect()
        }
    }
}

/// Compares `gen` with `src` on the source's unique timestamps.
pub fn error_report(src: &TemporalGraph, gen: &TemporalGraph, mode: SnapshotMode, identity: NodeIdentity) -> Result<ErrorReport> {
    if src.num_edges() == 0 || gen.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let grid = src.unique_timestamps();
    let src_snaps = aligned_snapshots(src, &grid, mode);
    let gen_snaps = aligned_snapshots(gen, &grid, mode);
    let per_snapshot: Vec<(f64, SnapshotStats, SnapshotStats)> = grid
        .par_iter()
        .zip(src_snaps.par_iter().zip(gen_snaps.par_iter()))
        .map(|(&t, (s, g))| (t, stats(s), stats(g)))
        .collect();
    let mut out = BTreeMap::new();
    for (i, name) in STAT_NAMES.iter().enumerate() {
        let errs: Vec<f64> = per_snapshot
            .iter()
            .map(|(_, s, g)| (s.values()[i] - g.values()[i]).abs())
            .collect();
        out.insert(*name, summarize(&errs));
    }
    Ok(ErrorReport {
        stats: out,
        overlap_percent: edge_overlap(src, gen, identity),
        snapshots: grid.len(),
        generation_seconds: None,
        per_snapshot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TemporalEdge;

    #[test]
    fn triangle() {
        let s = stats(&StaticGraph::from_pairs(3, [(0, 1), (1, 2), (0, 2)]));
        assert_eq!(s.mean_degree, 2.0);
        assert_eq!(s.wedge_count, 3.0);
        assert_eq!(s.triangle_count, 1.0);
        assert_eq!(s.global_cf, 1.0);
        assert_eq!((s.lcc_size, s.num_components), (3.0, 1.0));
        assert_eq!(s.mean_betweenness, 0.0);
        assert_eq!(s.mean_closeness, 1.0);
    }

    #[test]
    fn path_and_edge() {
        let s = stats(&StaticGraph::from_pairs(3, [(0, 1), (1, 2)]));
        assert_eq!((s.wedge_count, s.triangle_count, s.global_cf), (1.0, 0.0, 0.0));
        let s = stats(&StaticGraph::from_pairs(5, [(3, 4)]));
        assert_eq!((s.mean_degree, s.num_components, s.lcc_size), (1.0, 1.0, 2.0));
        assert_eq!(stats(&StaticGraph::from_pairs(3, [])), SnapshotStats::default());
    }

    #[test]
    fn self_report_is_zero() {
        let g = TemporalGraph::new(
            4,
            vec![
                TemporalEdge::new(0, 1, 1.0),
                TemporalEdge::new(1, 2, 1.0),
                TemporalEdge::new(2, 3, 2.0),
            ],
        )
        .unwrap();
        for mode in [SnapshotMode::At, SnapshotMode::Upto] {
            let r = error_report(&g, &g, mode, NodeIdentity::Shared).unwrap();
            assert!(r.stats.values().all(|e| e.median == 0.0 && e.mean == 0.0));
            assert_eq!(r.overlap_percent, 100.0);
        }
        let half = TemporalGraph::new(4, vec![TemporalEdge::new(0, 1, 1.0)]).unwrap();
        let two = TemporalGraph::new(4, vec![TemporalEdge::new(0, 1, 1.0), TemporalEdge::new(2, 3, 2.0)]).unwrap();
        assert_eq!(edge_overlap(&two, &half, NodeIdentity::Shared), 50.0);
        assert_eq!(edge_overlap(&two, &two, NodeIdentity::Disjoint), 0.0);
    }

    #[test]
    fn off_grid_overlap_uses_half_unit() {
        let src = TemporalGraph::new(3, vec![TemporalEdge::new(0, 1, 1.0), TemporalEdge::new(1, 2, 2.0)]).unwrap();
        let gen = TemporalGraph::new(3, vec![TemporalEdge::new(0, 1, 1.3), TemporalEdge::new(1, 2, 2.7)]).unwrap();
        assert_eq!(edge_overlap(&src, &gen, NodeIdentity::Shared), 50.0);
    }

    #[test]
    fn csv_and_json_layout() {
        let g = TemporalGraph::new(2, vec![TemporalEdge::new(0, 1, 1.0)]).unwrap();
        let r = error_report(&g, &g, SnapshotMode::At, NodeIdentity::Shared).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("statistic,median_abs_err,mean_abs_err,std\nmean_degree,0,0,0\n"));
        assert_eq!(csv.lines().count(), 11);
        assert!(r.to_json().contains("\"edge_overlap_percent\": 100.0"));
    }
}
