//! Temporal interaction graphs: storage, edge-list I/O, static projection and
//! snapshot extraction.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An undirected interaction between two distinct nodes at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalEdge {
    pub u: usize,
    pub v: usize,
    pub t: f64,
}

impl TemporalEdge {
    pub fn new(u: usize, v: usize, t: f64) -> Self {
        TemporalEdge { u, v, t }
    }

    /// Orientation-free identity of the edge.
    pub fn key(&self) -> (usize, usize, u64) {
        let (a, b) = ordered_pair(self.u, self.v);
        (a, b, self.t.to_bits())
    }

    pub fn pair(&self) -> (usize, usize) {
        ordered_pair(self.u, self.v)
    }
}

#[inline]
pub fn ordered_pair(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// One entry of a node's time-sorted incidence list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incidence {
    pub neighbor: usize,
    pub t: f64,
}

/// Immutable temporal graph with per-node incidence lists sorted by time.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    num_nodes: usize,
    edges: Vec<TemporalEdge>,
    offsets: Vec<usize>,
    incidence: Vec<Incidence>,
    time_order: Vec<usize>,
    t_max: f64,
}

impl TemporalGraph {
    /// Builds a graph, rejecting self-loops, negative or non-finite times,
    /// out-of-range endpoints and duplicate `(u, v, t)` triples.
    pub fn new(num_nodes: usize, edges: Vec<TemporalEdge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            for end in [e.u, e.v] {
                if end >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        index: end,
                        size: num_nodes,
                    });
                }
            }
            if e.u == e.v {
                return Err(Error::Config(format!("edge {i} is a self-loop on {}", e.u)));
            }
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(Error::Config(format!("edge {i} has invalid time {}", e.t)));
            }
            if !seen.insert(e.key()) {
                return Err(Error::Config(format!(
                    "duplicate edge ({}, {}, {})",
                    e.u, e.v, e.t
                )));
            }
        }
        Ok(Self::build(num_nodes, edges))
    }

    /// Builds a graph from possibly repeated triples, keeping the first copy.
    pub fn from_edges_dedup(num_nodes: usize, edges: Vec<TemporalEdge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let kept = edges.into_iter().filter(|e| seen.insert(e.key())).collect();
        Self::new(num_nodes, kept)
    }

    fn build(num_nodes: usize, edges: Vec<TemporalEdge>) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for e in &edges {
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..num_nodes].to_vec();
        let mut incidence = vec![
            Incidence {
                neighbor: 0,
                t: 0.0
            };
            offsets[num_nodes]
        ];
        for e in &edges {
            incidence[cursor[e.u]] = Incidence {
                neighbor: e.v,
                t: e.t,
            };
            cursor[e.u] += 1;
            incidence[cursor[e.v]] = Incidence {
                neighbor: e.u,
                t: e.t,
            };
            cursor[e.v] += 1;
        }
        for v in 0..num_nodes {
            incidence[offsets[v]..offsets[v + 1]]
                .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.neighbor.cmp(&b.neighbor)));
        }
        let mut time_order: Vec<usize> = (0..edges.len()).collect();
        time_order.sort_by(|&a, &b| edges[a].t.total_cmp(&edges[b].t));
        let t_max = edges.iter().map(|e| e.t).fold(0.0, f64::max);
        TemporalGraph {
            num_nodes,
            edges,
            offsets,
            incidence,
            time_order,
            t_max,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[TemporalEdge] {
        &self.edges
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Incident edges of `v`, ascending in time.
    pub fn incidence(&self, v: usize) -> &[Incidence] {
        &self.incidence[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Edges sorted by time (stable w.r.t. insertion order).
    pub fn edges_by_time(&self) -> impl Iterator<Item = &TemporalEdge> + '_ {
        self.time_order.iter().map(move |&i| &self.edges[i])
    }

    /// Distinct timestamps in ascending order.
    pub fn unique_timestamps(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for e in self.edges_by_time() {
            if out.last() != Some(&e.t) {
                out.push(e.t);
            }
        }
        out
    }

    /// Collapses time: the set of endpoint pairs that ever interacted.
    pub fn static_projection(&self) -> StaticGraph {
        StaticGraph::from_pairs(self.num_nodes, self.edges.iter().map(|e| (e.u, e.v)))
    }

    pub fn snapshot(&self, t: f64, mode: SnapshotMode) -> Result<StaticGraph> {
        let by_time: Vec<&TemporalEdge> = self.edges_by_time().collect();
        let lo = by_time.partition_point(|e| e.t < t);
        let hi = by_time.partition_point(|e| e.t <= t);
        match mode {
            SnapshotMode::At => {
                if lo == hi {
                    return Err(Error::TimestampAbsent(t));
                }
                Ok(StaticGraph::from_pairs(
                    self.num_nodes,
                    by_time[lo..hi].iter().map(|e| (e.u, e.v)),
                ))
            }
            SnapshotMode::Upto => Ok(StaticGraph::from_pairs(
                self.num_nodes,
                by_time[..hi].iter().map(|e| (e.u, e.v)),
            )),
        }
    }

    /// All snapshots at the graph's own unique timestamps, in time order.
    pub fn snapshots(&self, mode: SnapshotMode) -> Vec<(f64, StaticGraph)> {
        let mut out = Vec::new();
        let mut acc: Vec<(usize, usize)> = Vec::new();
        let mut current: Option<f64> = None;
        let mut slice: Vec<(usize, usize)> = Vec::new();
        let mut flush = |t: f64, slice: &mut Vec<(usize, usize)>, acc: &mut Vec<(usize, usize)>| {
            let g = match mode {
                SnapshotMode::At => StaticGraph::from_pairs(self.num_nodes, slice.iter().copied()),
                SnapshotMode::Upto => {
                    acc.extend_from_slice(slice);
                    StaticGraph::from_pairs(self.num_nodes, acc.iter().copied())
                }
            };
            slice.clear();
            out.push((t, g));
        };
        for e in self.edges_by_time() {
            if current.is_some_and(|c| c != e.t) {
                flush(current.unwrap(), &mut slice, &mut acc);
            }
            current = Some(e.t);
            slice.push((e.u, e.v));
        }
        if let Some(t) = current {
            flush(t, &mut slice, &mut acc);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapshotMode {
    /// Edges carrying exactly the requested timestamp.
    #[default]
    At,
    /// Edges with timestamp at most the requested one.
    Upto,
}

impl std::str::FromStr for SnapshotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "at" => Ok(SnapshotMode::At),
            "upto" => Ok(SnapshotMode::Upto),
            other => Err(Error::Config(format!("unknown snapshot mode `{other}`"))),
        }
    }
}

/// Undirected simple graph over a node universe of size `num_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl StaticGraph {
    /// Self-loops are dropped and duplicate pairs collapse.
    pub fn from_pairs(num_nodes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| ordered_pair(a, b))
            .collect();
        StaticGraph {
            num_nodes,
            edges: set.into_iter().collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Pairs `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&ordered_pair(a, b)).is_ok()
    }

    /// Sorted neighbor lists over the full node universe.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Nodes with at least one incident edge, ascending.
    pub fn incident_nodes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        set.into_iter().collect()
    }
}

/// Result of reading an edge-list file.
#[derive(Debug, Clone)]
pub struct EdgeListImport {
    pub graph: TemporalGraph,
    /// `labels[i]` is the original label of dense node index `i`.
    pub labels: Vec<String>,
    pub self_loops_rejected: usize,
    pub duplicates_removed: usize,
}

impl EdgeListImport {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Parses `source,target,timestamp` records. Labels are remapped to dense
/// indices in order of first appearance; `#` lines and blank lines are skipped.
pub fn parse_edge_list(reader: impl BufRead, dedupe: bool) -> Result<EdgeListImport> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut self_loops = 0;
    let mut duplicates = 0;

    let mut intern = |label: &str| -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        let i = labels.len();
        labels.push(label.to_string());
        index.insert(label.to_string(), i);
        i
    };

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        let record = line.trim();
        if record.is_empty() || record.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = record.split(',').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected `source,target,timestamp`, got `{record}`"),
            });
        }
        let t: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("bad timestamp `{}`", fields[2]),
        })?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("timestamp must be finite and non-negative, got {t}"),
            });
        }
        if fields[0] == fields[1] {
            self_loops += 1;
            continue;
        }
        let u = intern(fields[0]);
        let v = intern(fields[1]);
        let edge = TemporalEdge::new(u, v, t);
        if !seen.insert(edge.key()) {
            if dedupe {
                duplicates += 1;
                continue;
            }
            return Err(Error::Parse {
                line: lineno,
                reason: format!("duplicate interaction `{record}`"),
            });
        }
        edges.push(edge);
    }
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let graph = TemporalGraph::build(labels.len(), edges);
    Ok(EdgeListImport {
        graph,
        labels,
        self_loops_rejected: self_loops,
        duplicates_removed: duplicates,
    })
}

/// Parses an edge list whose labels must all come from `labels`, so node
/// indices agree with the graph that produced the label map.
pub fn parse_edge_list_with_labels(reader: impl BufRead, labels: &[String]) -> Result<TemporalGraph> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let import = parse_edge_list(reader, false)?;
    let mut edges = Vec::with_capacity(import.graph.num_edges());
    for e in import.graph.edges() {
        let map = |i: usize| {
            let l = &import.labels[i];
            index.get(l.as_str()).copied().ok_or_else(|| Error::Parse {
                line: 0,
                reason: format!("unknown node label `{l}`"),
            })
        };
        edges.push(TemporalEdge::new(map(e.u)?, map(e.v)?, e.t));
    }
    TemporalGraph::new(labels.len(), edges)
}

pub fn load_edge_list_with_labels(path: impl AsRef<Path>, labels: &[String]) -> Result<TemporalGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list_with_labels(BufReader::new(file), labels)
}

pub fn load_edge_list(path: impl AsRef<Path>, dedupe: bool) -> Result<EdgeListImport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let import = parse_edge_list(BufReader::new(file), dedupe)?;
    if import.self_loops_rejected > 0 {
        log::warn!(
            "{}: rejected {} self-loop records",
            path.display(),
            import.self_loops_rejected
        );
    }
    Ok(import)
}

/// Writes `source,target,timestamp` lines; labels default to the dense index.
pub fn write_edge_list(
    graph: &TemporalGraph,
    labels: Option<&[String]>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for e in graph.edges() {
        match labels {
            Some(l) => writeln!(out, "{},{},{}", l[e.u], l[e.v], e.t)?,
            None => writeln!(out, "{},{},{}", e.u, e.v, e.t)?,
        }
    }
    out.flush()
}

pub fn save_edge_list(
    graph: &TemporalGraph,
    labels: Option<&[String]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_edge_list(graph, labels, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Writes the `label,index` map.
pub fn save_label_map(labels: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (i, l) in labels.iter().enumerate() {
            writeln!(out, "{l},{i}")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, dedupe: bool) -> Result<EdgeListImport> {
        parse_edge_list(Cursor::new(text.as_bytes()), dedupe)
    }

    fn graph(edges: &[(usize, usize, f64)]) -> TemporalGraph {
        let n = edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0);
        TemporalGraph::new(
            n,
            edges.iter().map(|&(u, v, t)| TemporalEdge::new(u, v, t)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn loads_small_file() {
        let g = parse("a,b,1\nb,c,2\n", true).unwrap();
        assert_eq!(g.graph.num_nodes(), 3);
        assert_eq!(g.graph.num_edges(), 2);
        assert_eq!(g.graph.t_max(), 2.0);
        assert_eq!(g.labels, vec!["a", "b", "c"]);
    }

    #[test]
    fn dedupe_collapses_repeats() {
        let g = parse("a,b,1\na,b,1\nb,a,1\n", true).unwrap();
        assert_eq!(g.graph.num_edges(), 1);
        assert_eq!(g.duplicates_removed, 2);
        assert!(parse("a,b,1\na,b,1\n", false).is_err());
    }

    #[test]
    fn malformed_line_reports_number() {
        match parse("# header\na,b,1\na,b\n", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse("a,b,x\n", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_loops_are_counted_and_dropped() {
        let g = parse("a,a,1\na,b,2\n", true).unwrap();
        assert_eq!(g.self_loops_rejected, 1);
        assert_eq!(g.graph.num_edges(), 1);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse("# nothing\n", true), Err(Error::EmptyGraph)));
    }

    #[test]
    fn static_projection_collapses_time() {
        let g = graph(&[(0, 1, 1.0), (0, 1, 5.0), (1, 2, 3.0)]);
        assert_eq!(g.static_projection().edges(), &[(0, 1), (1, 2)]);
        let tri = graph(&[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]);
        assert_eq!(tri.static_projection().num_edges(), 3);
        let empty = TemporalGraph::new(3, vec![]).unwrap();
        assert_eq!(empty.static_projection().num_edges(), 0);
    }

    #[test]
    fn snapshot_modes() {
        let g = graph(&[(0, 1, 1.0), (1, 2, 2.0)]);
        assert_eq!(g.snapshot(1.0, SnapshotMode::At).unwrap().edges(), &[(0, 1)]);
        assert_eq!(
            g.snapshot(2.0, SnapshotMode::Upto).unwrap().edges(),
            &[(0, 1), (1, 2)]
        );
        assert!(matches!(
            g.snapshot(3.0, SnapshotMode::At),
            Err(Error::TimestampAbsent(_))
        ));
    }

    #[test]
    fn unique_timestamps_sorted() {
        let g = graph(&[(2, 3, 5.0), (0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(g.unique_timestamps(), vec![1.0, 5.0]);
        assert!(TemporalGraph::new(2, vec![]).unwrap().unique_timestamps().is_empty());
        let distinct = graph(&[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0)]);
        assert_eq!(distinct.unique_timestamps().len(), 3);
    }

    #[test]
    fn rejects_invalid_edges() {
        assert!(TemporalGraph::new(2, vec![TemporalEdge::new(0, 0, 1.0)]).is_err());
        assert!(TemporalGraph::new(2, vec![TemporalEdge::new(0, 2, 1.0)]).is_err());
        assert!(TemporalGraph::new(2, vec![TemporalEdge::new(0, 1, -1.0)]).is_err());
        assert!(TemporalGraph::new(
            2,
            vec![TemporalEdge::new(0, 1, 1.0), TemporalEdge::new(1, 0, 1.0)]
        )
        .is_err());
    }

    #[test]
    fn incidence_is_time_sorted() {
        let g = graph(&[(0, 1, 7.0), (0, 2, 1.0), (0, 3, 4.0)]);
        let times: Vec<f64> = g.incidence(0).iter().map(|i| i.t).collect();
        assert_eq!(times, vec![1.0, 4.0, 7.0]);
        assert_eq!(g.degree(0), 3);
    }
}
