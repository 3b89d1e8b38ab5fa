//! K-means with k-means++ seeding and Lloyd iterations.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng;

pub const MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Tensor,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub wcss_history: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn wcss(&self) -> f64 {
        self.wcss_history.last().copied().unwrap_or(0.0)
    }

    /// Index of the closest centroid, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        nearest_centroid(&self.centroids, x).0
    }

    /// `node,cluster` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,cluster\n");
        for (v, k) in self.assignment.iter().enumerate() {
            s.push_str(&format!("{v},{k}\n"));
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(centroids: &Tensor, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..centroids.rows() {
        let d = sq_dist(centroids.row(k), x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_seed<R: Rng + ?Sized>(table: &EmbeddingTable, k: usize, rng: &mut R) -> Tensor {
    let n = table.len();
    let d = table.dim();
    let mut centroids = Tensor::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(table.row(first));
    let mut dist: Vec<f64> = table.rows().map(|r| sq_dist(r, table.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(table.row(pick));
        for (i, r) in table.rows().enumerate() {
            dist[i] = dist[i].min(sq_dist(r, table.row(pick)));
        }
    }
    centroids
}

/// Clusters the rows of `table` into `k` groups.
pub fn kmeans_fit(table: &EmbeddingTable, k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let distinct = table.distinct_rows().len();
    if k > distinct {
        return Err(Error::Config(format!(
            "K = {k} exceeds the {distinct} distinct embeddings"
        )));
    }
    let mut rng = rng::seeded(seed);
    let n = table.len();
    let d = table.dim();
    let mut centroids = plus_plus_seed(table, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, r) in table.rows().enumerate() {
            let (c, dist) = nearest_centroid(&centroids, r);
            wcss += dist;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        history.push(wcss);
        if !changed {
            break;
        }
        let mut sums = Tensor::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, r) in table.rows().enumerate() {
            counts[assignment[i]] += 1;
            crate::nn::tensor::axpy(1.0, r, sums.row_mut(assignment[i]));
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        // Reseed empty clusters from the point farthest from its centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .map(|i| (i, sq_dist(table.row(i), centroids.row(assignment[i]))))
                .fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best })
                .0;
            counts[assignment[far]] -= 1;
            assignment[far] = c;
            counts[c] = 1;
            centroids.row_mut(c).copy_from_slice(table.row(far));
        }
    }
    Ok(ClusterModel {
        centroids,
        assignment,
        wcss_history: history,
    })
}
