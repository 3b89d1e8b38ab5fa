//! Inductive pipeline: structural node embeddings, clustering, a multi-mode
//! variational decoder over embedding space, and an adversarial sampler that
//! produces embeddings for a fresh node set.

pub mod kmeans;
pub mod model;
pub mod nearest;
pub mod sage;
pub mod wgan;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use kmeans::{kmeans_fit, ClusterModel};
pub use model::{InductiveConfig, InductiveDims, InductiveModel};
pub use nearest::{nearest_node, NearestIndex};
pub use sage::{boost_negatives, sage_embed, SageConfig};
pub use wgan::{Wgan, WganConfig};

/// One embedding row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vectors: Tensor,
}

impl EmbeddingTable {
    pub fn new(vectors: Tensor) -> Result<Self> {
        if !vectors.is_finite() {
            return Err(Error::Numerical("non-finite embedding".into()));
        }
        Ok(EmbeddingTable { vectors })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("ragged embedding rows".into()));
        }
        Self::new(Tensor::from_vec(rows.len(), dim, rows.concat()))
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(|i| self.vectors.row(i))
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.vectors
    }

    /// Rows with exact duplicates removed, first occurrence kept.
    pub fn distinct_rows(&self) -> Vec<Vec<f64>> {
        let mut seen = std::collections::HashSet::new();
        self.rows()
            .filter(|r| seen.insert(r.iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Header `N d`, then one whitespace-separated row per node.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.dim());
        for r in self.rows() {
            let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Parse { line, reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad(1, format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        let [n, d] = head[..] else {
            return Err(bad(1, "header must be `N d`".into()));
        };
        let mut data = Vec::with_capacity(n * d);
        let mut count = 0;
        for (i, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad(i + 1, format!("bad number `{x}`"))))
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(bad(i + 1, format!("expected {d} values, got {}", row.len())));
            }
            data.extend(row);
            count += 1;
        }
        if count != n {
            return Err(bad(0, format!("header declares {n} rows, found {count}")));
        }
        Self::new(Tensor::from_vec(n, d, data))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
