//! Exact cosine-similarity matching of embeddings to a node table.

use rayon::prelude::*;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::tensor::dot;

/// Node table with precomputed row norms.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    table: EmbeddingTable,
    norms: Vec<f64>,
}

impl NearestIndex {
    pub fn new(table: EmbeddingTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Config("empty node table".into()));
        }
        let norms = table.rows().map(|r| dot(r, r).sqrt()).collect();
        Ok(NearestIndex { table, norms })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    /// Row with the highest cosine similarity to `query`, lowest index on
    /// ties. Zero-norm table rows have similarity 0.
    pub fn query(&self, query: &[f64]) -> Result<usize> {
        if query.len() != self.table.dim() {
            return Err(Error::Dimension(format!(
                "query has {} entries, table rows have {}",
                query.len(),
                self.table.dim()
            )));
        }
        let qn = dot(query, query).sqrt();
        if !(qn > 0.0) {
            return Err(Error::Numerical("zero-norm query".into()));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, r) in self.table.rows().enumerate() {
            let sim = if self.norms[i] > 0.0 {
                dot(query, r) / (qn * self.norms[i])
            } else {
                0.0
            };
            if sim > best.1 {
                best = (i, sim);
            }
        }
        Ok(best.0)
    }

    pub fn query_all(&self, queries: &[Vec<f64>]) -> Result<Vec<usize>> {
        queries.par_iter().map(|q| self.query(q)).collect()
    }
}

pub fn nearest_node(query: &[f64], table: &EmbeddingTable) -> Result<usize> {
    NearestIndex::new(table.clone())?.query(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_row_and_single_row() {
        let t = EmbeddingTable::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]]).unwrap();
        assert_eq!(nearest_node(&[0.6, 0.8], &t).unwrap(), 1);
        assert_eq!(nearest_node(&[3.0, 4.0], &t).unwrap(), 1);
        let one = EmbeddingTable::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(nearest_node(&[-1.0, -2.0], &one).unwrap(), 0);
    }

    #[test]
    fn ties_and_errors() {
        let t = EmbeddingTable::from_rows(&[vec![2.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(nearest_node(&[5.0, 0.0], &t).unwrap(), 0);
        assert!(nearest_node(&[0.0, 0.0], &t).is_err());
        assert!(nearest_node(&[1.0], &t).is_err());
        let empty = EmbeddingTable::from_rows(&[]).unwrap();
        assert!(nearest_node(&[1.0], &empty).is_err());
    }
}
