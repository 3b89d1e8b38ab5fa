//! Vose's alias method: O(n) construction, O(1) draws.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// `weights` must be a probability vector (sum 1 within 1e-9).
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self::build(weights, total))
    }

    /// Accepts any non-negative weights with a positive sum.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("zero total weight".into()));
        }
        Ok(Self::build(weights, total))
    }

    fn build(weights: &[f64], total: f64) -> Self {
        let n = weights.len();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        AliasTable { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Per-outcome probabilities implied by the table.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut out = vec![0.0; self.prob.len()];
        for (i, (&p, &a)) in self.prob.iter().zip(&self.alias).enumerate() {
            out[i] += p / n;
            out[a] += (1.0 - p) / n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn single_outcome() {
        let t = AliasTable::new(&[1.0]).unwrap();
        let mut rng = seeded(1);
        assert!((0..100).all(|_| t.sample(&mut rng) == 0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AliasTable::new(&[]).is_err());
        assert!(AliasTable::new(&[1.5, -0.5]).is_err());
        assert!(AliasTable::new(&[0.2, 0.2]).is_err());
        assert!(AliasTable::from_weights(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_pair_is_balanced() {
        let t = AliasTable::new(&[0.5, 0.5]).unwrap();
        let mut rng = seeded(3);
        let ones = (0..20_000).filter(|_| t.sample(&mut rng) == 1).count();
        assert!((ones as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn reconstruction_matches_input(w in prop::collection::vec(0.0f64..10.0, 1..64)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let t = AliasTable::from_weights(&w).unwrap();
            for (a, b) in t.probabilities().iter().zip(&p) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
