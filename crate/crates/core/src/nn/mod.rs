//! Hand-written neural network pieces shared by both generative models.

pub mod gradcheck;
pub mod lstm;
pub mod mlp;
pub mod optim;
pub mod tensor;
pub mod time2vec;

pub use gradcheck::{check_gradients, GradCheckReport, FD_STEP};
pub use lstm::{Lstm, LstmState, StepCache};
pub use mlp::{Activation, Mlp};
pub use optim::{clip_grad_norm, Adam, RmsProp};
pub use tensor::{ParamId, ParamSet, Tensor};
pub use time2vec::Time2Vec;

/// Max-shifted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draws an index from a probability vector by inversion.
pub fn sample_categorical<R: rand::Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left mass at the tail: fall back to the last positive entry.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_saturates() {
        let mut logits = vec![0.0; 5];
        logits[2] = 50.0;
        let p = softmax(&logits);
        assert!(p[2] > 1.0 - 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_softmax_agrees_with_softmax() {
        let l = [0.3, -1.2, 4.0];
        let a = log_softmax(&l);
        let b = softmax(&l);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.exp() - y).abs() < 1e-15);
        }
    }
}
