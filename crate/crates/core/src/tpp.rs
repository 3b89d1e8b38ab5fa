//! Intensity-free temporal point process: a log-normal mixture over the gap
//! to the next event, parameterized by affine maps of a feature vector.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{self, ParamId, ParamSet, Tensor};

/// Observed gaps are clamped below to keep `ln dt` finite on simultaneous events.
pub const MIN_GAP: f64 = 1e-6;

/// Raw log-sigma outputs are clamped to this range before exponentiation.
pub const LOG_SIGMA_CLAMP: f64 = 10.0;

/// Lower clamp for the gap mixture's log-sigma. Gaps on an integer clock
/// would otherwise pull sigma toward zero and the density toward spikes.
pub const LOG_SIGMA_MIN: f64 = -2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Component means (log-space), scales and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
}

impl MixtureParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.len() != sigma.len() || mu.len() != phi.len() {
            return Err(Error::Dimension(format!(
                "mixture with {} means, {} scales, {} weights",
                mu.len(),
                sigma.len(),
                phi.len()
            )));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidDistribution("non-positive sigma".into()));
        }
        let total: f64 = phi.iter().sum();
        if phi.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Ok(MixtureParams { mu, sigma, phi })
    }

    pub fn components(&self) -> usize {
        self.mu.len()
    }

    fn component_log_terms(&self, dt: f64) -> Vec<f64> {
        let y = dt.ln();
        (0..self.mu.len())
            .map(|c| {
                let z = (y - self.mu[c]) / self.sigma[c];
                self.phi[c].ln() - y - self.sigma[c].ln() - HALF_LN_2PI - 0.5 * z * z
            })
            .collect()
    }

    /// Log of the mixture density at `dt > 0`.
    pub fn log_prob(&self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveGap(dt));
        }
        Ok(nn::log_sum_exp(&self.component_log_terms(dt)))
    }

    /// Picks a component from the weights, then `exp(sigma_c * eps + mu_c)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = if self.phi.len() == 1 {
            0
        } else {
            nn::sample_categorical(&self.phi, rng)
        };
        let eps: f64 = rng.sample(StandardNormal);
        (self.sigma[c] * eps + self.mu[c]).exp().max(f64::MIN_POSITIVE)
    }

    /// `sum_c phi_c exp(mu_c + sigma_c^2 / 2)`.
    pub fn mean(&self) -> f64 {
        (0..self.mu.len())
            .map(|c| self.phi[c] * (self.mu[c] + 0.5 * self.sigma[c] * self.sigma[c]).exp())
            .sum()
    }
}

/// Three `C x F` affine maps from a feature vector to mixture parameters.
#[derive(Debug, Clone, Copy)]
pub struct MixtureHead {
    w_mu: ParamId,
    w_sigma: ParamId,
    w_phi: ParamId,
    components: usize,
    features: usize,
}

/// Head outputs for one feature vector, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MixtureForward {
    pub params: MixtureParams,
    log_sigma_raw: Vec<f64>,
}

impl MixtureHead {
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        components: usize,
        features: usize,
        rng: &mut R,
    ) -> Self {
        let scale = 1.0 / (features as f64).sqrt();
        MixtureHead {
            w_mu: params.add(
                format!("{prefix}.w_mu"),
                Tensor::uniform(components, features, scale, rng),
            ),
            w_sigma: params.add(
                format!("{prefix}.w_sigma"),
                Tensor::uniform(components, features, 0.1 * scale, rng),
            ),
            w_phi: params.add(
                format!("{prefix}.w_phi"),
                Tensor::uniform(components, features, scale, rng),
            ),
            components,
            features,
        }
    }

    pub fn bind(params: &ParamSet, prefix: &str) -> Option<Self> {
        let w_mu = params.id(&format!("{prefix}.w_mu"))?;
        let w_sigma = params.id(&format!("{prefix}.w_sigma"))?;
        let w_phi = params.id(&format!("{prefix}.w_phi"))?;
        let (components, features) = params[w_mu].shape();
        Some(MixtureHead {
            w_mu,
            w_sigma,
            w_phi,
            components,
            features,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn forward(&self, params: &ParamSet, feat: &[f64]) -> Result<MixtureForward> {
        if feat.len() != self.features {
            return Err(Error::Dimension(format!(
                "mixture head expects {} features, got {}",
                self.features,
                feat.len()
            )));
        }
        let mu = params[self.w_mu].mul_vec(feat);
        let log_sigma_raw = params[self.w_sigma].mul_vec(feat);
        let sigma = log_sigma_raw
            .iter()
            .map(|s| s.clamp(LOG_SIGMA_MIN, LOG_SIGMA_CLAMP).exp())
            .collect();
        let phi = nn::softmax(&params[self.w_phi].mul_vec(feat));
        Ok(MixtureForward {
            params: MixtureParams { mu, sigma, phi },
            log_sigma_raw,
        })
    }

    /// Parameters for the concatenated features `node_feat ++ o`.
    pub fn mixture_params(&self, params: &ParamSet, node_feat: &[f64], o: &[f64]) -> Result<MixtureParams> {
        let mut feat = node_feat.to_vec();
        feat.extend_from_slice(o);
        Ok(self.forward(params, &feat)?.params)
    }

    /// Negative log-likelihood of the (clamped) gap. Accumulates `scale *`
    /// dNLL/dweights into `grads` and `scale *` dNLL/dfeat into `d_feat`.
    pub fn nll_backward(
        &self,
        params: &ParamSet,
        feat: &[f64],
        dt: f64,
        scale: f64,
        grads: &mut ParamSet,
        d_feat: &mut [f64],
    ) -> Result<f64> {
        let fwd = self.forward(params, feat)?;
        let dt = dt.max(MIN_GAP);
        let y = dt.ln();
        let p = &fwd.params;
        let terms = p.component_log_terms(dt);
        let lse = nn::log_sum_exp(&terms);
        let c_n = self.components;
        let mut d_mu = vec![0.0; c_n];
        let mut d_ls = vec![0.0; c_n];
        let mut d_logit = vec![0.0; c_n];
        for c in 0..c_n {
            let r = (terms[c] - lse).exp();
            let z = (y - p.mu[c]) / p.sigma[c];
            // Gradients of -log p.
            d_mu[c] = -r * z / p.sigma[c];
            let raw = fwd.log_sigma_raw[c];
            d_ls[c] = if raw > LOG_SIGMA_MIN && raw < LOG_SIGMA_CLAMP {
                -r * (z * z - 1.0)
            } else {
                0.0
            };
            d_logit[c] = p.phi[c] - r;
        }
        for (w, d) in [(self.w_mu, &d_mu), (self.w_sigma, &d_ls), (self.w_phi, &d_logit)] {
            grads[w].add_outer(d, feat, scale);
            let mut df = vec![0.0; self.features];
            params[w].matvec_t_acc(d, &mut df);
            nn::tensor::axpy(scale, &df, d_feat);
        }
        Ok(-lse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn single(mu: f64, sigma: f64) -> MixtureParams {
        MixtureParams::new(vec![mu], vec![sigma], vec![1.0]).unwrap()
    }

    #[test]
    fn standard_lognormal_at_one() {
        let lp = single(0.0, 1.0).log_prob(1.0).unwrap();
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        assert!((lp + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn identical_components_collapse() {
        let two = MixtureParams::new(vec![0.4, 0.4], vec![0.7, 0.7], vec![0.5, 0.5]).unwrap();
        let one = single(0.4, 0.7);
        for dt in [0.1, 1.0, 3.5] {
            assert!((two.log_prob(dt).unwrap() - one.log_prob(dt).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_gaps_and_params() {
        assert!(single(0.0, 1.0).log_prob(0.0).is_err());
        assert!(single(0.0, 1.0).log_prob(-1.0).is_err());
        assert!(MixtureParams::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
        assert!(MixtureParams::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.7, 0.7]).is_err());
    }

    #[test]
    fn degenerate_sampler() {
        let mut rng = seeded(0);
        let d = single(0.0, 1e-12).sample(&mut rng);
        assert!((d - 1.0).abs() < 1e-9);
        let d = single(5f64.ln(), 1e-12).sample(&mut rng);
        assert!((d - 5.0).abs() < 1e-9);
    }

    #[test]
    fn zero_head_gives_uniform_params() {
        let mut p = ParamSet::new();
        let head = MixtureHead::register(&mut p, "mix", 4, 6, &mut seeded(1));
        p.zero();
        let m = head.mixture_params(&p, &[0.3; 2], &[1.0; 4]).unwrap();
        assert_eq!(m.mu, vec![0.0; 4]);
        assert_eq!(m.sigma, vec![1.0; 4]);
        assert!(m.phi.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!(head.mixture_params(&p, &[0.3; 3], &[1.0; 4]).is_err());
    }

    #[test]
    fn single_component_weight_is_one() {
        let mut p = ParamSet::new();
        let head = MixtureHead::register(&mut p, "mix", 1, 3, &mut seeded(2));
        let m = head.mixture_params(&p, &[0.5], &[1.0, -2.0]).unwrap();
        assert_eq!(m.phi, vec![1.0]);
    }
}
