//! Learned time encoding: one linear component followed by sinusoids.

use rand::Rng;

use super::tensor::{ParamId, ParamSet, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Time2Vec {
    omega: ParamId,
    zeta: ParamId,
    dim: usize,
}

impl Time2Vec {
    /// Frequencies are drawn so that periods span roughly `[time_scale / dim, time_scale]`.
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        time_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(dim >= 2, "time encoding needs a linear and a periodic component");
        let scale = time_scale.max(1e-9);
        let mut omega = Tensor::zeros(1, dim);
        let mut zeta = Tensor::zeros(1, dim);
        omega[(0, 0)] = 1.0 / scale;
        for r in 1..dim {
            let period = scale * rng.random_range(1.0 / dim as f64..1.0);
            omega[(0, r)] = std::f64::consts::TAU / period;
            zeta[(0, r)] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        Time2Vec {
            omega: params.add(format!("{prefix}.omega"), omega),
            zeta: params.add(format!("{prefix}.zeta"), zeta),
            dim,
        }
    }

    pub fn bind(params: &ParamSet, prefix: &str) -> Option<Self> {
        let omega = params.id(&format!("{prefix}.omega"))?;
        let zeta = params.id(&format!("{prefix}.zeta"))?;
        Some(Time2Vec {
            omega,
            zeta,
            dim: params[omega].cols(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode(&self, params: &ParamSet, t: f64, out: &mut [f64]) {
        encode_raw(params[self.omega].data(), params[self.zeta].data(), t, out);
    }

    /// Accumulates dL/d(omega, zeta) given dL/d(encoding).
    pub fn backward(&self, params: &ParamSet, t: f64, d_out: &[f64], grads: &mut ParamSet) {
        let omega = params[self.omega].data();
        let zeta = params[self.zeta].data();
        let mut d_omega = vec![0.0; self.dim];
        let mut d_zeta = vec![0.0; self.dim];
        d_omega[0] = d_out[0] * t;
        d_zeta[0] = d_out[0];
        for r in 1..self.dim {
            let c = (omega[r] * t + zeta[r]).cos() * d_out[r];
            d_omega[r] = c * t;
            d_zeta[r] = c;
        }
        for (g, d) in grads[self.omega].data_mut().iter_mut().zip(&d_omega) {
            *g += d;
        }
        for (g, d) in grads[self.zeta].data_mut().iter_mut().zip(&d_zeta) {
            *g += d;
        }
    }
}

/// `out[0] = omega[0] t + zeta[0]`, `out[r] = sin(omega[r] t + zeta[r])`.
pub fn encode_raw(omega: &[f64], zeta: &[f64], t: f64, out: &mut [f64]) {
    out[0] = omega[0] * t + zeta[0];
    for r in 1..out.len() {
        out[r] = (omega[r] * t + zeta[r]).sin();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_parameters_encode_to_zero() {
        let mut out = [1.0; 4];
        encode_raw(&[0.0; 4], &[0.0; 4], 3.0, &mut out);
        assert_eq!(out, [0.0; 4]);
    }

    #[test]
    fn quarter_period() {
        let mut out = [0.0; 2];
        encode_raw(&[0.0, std::f64::consts::FRAC_PI_2], &[0.0, 0.0], 1.0, &mut out);
        assert!((out[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = seeded(5);
        let mut p = ParamSet::new();
        let t2v = Time2Vec::register(&mut p, "t2v", 6, 50.0, &mut rng);
        let om = p.tensors()[0].data().to_vec();
        let ze = p.tensors()[1].data().to_vec();
        let t = 17.25;
        let mut out = vec![0.0; 6];
        t2v.encode(&p, t, &mut out);
        assert!((out[0] - (om[0] * t + ze[0])).abs() < 1e-15);
        for r in 1..6 {
            assert!((out[r] - (om[r] * t + ze[r]).sin()).abs() < 1e-15);
        }
    }
}
