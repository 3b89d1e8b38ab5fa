//! Central finite-difference verification of analytic gradients.

use super::tensor::ParamSet;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale. With a
/// 1e-5 step and losses of order 10, difference quotients carry ~1e-10 of
/// rounding noise, so the floor has to sit well above that.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Perturbs every scalar of `params` by `±step` and compares the central
/// difference of `loss` with `analytic`.
pub fn check_gradients(
    params: &ParamSet,
    analytic: &ParamSet,
    step: f64,
    mut loss: impl FnMut(&ParamSet) -> f64,
) -> GradCheckReport {
    assert!(params.same_layout(analytic));
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work = params.clone();
    for k in 0..params.len() {
        for i in 0..params.tensors()[k].len() {
            let orig = params.tensors()[k].data()[i];
            work.tensors_mut()[k].data_mut()[i] = orig + step;
            let up = loss(&work);
            work.tensors_mut()[k].data_mut()[i] = orig - step;
            let down = loss(&work);
            work.tensors_mut()[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.tensors()[k].data()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = params.iter().nth(k).unwrap().0.to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let mut p = ParamSet::new();
        let x = p.add("x", Tensor::from_vec(1, 2, vec![0.7, -1.3]));
        let f = |p: &ParamSet| p[x].data()[0].powi(3) + p[x].data()[1].sin();
        let mut g = p.zeros_like();
        g[x].data_mut()[0] = 3.0 * 0.7f64.powi(2);
        g[x].data_mut()[1] = (-1.3f64).cos();
        assert!(check_gradients(&p, &g, FD_STEP, f).max_rel_error < 1e-8);
        g[x].data_mut()[1] *= -1.0;
        let bad = check_gradients(&p, &g, FD_STEP, f);
        assert!(bad.max_rel_error > 1.0);
        assert_eq!(bad.worst_index, 1);
    }
}
