//! Central finite differences over a [`ParamSet`].

use serde::Serialize;

use crate::nn::params::ParamSet;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-5)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// `(f(θ + h eᵢ) − f(θ − h eᵢ)) / 2h` for every coordinate of every array.
pub fn numeric_gradient(params: &ParamSet<f64>, mut f: impl FnMut(&ParamSet<f64>) -> f64, h: f64) -> Vec<Tensor<f64>> {
    let mut work = params.clone();
    let ids: Vec<_> = params.ids().collect();
    ids.iter()
        .map(|&id| {
            let (r, c) = params.value(id).shape();
            let mut g = Tensor::zeros(r, c);
            for k in 0..r * c {
                let x = params.value(id).data()[k];
                work.value_mut(id).data_mut()[k] = x + h;
                let up = f(&work);
                work.value_mut(id).data_mut()[k] = x - h;
                let down = f(&work);
                work.value_mut(id).data_mut()[k] = x;
                g.data_mut()[k] = (up - down) / (2.0 * h);
            }
            g
        })
        .collect()
}

/// Worst coordinate of an analytic/numeric comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub coordinates: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `params`' accumulated gradients against `numeric`, restricted
/// to arrays whose name satisfies `select`.
pub fn compare(params: &ParamSet<f64>, numeric: &[Tensor<f64>], select: impl Fn(&str) -> bool) -> GradCheck {
    let mut out = GradCheck::default();
    for (p, n) in params.iter().zip(numeric) {
        if !select(&p.name) {
            continue;
        }
        for (k, (&a, &b)) in p.grad.data().iter().zip(n.data()).enumerate() {
            out.coordinates += 1;
            let e = relative_error(a, b);
            if out.worst.is_empty() || e > out.max_rel_error {
                out.max_rel_error = e;
                out.worst = format!("{}[{k}]: analytic {a:.6e}, numeric {b:.6e}", p.name);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let mut params = ParamSet::new();
        let id = params.add("x", Tensor::row_vector(vec![1.0, -2.0]));
        let g = numeric_gradient(&params, |p| p.value(id).sum_squares(), FD_STEP);
        assert!((g[0].data()[0] - 2.0).abs() < 1e-8);
        assert!((g[0].data()[1] + 4.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-4).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
