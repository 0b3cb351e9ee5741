use crate::nn::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias correction. Moment buffers follow the order of the
/// [`ParamSet`] the optimizer was created for.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, lr: T) -> Self {
        Self::with_betas(params, lr, T::of(0.9), T::of(0.999), T::of(1e-8))
    }

    pub fn with_betas(params: &ParamSet<T>, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Self { lr, beta1, beta2, eps, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update using the gradients currently stored in `params`.
    pub fn step(&mut self, params: &mut ParamSet<T>) {
        assert_eq!(params.len(), self.m.len(), "optimizer state does not match parameter set");
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                let gi = g[i];
                let mi = &mut m.data_mut()[i];
                *mi = self.beta1 * *mi + (one - self.beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = self.beta2 * *vi + (one - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;

    fn quadratic_grad(params: &mut ParamSet<f64>) {
        params.zero_grad();
        let tape = Tape::new();
        let b = params.bind(&tape);
        let x = b.vars()[0];
        let loss = x.mul(x).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        params.accumulate(&b, &grads);
    }

    #[test]
    fn minimizes_square() {
        let mut params = ParamSet::new();
        let id = params.add("x", Tensor::scalar(5.0));
        let mut adam = Adam::new(&params, 0.1);
        for _ in 0..500 {
            quadratic_grad(&mut params);
            adam.step(&mut params);
        }
        assert!(params.value(id).item().abs() < 1e-3, "x = {}", params.value(id).item());
    }

    #[test]
    fn first_step_is_lr_sized() {
        for scale in [1e-4, 1.0, 1e4] {
            let mut params = ParamSet::<f64>::new();
            let id = params.add("x", Tensor::scalar(0.0));
            params.iter_mut().next().unwrap().grad = Tensor::scalar(scale);
            let mut adam = Adam::new(&params, 0.01);
            adam.step(&mut params);
            let moved = params.value(id).item().abs();
            assert!((moved - 0.01).abs() < 1e-5, "scale {scale}: moved {moved}");
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut params = ParamSet::new();
        let id = params.add("w", Tensor::row_vector(vec![1.5, -2.0]));
        let mut adam = Adam::new(&params, 0.1);
        adam.step(&mut params);
        assert_eq!(params.value(id).data(), &[1.5, -2.0]);
    }
}
