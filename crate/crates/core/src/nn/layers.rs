use rand::Rng;

use crate::error::NnError;
use crate::nn::init::glorot;
use crate::nn::params::{Binding, ParamId, ParamSet};
use crate::nn::tape::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-batched affine map `x Wᵀ + b` with `W: out × in`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), glorot(rng, output, input));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(1, output)));
        Self { weight, bias, input, output }
    }

    pub fn forward<'t, T: Scalar>(&self, b: &Binding<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let y = x.matmul_nt(b.get(self.weight))?;
        match self.bias {
            Some(bias) => y.add_row(b.get(bias)),
            None => Ok(y),
        }
    }
}

/// Two-layer feed-forward net: dense, ReLU, dense. The caller applies any
/// output nonlinearity.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    pub hidden: Dense,
    pub out: Dense,
}

impl Mlp2 {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            hidden: Dense::new(params, &format!("{name}.0"), input, hidden, true, rng),
            out: Dense::new(params, &format!("{name}.1"), hidden, output, true, rng),
        }
    }

    pub fn forward<'t, T: Scalar>(&self, b: &Binding<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let h = self.hidden.forward(b, x)?.relu();
        self.out.forward(b, h)
    }

    pub fn input(&self) -> usize {
        self.hidden.input
    }
}
