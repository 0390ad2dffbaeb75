use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{dot, Graph, Tensor, Var};

/// A plain affine map `x · weight + bias` with `weight: in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[1, outputs]),
        }
    }

    /// He-style uniform weights scaled by fan-in, zero bias.
    pub fn fan_in<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        Dense {
            weight: Tensor::uniform(&[inputs, outputs], bound, rng),
            bias: Tensor::zeros(&[1, outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::shape("dense", &[x.len()], self.weight.shape()));
        }
        let n = self.outputs();
        let mut out = vec![0.0; n];
        for (p, &xv) in x.iter().enumerate() {
            let row = &self.weight.data()[p * n..(p + 1) * n];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xv * w;
            }
        }
        for (o, b) in out.iter_mut().zip(self.bias.data()) {
            *o += b;
        }
        Ok(out)
    }

    pub(crate) fn forward_graph(&self, g: &mut Graph, x: Var, vars: (Var, Var)) -> Result<Var> {
        let h = g.matmul(x, vars.0)?;
        g.add_row(h, vars.1)
    }
}

/// A fully connected layer whose weight is `W_s · diag(gains)`: a shared
/// matrix and bias trained across tasks, and a per-task gain vector of
/// the output width supplied by a weight generator.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedFcLayer {
    pub shared: Tensor,
    pub bias: Tensor,
    gains: Option<Vec<f64>>,
}

impl FactorizedFcLayer {
    pub fn new(shared: Tensor, bias: Tensor) -> Result<Self> {
        let s = shared.shape();
        if s.len() != 2 || bias.shape() != [1, s[1]] {
            return Err(Error::shape("factorized_fc", s, bias.shape()));
        }
        Ok(FactorizedFcLayer {
            shared,
            bias,
            gains: None,
        })
    }

    pub fn fan_in<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let d = Dense::fan_in(inputs, outputs, rng);
        FactorizedFcLayer {
            shared: d.weight,
            bias: d.bias,
            gains: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.shared.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.shared.shape()[1]
    }

    /// Number of values a generator must produce per task.
    pub fn generated_len(&self) -> usize {
        self.outputs()
    }

    pub fn install_gains(&mut self, gains: Vec<f64>) -> Result<()> {
        if gains.len() != self.outputs() {
            return Err(Error::shape("install_gains", &[gains.len()], &[self.outputs()]));
        }
        self.gains = Some(gains);
        Ok(())
    }

    pub fn clear_gains(&mut self) {
        self.gains = None;
    }

    pub fn gains(&self) -> Option<&[f64]> {
        self.gains.as_deref()
    }

    /// `(x · W_s) ⊙ gains + bias` using the installed gains.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let gains = self.gains.as_deref().ok_or(Error::GainsNotInstalled)?;
        self.forward_with(x, gains)
    }

    pub(crate) fn forward_with(&self, x: &[f64], gains: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = (self.inputs(), self.outputs());
        if x.len() != m {
            return Err(Error::shape("fc_dynamic_forward", &[x.len()], self.shared.shape()));
        }
        if gains.len() != n {
            return Err(Error::shape("fc_dynamic_forward", &[gains.len()], &[n]));
        }
        let mut h = vec![0.0; n];
        for (p, &xv) in x.iter().enumerate() {
            let row = &self.shared.data()[p * n..(p + 1) * n];
            for (o, &w) in h.iter_mut().zip(row) {
                *o += xv * w;
            }
        }
        for ((o, g), b) in h.iter_mut().zip(gains).zip(self.bias.data()) {
            *o = *o * g + b;
        }
        Ok(h)
    }

    /// The full weight `W_s · diag(gains)`; only used as a reference.
    pub fn materialized_weight(&self, gains: &[f64]) -> Result<Tensor> {
        let n = self.outputs();
        if gains.len() != n {
            return Err(Error::shape("materialized_weight", &[gains.len()], &[n]));
        }
        let mut w = self.shared.clone();
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            *v *= gains[i % n];
        }
        Ok(w)
    }
}

/// A bias-free convolution whose filters are `W_s` grouped along the output
/// channels with a per-task gain vector of length `c_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedConvLayer {
    /// `k x k x c_in x c_out`
    pub shared: Tensor,
    gains: Option<Vec<f64>>,
}

impl FactorizedConvLayer {
    pub fn new(shared: Tensor) -> Result<Self> {
        let s = shared.shape();
        if s.len() != 4 || s[0] != s[1] || s[0].is_multiple_of(2) {
            return Err(Error::invalid(
                "factorized_conv",
                format!("expected odd k x k x c_in x c_out filters, got {s:?}"),
            ));
        }
        Ok(FactorizedConvLayer { shared, gains: None })
    }

    pub fn kernel_size(&self) -> usize {
        self.shared.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.shared.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.shared.shape()[3]
    }

    /// `c_out`, against `k·k·c_in·c_out` for generating the whole filter bank.
    pub fn generated_len(&self) -> usize {
        self.out_channels()
    }

    pub fn full_generation_len(&self) -> usize {
        self.shared.len()
    }

    pub fn install_gains(&mut self, gains: Vec<f64>) -> Result<()> {
        if gains.len() != self.out_channels() {
            return Err(Error::shape("install_gains", &[gains.len()], &[self.out_channels()]));
        }
        self.gains = Some(gains);
        Ok(())
    }

    pub fn clear_gains(&mut self) {
        self.gains = None;
    }

    /// Same-padded stride-1 convolution with `W_s`, then channel `j` scaled
    /// by `gains[j]`. Input is `h x w x c_in`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let gains = self.gains.as_deref().ok_or(Error::GainsNotInstalled)?;
        let xs = x.shape();
        if xs.len() != 3 || xs[2] != self.in_channels() {
            return Err(Error::shape("conv_dynamic_forward", xs, self.shared.shape()));
        }
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.constant(self.shared.clone());
        let gv = g.constant(Tensor::row(gains));
        let out = Self::forward_graph(&mut g, xv, wv, gv)?;
        Ok(g.value(out).clone())
    }

    /// Differentiable form over graph nodes for input, filters and a `1 x c_out` gain row.
    pub fn forward_graph(g: &mut Graph, x: Var, filters: Var, gains: Var) -> Result<Var> {
        let y = g.conv2d(x, filters)?;
        let shape = g.shape(y).to_vec();
        let flat = g.reshape(y, &[shape[0] * shape[1], shape[2]])?;
        let scaled = g.mul_row(flat, gains)?;
        g.reshape(scaled, &shape)
    }
}

/// Relu of a plain vector.
pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

pub(crate) fn linear_logit(w: &Tensor, b: f64, tafe: &[f64]) -> f64 {
    dot(w.data(), tafe) + b
}
