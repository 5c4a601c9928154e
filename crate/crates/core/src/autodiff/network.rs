//! Fully connected networks with a diagonal-Gaussian output head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{softplus, Gradients, Tape, Var};
use crate::error::{check_dim, AifError, Result};
use crate::gaussian::{DiagonalGaussian, VARIANCE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = AifError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(AifError::format("AIFNET", format!("unknown activation {other:?}"))),
        }
    }
}

/// Affine map `x W + b` with `W: in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weight: Matrix::from_vec(input, output, data),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.matmul(&self.weight);
        let cols = out.cols();
        for chunk in out.data_mut().chunks_mut(cols) {
            for (v, b) in chunk.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        out
    }
}

/// Parameters of a Gaussian-output MLP: hidden layers, then mean and raw-variance heads.
///
/// Variance is `softplus(raw) + VARIANCE_FLOOR`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNet {
    pub hidden: Vec<Dense>,
    pub activation: Activation,
    pub mean_head: Dense,
    pub var_head: Dense,
}

/// Gradients with the same layout as [`GaussianNet::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads(pub Vec<Matrix>);

impl NetGrads {
    pub fn zeros_like(net: &GaussianNet) -> Self {
        NetGrads(net.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect())
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|m| m.data().iter().all(|x| *x == 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|m| m.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for m in &mut self.0 {
            m.data_mut().iter_mut().for_each(|x| *x *= c);
        }
    }
}

/// Mean and variance nodes of a taped Gaussian output.
#[derive(Debug, Clone, Copy)]
pub struct GaussVars {
    pub mean: Var,
    pub var: Var,
}

/// A network whose parameters have been placed on a tape.
#[derive(Debug, Clone)]
pub struct BoundNet {
    vars: Vec<Var>,
    layers: usize,
    activation: Activation,
}

impl GaussianNet {
    /// Randomly initialized network; `hidden` lists the hidden widths.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = input_dim;
        for &h in hidden {
            layers.push(Dense::init(width, h, rng));
            width = h;
        }
        Self {
            hidden: layers,
            activation,
            mean_head: Dense::init(width, output_dim, rng),
            var_head: Dense::init(width, output_dim, rng),
        }
    }

    /// Network with every weight and bias zero.
    pub fn zeros(input_dim: usize, hidden: &[usize], output_dim: usize, activation: Activation) -> Self {
        let mut layers = Vec::new();
        let mut width = input_dim;
        for &h in hidden {
            layers.push(Dense::zeros(width, h));
            width = h;
        }
        Self {
            hidden: layers,
            activation,
            mean_head: Dense::zeros(width, output_dim),
            var_head: Dense::zeros(width, output_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.mean_head.input_dim(), Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.mean_head.output_dim()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(Dense::output_dim).collect()
    }

    /// Checks that consecutive layer shapes line up.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        for layer in &self.hidden {
            check_dim("GaussianNet layer input", width, layer.input_dim())?;
            check_dim("GaussianNet bias", layer.output_dim(), layer.bias.cols())?;
            width = layer.output_dim();
        }
        for head in [&self.mean_head, &self.var_head] {
            check_dim("GaussianNet head input", width, head.input_dim())?;
            check_dim("GaussianNet head bias", head.output_dim(), head.bias.cols())?;
        }
        check_dim("GaussianNet head widths", self.mean_head.output_dim(), self.var_head.output_dim())
    }

    /// Every parameter tensor in canonical order: hidden (W, b)..., mean (W, b), var (W, b).
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(2 * self.hidden.len() + 4);
        for l in &self.hidden {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.extend([
            &self.mean_head.weight,
            &self.mean_head.bias,
            &self.var_head.weight,
            &self.var_head.bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(2 * self.hidden.len() + 4);
        for l in &mut self.hidden {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.mean_head.weight);
        out.push(&mut self.mean_head.bias);
        out.push(&mut self.var_head.weight);
        out.push(&mut self.var_head.bias);
        out
    }

    /// Copy of this network with its tensors replaced (canonical order).
    pub fn with_tensors(&self, tensors: &[Matrix]) -> Result<Self> {
        let mut out = self.clone();
        check_dim("GaussianNet tensor count", out.tensors().len(), tensors.len())?;
        for (dst, src) in out.tensors_mut().into_iter().zip(tensors) {
            if dst.shape() != src.shape() {
                return Err(AifError::contract("tensor shape differs from network layout"));
            }
            *dst = src.clone();
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// Untaped batch forward pass: rows of `input` are independent samples.
    pub fn forward_batch(&self, input: &Matrix) -> Result<(Matrix, Matrix)> {
        check_dim("GaussianNet input", self.input_dim(), input.cols())?;
        let mut h = input.clone();
        for layer in &self.hidden {
            h = layer.apply(&h).map(|x| self.activation.apply(x));
        }
        let mean = self.mean_head.apply(&h);
        let var = self.var_head.apply(&h).map(|x| softplus(x) + VARIANCE_FLOOR);
        Ok((mean, var))
    }

    /// Gaussian output for a single input vector.
    pub fn forward_gaussian(&self, input: &[f64]) -> Result<DiagonalGaussian> {
        let (mean, var) = self.forward_batch(&Matrix::row_vector(input))?;
        DiagonalGaussian::new(mean.into_data(), var.into_data())
    }

    /// Places the parameters on `tape`. With `trainable == false` they are
    /// constants: adjoints still flow through the network to its inputs.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundNet {
        let vars = self
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundNet {
            vars,
            layers: self.hidden.len(),
            activation: self.activation,
        }
    }
}

impl BoundNet {
    /// Taped forward pass; records every intermediate value.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<GaussVars> {
        let expected = tape.value(self.vars[0]).rows();
        check_dim("GaussianNet input", expected, tape.value(input).cols())?;
        let mut h = input;
        for l in 0..self.layers {
            let z = tape.matmul(h, self.vars[2 * l]);
            let z = tape.add_bias(z, self.vars[2 * l + 1]);
            h = match self.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Identity => z,
            };
        }
        let k = 2 * self.layers;
        let mean = tape.matmul(h, self.vars[k]);
        let mean = tape.add_bias(mean, self.vars[k + 1]);
        let raw = tape.matmul(h, self.vars[k + 2]);
        let raw = tape.add_bias(raw, self.vars[k + 3]);
        let sp = tape.softplus(raw);
        let var = tape.add_scalar(sp, VARIANCE_FLOOR);
        Ok(GaussVars { mean, var })
    }

    pub fn grads(&self, grads: &Gradients) -> NetGrads {
        NetGrads(self.vars.iter().map(|v| grads.wrt(*v)).collect())
    }
}
