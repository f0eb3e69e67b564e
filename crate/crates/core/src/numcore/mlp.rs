use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{linear, relu_in_place, Matrix};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Two affine layers with a ReLU between them:
/// `y = w2 · relu(w1 · x + b1) + b2`.
///
/// Weights are stored `out × in`; biases are single-row matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Tape handles for one [`MlpParams`].
#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpParams {
    /// Fan-in scaled uniform weights in `[-sqrt(6/fan_in), sqrt(6/fan_in)]`,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        MlpParams {
            w1: uniform_fan_in(hidden, input, rng),
            b1: Matrix::zeros(1, hidden),
            w2: uniform_fan_in(output, hidden, rng),
            b2: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = self.w1.shape();
        let o = self.w2.rows();
        self.b1.ensure_shape(1, h, "b1")?;
        self.w2.ensure_shape(o, h, "w2")?;
        self.b2.ensure_shape(1, o, "b2")?;
        if i == 0 || h == 0 || o == 0 {
            return Err(Error::shape("MLP dimensions must be positive"));
        }
        Ok(())
    }

    /// Applies the network to every row of `x`.
    pub fn forward_rows(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = linear(x, &self.w1, &self.b1)?;
        relu_in_place(&mut h);
        linear(&h, &self.w2, &self.b2)
    }

    pub fn tensors(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Registers all four tensors as differentiable leaves.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            w1: tape.param(self.w1.clone()),
            b1: tape.param(self.b1.clone()),
            w2: tape.param(self.w2.clone()),
            b2: tape.param(self.b2.clone()),
        }
    }
}

impl MlpVars {
    pub fn vars(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// Records the forward pass over every row of `x`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = tape.linear(x, self.w1, self.b1)?;
        let h = tape.relu(h);
        tape.linear(h, self.w2, self.b2)
    }
}

fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / fan_in as f64).sqrt();
    let data = (0..rows * fan_in).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, fan_in, data).expect("sized by construction")
}

/// Single-vector forward pass.
pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::shape(format!("MLP expects {} inputs, got {}", p.input_dim(), x.len())));
    }
    Ok(p.forward_rows(&Matrix::row_vector(x.to_vec()))?.into_data())
}
