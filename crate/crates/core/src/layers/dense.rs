use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Affine map on flattened examples: `y = W x + b`, output `[batch, outputs, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::LengthMismatch {
                shape: [1, 1, outputs, inputs],
                len: weights.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weights, &mut self.bias]
    }

    fn check(&self, x: &Tensor4) -> Result<()> {
        if x.example_len() != self.inputs {
            return Err(Error::ShapeMismatch {
                expected: [x.batch(), self.inputs, 1, 1],
                got: x.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check(x)?;
        Ok(self.apply(x, true))
    }

    fn apply(&self, x: &Tensor4, with_bias: bool) -> Tensor4 {
        let b = x.batch();
        let mut out = Vec::with_capacity(b * self.outputs);
        for bi in 0..b {
            let xe = x.example(bi);
            for o in 0..self.outputs {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = if with_bias { self.bias[o] } else { 0.0 };
                for (w, v) in row.iter().zip(xe) {
                    acc += w * v;
                }
                out.push(acc);
            }
        }
        Tensor4::from_vec_unchecked([b, self.outputs, 1, 1], out)
    }

    /// Directional derivative: the linear part only.
    pub(crate) fn jvp(&self, v: &Tensor4) -> Result<Tensor4> {
        self.check(v)?;
        Ok(self.apply(v, false))
    }

    /// Returns `(g_x, g_weights, g_bias)`; `g_x` keeps the input's shape.
    pub(crate) fn backward(&self, x: &Tensor4, g: &Tensor4) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
        self.check(x)?;
        let b = x.batch();
        let mut gx = Tensor4::zeros(x.shape());
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.outputs];
        for bi in 0..b {
            let xe = x.example(bi);
            let ge = g.example(bi);
            let gxe = gx.example_mut(bi);
            for o in 0..self.outputs {
                let go = ge[o];
                gb[o] += go;
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let grow = &mut gw[o * self.inputs..(o + 1) * self.inputs];
                for i in 0..self.inputs {
                    grow[i] += go * xe[i];
                    gxe[i] += go * row[i];
                }
            }
        }
        Ok((gx, gw, gb))
    }
}
