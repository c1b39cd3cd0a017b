use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine map followed by an element-wise activation: `activation(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Shape `(out, in)`.
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values saved by a forward pass for use in the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub preactivation: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim).max(1) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Self {
            weights: Tensor2::from_vec(out_dim, in_dim, data).expect("glorot shape"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.in_dim() * self.out_dim() + self.out_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        let mut z = self.weights.matvec(x)?;
        for (zi, b) in z.iter_mut().zip(&self.bias) {
            *zi += b;
        }
        let y = z.iter().map(|&v| self.activation.apply(v)).collect();
        Ok((
            y,
            DenseCache {
                input: x.to_vec(),
                preactivation: z,
            },
        ))
    }

    /// Accumulates weight/bias gradients into `dw`/`db` and returns the input gradient.
    pub fn backward(
        &self,
        cache: &DenseCache,
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Vec<f64> {
        let in_dim = self.in_dim();
        let dz: Vec<f64> = dy
            .iter()
            .zip(&cache.preactivation)
            .map(|(g, &z)| g * self.activation.derivative(z))
            .collect();
        for (r, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db[r] += g;
            let row = &mut dw[r * in_dim..(r + 1) * in_dim];
            for (w, x) in row.iter_mut().zip(&cache.input) {
                *w += g * x;
            }
        }
        self.weights
            .matvec_transposed(&dz)
            .expect("cached forward guarantees shapes")
    }

    pub fn params(&self) -> [&[f64]; 2] {
        [self.weights.as_slice(), &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.as_mut_slice(), &mut self.bias]
    }
}

/// `activation(W x + b)` for a single layer.
pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}
