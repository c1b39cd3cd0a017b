//! Dense network kernel: tensors, dense layers, light attention pooling, MSE loss,
//! hand-derived gradients and the Adam optimizer. Everything is `f64`.

mod adam;
mod attention;
mod dense;
mod mlp;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{light_attention_forward, AttentionCache, LightAttention};
pub use dense::{dense_forward, Activation, DenseCache, DenseLayer};
pub use mlp::{dropout, dropout_mask, mlp_forward, Mlp, MlpCache};
pub use tensor::Tensor2;

use crate::error::{Error, Result};

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Domain("MSE of an empty vector".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient buffers shaped like a model's parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub buffers: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &[&[f64]]) -> Self {
        Self {
            buffers: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.buffers {
            for g in b.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.buffers
            .iter()
            .flatten()
            .fold(0.0, |acc: f64, g| acc.max(g.abs()))
    }
}
