use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, DenseCache, DenseLayer};
use crate::error::{Error, Result};

/// Stack of dense layers ending in a single linear output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    layers: Vec<DenseCache>,
    /// Per hidden layer: the scaled keep-mask applied to its output, if dropout ran.
    masks: Vec<Option<Vec<f64>>>,
}

fn check_chain(layers: &[DenseLayer]) -> Result<()> {
    let Some(last) = layers.last() else {
        return Err(Error::Shape("MLP needs at least one layer".into()));
    };
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].out_dim() != pair[1].in_dim() {
            return Err(Error::Shape(format!(
                "layer {i} emits {} values but layer {} expects {}",
                pair[0].out_dim(),
                i + 1,
                pair[1].in_dim()
            )));
        }
    }
    if last.out_dim() != 1 {
        return Err(Error::Shape(format!(
            "final layer must emit one value, emits {}",
            last.out_dim()
        )));
    }
    Ok(())
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        check_chain(&layers)?;
        Ok(Self { layers })
    }

    /// ReLU hidden layers of the given widths followed by a linear scalar output.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for &width in hidden {
            layers.push(DenseLayer::glorot(prev, width, Activation::Relu, rng));
            prev = width;
        }
        layers.push(DenseLayer::glorot(prev, 1, Activation::Identity, rng));
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        mlp_forward(&self.layers, x)
    }

    /// Forward pass that records what `backward` needs. With `dropout = Some((rate, rng))`
    /// each hidden activation is passed through inverted dropout.
    pub fn forward_cached<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        mut dropout: Option<(f64, &mut R)>,
    ) -> Result<(f64, MlpCache)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut y, cache) = layer.forward_cached(&h)?;
            caches.push(cache);
            let mask = match dropout.as_mut() {
                Some((rate, rng)) if i < last && *rate > 0.0 => {
                    let mask = dropout_mask(y.len(), *rate, &mut **rng)?;
                    for (v, m) in y.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            masks.push(mask);
            h = y;
        }
        Ok((h[0], MlpCache { layers: caches, masks }))
    }

    /// Accumulates gradients (W, b per layer, in order) and returns d/d input.
    pub fn backward(&self, cache: &MlpCache, dy: f64, grads: &mut [Vec<f64>]) -> Vec<f64> {
        let mut g = vec![dy];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[i] {
                for (v, m) in g.iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            let (w, b) = grads[2 * i..2 * i + 2].split_at_mut(1);
            g = layer.backward(&cache.layers[i], &g, &mut w[0], &mut b[0]);
        }
        g
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Runs a chain of dense layers whose final layer emits one value.
pub fn mlp_forward(layers: &[DenseLayer], x: &[f64]) -> Result<f64> {
    check_chain(layers)?;
    let mut h = x.to_vec();
    for layer in layers {
        h = layer.forward(&h)?;
    }
    Ok(h[0])
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

pub fn dropout(x: &[f64], rate: f64, seed: u64, training: bool) -> Result<Vec<f64>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = dropout_mask(x.len(), rate, &mut rng)?;
    Ok(x.iter().zip(mask).map(|(v, m)| v * m).collect())
}
