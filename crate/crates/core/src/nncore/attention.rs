use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, DenseCache, DenseLayer, Tensor2};
use crate::error::{Error, Result};

/// Attention pooling over a variable number of per-residue columns.
///
/// Each column `e_l` (length `d_f`) is mapped to a value `v_l = value_map(e_l)` and a
/// logit `a_l = attn_map(e_l)`, both of length `d_a`. Weights are a softmax over
/// positions taken independently per channel, and the output is
/// `[Σ_l α_l ⊙ v_l, max_l v_l]` of length `2·d_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightAttention {
    pub value_map: DenseLayer,
    pub attn_map: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    value_caches: Vec<DenseCache>,
    attn_caches: Vec<DenseCache>,
    /// `d_a × L`
    values: Tensor2,
    /// `d_a × L`, softmax weights
    alpha: Tensor2,
    /// first maximising position per channel
    argmax: Vec<usize>,
}

impl LightAttention {
    pub fn new(value_map: DenseLayer, attn_map: DenseLayer) -> Result<Self> {
        if value_map.in_dim() != attn_map.in_dim() || value_map.out_dim() != attn_map.out_dim() {
            return Err(Error::Shape(format!(
                "value map {}→{} and attention map {}→{} disagree",
                value_map.in_dim(),
                value_map.out_dim(),
                attn_map.in_dim(),
                attn_map.out_dim()
            )));
        }
        Ok(Self {
            value_map,
            attn_map,
        })
    }

    pub fn glorot<R: Rng + ?Sized>(d_f: usize, d_a: usize, rng: &mut R) -> Self {
        Self {
            value_map: DenseLayer::glorot(d_f, d_a, Activation::Identity, rng),
            attn_map: DenseLayer::glorot(d_f, d_a, Activation::Identity, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.value_map.in_dim()
    }

    pub fn channels(&self) -> usize {
        self.value_map.out_dim()
    }

    pub fn out_dim(&self) -> usize {
        2 * self.channels()
    }

    pub fn param_count(&self) -> usize {
        self.value_map.param_count() + self.attn_map.param_count()
    }

    pub fn forward(&self, e: &Tensor2) -> Result<Vec<f64>> {
        Ok(self.forward_cached(e)?.0)
    }

    /// Per-channel softmax weights over positions (`d_a × L`).
    pub fn attention_weights(&self, e: &Tensor2) -> Result<Tensor2> {
        Ok(self.forward_cached(e)?.1.alpha)
    }

    pub fn forward_cached(&self, e: &Tensor2) -> Result<(Vec<f64>, AttentionCache)> {
        let len = e.cols();
        if len == 0 {
            return Err(Error::EmptyWindow);
        }
        if e.rows() != self.in_dim() {
            return Err(Error::Shape(format!(
                "attention expects {}-dim columns, got {}",
                self.in_dim(),
                e.rows()
            )));
        }
        let d_a = self.channels();
        let mut values = Tensor2::zeros(d_a, len);
        let mut logits = Tensor2::zeros(d_a, len);
        let mut value_caches = Vec::with_capacity(len);
        let mut attn_caches = Vec::with_capacity(len);
        for l in 0..len {
            let column = e.column(l);
            let (v, vc) = self.value_map.forward_cached(&column)?;
            let (a, ac) = self.attn_map.forward_cached(&column)?;
            for c in 0..d_a {
                values.set(c, l, v[c]);
                logits.set(c, l, a[c]);
            }
            value_caches.push(vc);
            attn_caches.push(ac);
        }

        let mut alpha = Tensor2::zeros(d_a, len);
        let mut argmax = vec![0usize; d_a];
        let mut out = vec![0.0; 2 * d_a];
        for c in 0..d_a {
            let row = logits.row(c);
            let peak = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|a| (a - peak).exp()).collect();
            let total: f64 = exps.iter().sum();
            let mut pooled = 0.0;
            for (l, ex) in exps.iter().enumerate() {
                let w = ex / total;
                alpha.set(c, l, w);
                pooled += w * values.get(c, l);
            }
            let vrow = values.row(c);
            let mut best = 0;
            for l in 1..len {
                if vrow[l] > vrow[best] {
                    best = l;
                }
            }
            argmax[c] = best;
            out[c] = pooled;
            out[d_a + c] = vrow[best];
        }
        Ok((
            out,
            AttentionCache {
                value_caches,
                attn_caches,
                values,
                alpha,
                argmax,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` (value W, value b, attn W, attn b)
    /// and returns the gradient with respect to the input columns (`d_f × L`).
    pub fn backward(&self, cache: &AttentionCache, dout: &[f64], grads: &mut [Vec<f64>]) -> Tensor2 {
        let d_a = self.channels();
        let len = cache.values.cols();
        let mut dvalues = Tensor2::zeros(d_a, len);
        let mut dlogits = Tensor2::zeros(d_a, len);
        for c in 0..d_a {
            let g_sum = dout[c];
            let g_max = dout[d_a + c];
            // d pooled / d alpha_l = v_l; softmax Jacobian folds that into logits.
            let mut weighted = 0.0;
            for l in 0..len {
                weighted += cache.alpha.get(c, l) * cache.values.get(c, l);
            }
            for l in 0..len {
                let a = cache.alpha.get(c, l);
                dvalues.set(c, l, a * g_sum);
                dlogits.set(c, l, g_sum * a * (cache.values.get(c, l) - weighted));
            }
            let m = cache.argmax[c];
            dvalues.set(c, m, dvalues.get(c, m) + g_max);
        }

        let mut dinput = Tensor2::zeros(self.in_dim(), len);
        let (value_grads, attn_grads) = grads.split_at_mut(2);
        let (vw, vb) = value_grads.split_at_mut(1);
        let (aw, ab) = attn_grads.split_at_mut(1);
        for l in 0..len {
            let dv = self.value_map.backward(
                &cache.value_caches[l],
                &dvalues.column(l),
                &mut vw[0],
                &mut vb[0],
            );
            let da = self.attn_map.backward(
                &cache.attn_caches[l],
                &dlogits.column(l),
                &mut aw[0],
                &mut ab[0],
            );
            for (r, (x, y)) in dv.iter().zip(&da).enumerate() {
                dinput.set(r, l, x + y);
            }
        }
        dinput
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let [vw, vb] = self.value_map.params();
        let [aw, ab] = self.attn_map.params();
        vec![vw, vb, aw, ab]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let [vw, vb] = self.value_map.params_mut();
        let [aw, ab] = self.attn_map.params_mut();
        vec![vw, vb, aw, ab]
    }
}

pub fn light_attention_forward(la: &LightAttention, e: &Tensor2) -> Result<Vec<f64>> {
    la.forward(e)
}
