//! The four ΔΔG model variants built on the [`nncore`](crate::nncore) kernel.
//!
//! | variant | pipeline |
//! |---|---|
//! | 1 baseline | `proj_a(struct window)` → light attention → MLP |
//! | 2 concat after attention | attention output ++ pooled sequence embedding → MLP |
//! | 3 multiplicative transfusion | `proj_a(struct_l) ⊙ proj_b(seq_l)` per residue → light attention → MLP |
//! | 4 domain concat | attention output ++ mutation feature vector → MLP |
//!
//! Every variant appends the mutant one-hot (20 values) to the MLP input.
//!
//! Parameter count, with `w(x, y) = x·y + y`:
//! `w(d_struct, d_f) + [M3] w(d_seq, d_f) + 2·w(d_f, d_a) + Σ w(h_i, h_{i+1})`
//! where the MLP widths run from `2·d_a + extra + 20` (extra = 0 for M1/M3,
//! `d_seq` for M2, `d_feat` for M4) through the hidden widths to 1.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amino;
use crate::embeddings::{pool_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::features::{check_window, FeatureBuilder, MutationFeatures};
use crate::nncore::{
    Activation, AttentionCache, DenseCache, DenseLayer, Gradients, LightAttention, Mlp, MlpCache, Tensor2,
};
use crate::structure_io::{BackboneStructure, DihedralTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionVariant {
    Baseline,
    ConcatAfterAttention,
    MultiplyTransfusion,
    DomainConcat,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 4] = [
        FusionVariant::Baseline,
        FusionVariant::ConcatAfterAttention,
        FusionVariant::MultiplyTransfusion,
        FusionVariant::DomainConcat,
    ];

    /// Model number 1–4.
    pub fn number(self) -> u8 {
        match self {
            FusionVariant::Baseline => 1,
            FusionVariant::ConcatAfterAttention => 2,
            FusionVariant::MultiplyTransfusion => 3,
            FusionVariant::DomainConcat => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get((n as usize).wrapping_sub(1)).copied()
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(Self::from_number)
            .ok_or_else(|| Error::Domain(format!("model must be 1, 2, 3 or 4, got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_struct: usize,
    pub d_seq: usize,
    /// Mutation feature length (variant 4 only; ignored otherwise).
    pub d_feat: usize,
    pub d_f: usize,
    pub d_a: usize,
    pub hidden: Vec<usize>,
    /// Odd residue window centred on the mutation.
    pub window: usize,
}

impl ModelDims {
    pub fn head_extra(&self, variant: FusionVariant) -> usize {
        match variant {
            FusionVariant::Baseline | FusionVariant::MultiplyTransfusion => 0,
            FusionVariant::ConcatAfterAttention => self.d_seq,
            FusionVariant::DomainConcat => self.d_feat,
        }
    }

    pub fn head_in(&self, variant: FusionVariant) -> usize {
        2 * self.d_a + self.head_extra(variant) + 20
    }

    /// Closed-form parameter count for a variant.
    pub fn param_count(&self, variant: FusionVariant) -> usize {
        let w = |x: usize, y: usize| x * y + y;
        let mut n = w(self.d_struct, self.d_f) + 2 * w(self.d_f, self.d_a);
        if variant == FusionVariant::MultiplyTransfusion {
            n += w(self.d_seq, self.d_f);
        }
        let mut prev = self.head_in(variant);
        for &h in &self.hidden {
            n += w(prev, h);
            prev = h;
        }
        n + w(prev, 1)
    }
}

pub fn fuse_multiply(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "element-wise product of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

pub fn fuse_concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Everything a model reads for one mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationInput {
    /// Structural embedding rows for the in-chain residues of the window.
    pub struct_window: Vec<Vec<f64>>,
    /// Sequence embedding rows for the same residues.
    pub seq_window: Vec<Vec<f64>>,
    pub seq_pooled: Vec<f64>,
    /// Mutation feature vector (read by variant 4).
    pub features: Vec<f64>,
    pub mutant: char,
}

impl MutationInput {
    /// Slices the window around 1-based `pos` out of both embedding sets. The mutant is
    /// read from the `one_hot_mut` segment of `features`.
    pub fn assemble(
        struct_emb: &EmbeddingSet,
        seq_emb: &EmbeddingSet,
        features: &MutationFeatures,
        pos: usize,
        window: usize,
    ) -> Result<Self> {
        check_window(window)?;
        if struct_emb.len() != seq_emb.len() {
            return Err(Error::Linkage(format!(
                "structural embeddings cover {} residues, sequence embeddings {}",
                struct_emb.len(),
                seq_emb.len()
            )));
        }
        let len = struct_emb.len();
        if pos == 0 || pos > len {
            return Err(Error::Bounds { index: pos, len });
        }
        let hot = features
            .segment("one_hot_mut")
            .ok_or_else(|| Error::Shape("feature vector has no one_hot_mut segment".into()))?;
        let mutant = hot
            .iter()
            .position(|&v| v == 1.0)
            .map(|i| amino::ALPHABET[i])
            .ok_or_else(|| Error::Domain("mutant one-hot is empty".into()))?;
        let half = window / 2;
        let lo = pos.saturating_sub(half).max(1);
        let hi = (pos + half).min(len);
        let pooled = pool_embeddings(seq_emb, pos, 1)?.pooled;
        Ok(Self {
            struct_window: (lo..=hi).map(|p| struct_emb.row(p - 1).to_vec()).collect(),
            seq_window: (lo..=hi).map(|p| seq_emb.row(p - 1).to_vec()).collect(),
            seq_pooled: pooled,
            features: features.vector().to_vec(),
            mutant,
        })
    }
}

/// Mutation features plus the sequence-embedding segments variant 4 consumes:
/// `local_embedding` (window × d_seq), `local_presence` (window) and `pooled_embedding` (d_seq).
pub fn assemble_features(
    builder: &FeatureBuilder,
    s: &BackboneStructure,
    dihedrals: &[DihedralTriple],
    seq_emb: &EmbeddingSet,
    pos: usize,
    wt: char,
    mutant: char,
) -> Result<MutationFeatures> {
    let mut f = builder.mutation_features(s, dihedrals, pos, wt, mutant)?;
    let pooled = pool_embeddings(seq_emb, pos, builder.window)?;
    f.push_segment("local_embedding", &pooled.local)?;
    f.push_segment("local_presence", &pooled.presence)?;
    f.push_segment("pooled_embedding", &pooled.pooled)?;
    Ok(f)
}

/// Length of [`assemble_features`] output.
pub fn full_feature_len(builder: &FeatureBuilder, d_seq: usize) -> usize {
    builder.feature_len() + builder.window * d_seq + builder.window + d_seq
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub variant: FusionVariant,
    pub dims: ModelDims,
    pub seed: u64,
    pub proj_a: DenseLayer,
    /// Present for variant 3 only.
    pub proj_b: Option<DenseLayer>,
    pub attention: LightAttention,
    pub head: Mlp,
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    proj_a: Vec<DenseCache>,
    a_out: Vec<Vec<f64>>,
    proj_b: Vec<DenseCache>,
    b_out: Vec<Vec<f64>>,
    attention: AttentionCache,
    head: MlpCache,
}

impl FusionModel {
    /// Glorot-initialised model. Layers are drawn in the order proj_a, proj_b, attention, head.
    pub fn new(variant: FusionVariant, dims: ModelDims, seed: u64) -> Result<Self> {
        check_window(dims.window)?;
        if dims.d_struct == 0 || dims.d_seq == 0 || dims.d_f == 0 || dims.d_a == 0 {
            return Err(Error::Shape(format!("zero model dimension in {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj_a = DenseLayer::glorot(dims.d_struct, dims.d_f, Activation::Identity, &mut rng);
        let proj_b = (variant == FusionVariant::MultiplyTransfusion)
            .then(|| DenseLayer::glorot(dims.d_seq, dims.d_f, Activation::Identity, &mut rng));
        let attention = LightAttention::glorot(dims.d_f, dims.d_a, &mut rng);
        let head = Mlp::glorot(dims.head_in(variant), &dims.hidden, &mut rng);
        Ok(Self {
            variant,
            dims,
            seed,
            proj_a,
            proj_b,
            attention,
            head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &MutationInput) -> Result<()> {
        if x.struct_window.is_empty() {
            return Err(Error::EmptyWindow);
        }
        if let Some(r) = x.struct_window.iter().find(|r| r.len() != self.dims.d_struct) {
            return Err(Error::Shape(format!(
                "structural rows must have {} values, got {}",
                self.dims.d_struct,
                r.len()
            )));
        }
        let needs_seq_rows = self.variant == FusionVariant::MultiplyTransfusion;
        if needs_seq_rows {
            if x.seq_window.len() != x.struct_window.len() {
                return Err(Error::Shape(format!(
                    "{} sequence rows for {} structural rows",
                    x.seq_window.len(),
                    x.struct_window.len()
                )));
            }
            if let Some(r) = x.seq_window.iter().find(|r| r.len() != self.dims.d_seq) {
                return Err(Error::Shape(format!(
                    "sequence rows must have {} values, got {}",
                    self.dims.d_seq,
                    r.len()
                )));
            }
        }
        if amino::index_of(x.mutant).is_none() {
            return Err(Error::Domain(format!("non-canonical mutant {:?}", x.mutant)));
        }
        Ok(())
    }

    fn head_extra<'a>(&self, x: &'a MutationInput) -> Result<&'a [f64]> {
        let extra: &[f64] = match self.variant {
            FusionVariant::Baseline | FusionVariant::MultiplyTransfusion => &[],
            FusionVariant::ConcatAfterAttention => &x.seq_pooled,
            FusionVariant::DomainConcat => &x.features,
        };
        let want = self.dims.head_extra(self.variant);
        if extra.len() != want {
            return Err(Error::Shape(format!(
                "variant {} expects {want} extra head inputs, got {}",
                self.variant,
                extra.len()
            )));
        }
        Ok(extra)
    }

    /// Attention input columns (`d_f × L`) with their projection caches.
    #[allow(clippy::type_complexity)]
    fn columns(
        &self,
        x: &MutationInput,
    ) -> Result<(Tensor2, Vec<DenseCache>, Vec<Vec<f64>>, Vec<DenseCache>, Vec<Vec<f64>>)> {
        let mut a_caches = Vec::with_capacity(x.struct_window.len());
        let mut a_out = Vec::with_capacity(x.struct_window.len());
        for row in &x.struct_window {
            let (a, c) = self.proj_a.forward_cached(row)?;
            a_caches.push(c);
            a_out.push(a);
        }
        let mut b_caches = Vec::new();
        let mut b_out = Vec::new();
        let columns = match &self.proj_b {
            Some(proj_b) if self.variant == FusionVariant::MultiplyTransfusion => {
                let mut cols = Vec::with_capacity(a_out.len());
                for (row, a) in x.seq_window.iter().zip(&a_out) {
                    let (b, c) = proj_b.forward_cached(row)?;
                    cols.push(fuse_multiply(a, &b)?);
                    b_caches.push(c);
                    b_out.push(b);
                }
                cols
            }
            None if self.variant == FusionVariant::MultiplyTransfusion => {
                return Err(Error::Shape("variant 3 model lacks proj_b".into()))
            }
            _ => a_out.clone(),
        };
        Ok((Tensor2::from_columns(&columns)?, a_caches, a_out, b_caches, b_out))
    }

    /// The post-attention vector (`2·d_a`) the head consumes.
    pub fn latent(&self, x: &MutationInput) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (e, ..) = self.columns(x)?;
        self.attention.forward(&e)
    }

    fn head_input(&self, z: &[f64], x: &MutationInput) -> Result<Vec<f64>> {
        let mut h = fuse_concat(z, self.head_extra(x)?);
        h.extend_from_slice(&amino::one_hot(x.mutant));
        Ok(h)
    }

    /// Predicted ΔΔG in kcal/mol (inference mode).
    pub fn predict(&self, x: &MutationInput) -> Result<f64> {
        let z = self.latent(x)?;
        self.head.forward(&self.head_input(&z, x)?)
    }

    pub fn forward_trace<R: Rng + ?Sized>(
        &self,
        x: &MutationInput,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<(f64, ForwardTrace)> {
        self.check_input(x)?;
        let (e, a_caches, a_out, b_caches, b_out) = self.columns(x)?;
        let (z, attention) = self.attention.forward_cached(&e)?;
        let h = self.head_input(&z, x)?;
        let (y, head) = self.head.forward_cached(&h, dropout)?;
        Ok((
            y,
            ForwardTrace {
                proj_a: a_caches,
                a_out,
                proj_b: b_caches,
                b_out,
                attention,
                head,
            },
        ))
    }

    /// Accumulates `dy · ∂y/∂θ` into `grads` (laid out as [`FusionModel::params`]).
    pub fn backward_trace(&self, trace: &ForwardTrace, dy: f64, grads: &mut Gradients) {
        let n_proj = if self.proj_b.is_some() { 4 } else { 2 };
        let (proj_grads, rest) = grads.buffers.split_at_mut(n_proj);
        let (attn_grads, head_grads) = rest.split_at_mut(4);

        let dh = self.head.backward(&trace.head, dy, head_grads);
        let dz = &dh[..self.attention.out_dim()];
        let de = self.attention.backward(&trace.attention, dz, attn_grads);

        let (a_grads, b_grads) = proj_grads.split_at_mut(2);
        let (aw, ab) = a_grads.split_at_mut(1);
        for l in 0..de.cols() {
            let dx = de.column(l);
            let da = match &self.proj_b {
                Some(proj_b) => {
                    let db: Vec<f64> = dx.iter().zip(&trace.a_out[l]).map(|(g, a)| g * a).collect();
                    let (bw, bb) = b_grads.split_at_mut(1);
                    proj_b.backward(&trace.proj_b[l], &db, &mut bw[0], &mut bb[0]);
                    dx.iter().zip(&trace.b_out[l]).map(|(g, b)| g * b).collect()
                }
                None => dx,
            };
            self.proj_a.backward(&trace.proj_a[l], &da, &mut aw[0], &mut ab[0]);
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.proj_a.params().to_vec();
        if let Some(b) = &self.proj_b {
            out.extend(b.params());
        }
        out.extend(self.attention.params());
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.proj_a.params_mut().into_iter().collect();
        if let Some(b) = &mut self.proj_b {
            out.extend(b.params_mut());
        }
        out.extend(self.attention.params_mut());
        out.extend(self.head.params_mut());
        out
    }

    /// `(name, rows, cols)` for each parameter buffer, in [`FusionModel::params`] order.
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        fn dense(prefix: &str, l: &DenseLayer, out: &mut Vec<(String, usize, usize)>) {
            out.push((format!("{prefix}.weight"), l.out_dim(), l.in_dim()));
            out.push((format!("{prefix}.bias"), l.out_dim(), 1));
        }
        let mut out = Vec::new();
        dense("proj_a", &self.proj_a, &mut out);
        if let Some(b) = &self.proj_b {
            dense("proj_b", b, &mut out);
        }
        dense("attention.value", &self.attention.value_map, &mut out);
        dense("attention.attn", &self.attention.attn_map, &mut out);
        for (i, l) in self.head.layers.iter().enumerate() {
            dense(&format!("head.{i}"), l, &mut out);
        }
        out
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients::zeros_like(&self.params())
    }

    /// SHA-256 over every parameter's little-endian bits, in `params` order.
    pub fn param_checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in self.params() {
            for v in p {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// One-shot prediction from embedding sets and assembled mutation features.
pub fn forward_variant(
    model: &FusionModel,
    struct_emb: &EmbeddingSet,
    seq_emb: &EmbeddingSet,
    feats: &MutationFeatures,
    pos: usize,
) -> Result<f64> {
    let x = MutationInput::assemble(struct_emb, seq_emb, feats, pos, model.dims.window)?;
    model.predict(&x)
}

/// A recorded minibatch forward pass awaiting its backward pass.
#[derive(Debug)]
struct LossGraph {
    traces: Vec<ForwardTrace>,
    residuals: Vec<f64>,
}

/// Holds at most one forward pass; `backward` consumes it.
#[derive(Debug, Default)]
pub struct Tape {
    graph: Option<LossGraph>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mean-squared-error forward pass over a minibatch; returns the loss.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        model: &FusionModel,
        batch: &[(&MutationInput, f64)],
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Domain("empty minibatch".into()));
        }
        let mut traces = Vec::with_capacity(batch.len());
        let mut residuals = Vec::with_capacity(batch.len());
        let mut loss = 0.0;
        for (x, target) in batch {
            let dropout = (dropout_rate > 0.0).then_some((dropout_rate, &mut *rng));
            let (y, trace) = model.forward_trace(x, dropout)?;
            loss += (y - target) * (y - target);
            residuals.push(y - target);
            traces.push(trace);
        }
        self.graph = Some(LossGraph { traces, residuals });
        Ok(loss / batch.len() as f64)
    }

    /// Gradient of the recorded mean MSE with respect to every model parameter.
    pub fn backward(&mut self, model: &FusionModel) -> Result<Gradients> {
        let graph = self
            .graph
            .take()
            .ok_or_else(|| Error::State("backward called without a forward pass".into()))?;
        let mut grads = model.zero_grads();
        let scale = 2.0 / graph.residuals.len() as f64;
        for (trace, r) in graph.traces.iter().zip(&graph.residuals) {
            model.backward_trace(trace, scale * r, &mut grads);
        }
        Ok(grads)
    }
}
