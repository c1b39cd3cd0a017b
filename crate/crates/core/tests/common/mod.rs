#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermofuse::amino;
use thermofuse::fusion_models::{fuse_multiply, FusionModel, FusionVariant, ModelDims, MutationInput};

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Relative error with a small absolute floor so near-zero gradients compare absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `loss` with respect to every entry of every buffer returned by
/// `buffers`, compared against `analytic`. Returns the worst relative error.
pub fn max_fd_error<M: Clone>(
    model: &M,
    analytic: &[Vec<f64>],
    buffers: impl Fn(&mut M) -> Vec<&mut [f64]>,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let n_buffers = analytic.len();
    for b in 0..n_buffers {
        for i in 0..analytic[b].len() {
            let mut plus = model.clone();
            buffers(&mut plus)[b][i] += FD_STEP;
            let mut minus = model.clone();
            buffers(&mut minus)[b][i] -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[b][i], numeric));
        }
    }
    worst
}

pub fn small_dims() -> ModelDims {
    ModelDims {
        d_struct: 6,
        d_seq: 5,
        d_feat: 7,
        d_f: 4,
        d_a: 3,
        hidden: vec![6, 5],
        window: 5,
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, rows: usize, d: &ModelDims) -> MutationInput {
    const CODES: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
    MutationInput {
        struct_window: (0..rows).map(|_| uniform(rng, d.d_struct)).collect(),
        seq_window: (0..rows).map(|_| uniform(rng, d.d_seq)).collect(),
        seq_pooled: uniform(rng, d.d_seq),
        features: uniform(rng, d.d_feat),
        mutant: CODES[rng.gen_range(0..20)] as char,
    }
}

pub fn fixtures() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus_dir() -> std::path::PathBuf {
    fixtures().join("corpus")
}

/// Small, quick training settings for the bundled corpus.
pub fn quick_config(variant: thermofuse::fusion_models::FusionVariant, epochs: usize) -> thermofuse::training::TrainConfig {
    thermofuse::training::TrainConfig {
        variant,
        epochs,
        batch_size: 32,
        lr: 3e-3,
        d_f: 8,
        d_a: 4,
        hidden: vec![16],
        ..Default::default()
    }
}

/// The bundled corpus, deduplicated and split, with desk-scale embeddings.
pub fn load_corpus(window: usize) -> (Vec<thermofuse::training::MutationRecord>, thermofuse::training::Corpus) {
    use thermofuse::training::*;
    let raw = read_dataset(&corpus_dir().join("dataset.csv")).unwrap();
    let (records, _) = prepare_records(&raw, 0);
    let corpus = Corpus::for_records(
        &records,
        &corpus_dir().join("pdb"),
        thermofuse::features::FeatureBuilder::builtin(window).unwrap(),
        EmbeddingSource::default(),
    )
    .unwrap();
    (records, corpus)
}

/// A briefly trained artifact over the bundled corpus.
pub fn quick_artifact(
    variant: thermofuse::fusion_models::FusionVariant,
) -> (thermofuse::scan_service::ModelArtifact, Vec<thermofuse::training::MutationRecord>, thermofuse::training::Corpus) {
    let (records, corpus) = load_corpus(7);
    let config = quick_config(variant, 3);
    let outcome = thermofuse::training::train(&config, &records, &corpus).unwrap();
    let artifact = thermofuse::scan_service::ModelArtifact::from_outcome(
        outcome,
        config,
        thermofuse::training::EmbeddingSource::default(),
        thermofuse::training::dataset_checksum(&records),
    );
    (artifact, records, corpus)
}

pub fn rng_target(rng: &mut ChaCha8Rng) -> f64 {
    uniform(rng, 1)[0] * 3.0
}

/// Fresh models have all-zero biases, which can park a ReLU exactly on its kink.
pub fn randomize_biases(model: &mut FusionModel, rng: &mut ChaCha8Rng) {
    let names: Vec<String> = model.param_shapes().into_iter().map(|(n, ..)| n).collect();
    for (name, buf) in names.iter().zip(model.params_mut()) {
        if name.ends_with(".bias") {
            for v in buf.iter_mut() {
                *v = uniform(rng, 1)[0] * 0.5;
            }
        }
    }
}

/// Central differences are only meaningful away from ReLU zeros and max-pool ties.
pub const KINK_MARGIN: f64 = 1e-3;

/// Distance of an input from the nearest non-differentiable point of the model: the
/// smallest |pre-activation| over ReLU units and the smallest top-two gap per max-pool channel.
pub fn kink_margin(model: &FusionModel, x: &MutationInput) -> f64 {
    let mut margin = f64::INFINITY;
    let columns: Vec<Vec<f64>> = x
        .struct_window
        .iter()
        .enumerate()
        .map(|(l, row)| {
            let a = model.proj_a.forward(row).unwrap();
            match &model.proj_b {
                Some(pb) => fuse_multiply(&a, &pb.forward(&x.seq_window[l]).unwrap()).unwrap(),
                None => a,
            }
        })
        .collect();
    let values: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| model.attention.value_map.forward(c).unwrap())
        .collect();
    if values.len() > 1 {
        for ch in 0..model.attention.channels() {
            let mut v: Vec<f64> = values.iter().map(|r| r[ch]).collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            margin = margin.min(v[0] - v[1]);
        }
    }
    let mut h = model.latent(x).unwrap();
    match model.variant {
        FusionVariant::ConcatAfterAttention => h.extend_from_slice(&x.seq_pooled),
        FusionVariant::DomainConcat => h.extend_from_slice(&x.features),
        _ => {}
    }
    h.extend_from_slice(&amino::one_hot(x.mutant));
    for layer in &model.head.layers[..model.head.layers.len() - 1] {
        let (out, cache) = layer.forward_cached(&h).unwrap();
        for z in &cache.preactivation {
            margin = margin.min(z.abs());
        }
        h = out;
    }
    margin
}
