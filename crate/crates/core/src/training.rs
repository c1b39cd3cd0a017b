//! Dataset handling, the minibatch training loop with Spearman-based epoch
//! selection, and hyperparameter grid search.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amino::{self, AminoAcidTable};
use crate::embeddings::{load_embeddings, DeskEmbedder, EmbeddingSet};
use crate::error::{Error, Result};
use crate::features::{FeatureBuilder, DEFAULT_WINDOW};
use crate::fusion_models::{assemble_features, full_feature_len, FusionModel, FusionVariant, ModelDims, MutationInput, Tape};
use crate::metrics::{r2, spearman};
use crate::nncore::{adam_step, mse_loss, AdamConfig, AdamState};
use crate::structure_io::{backbone_dihedrals, read_pdb_file, BackboneStructure, DihedralTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub pdb_id: String,
    pub chain: char,
    /// 1-based position along the parsed chain.
    pub position: usize,
    pub wt_aa: char,
    pub mut_aa: char,
    /// kcal/mol, positive = destabilizing.
    pub ddg: f64,
    pub split: Option<Split>,
}

impl MutationRecord {
    pub fn key(&self) -> (String, char, usize, char, char) {
        (self.pdb_id.to_ascii_uppercase(), self.chain, self.position, self.wt_aa, self.mut_aa)
    }

    pub fn protein_key(&self) -> ProteinKey {
        ProteinKey::new(&self.pdb_id, self.chain)
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    pdb_id: String,
    chain: String,
    position: String,
    wt_aa: String,
    mut_aa: String,
    ddg: String,
    split: Option<String>,
}

fn single_char(field: &str, value: &str, row: usize) -> Result<char> {
    let mut chars = value.trim().chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c.to_ascii_uppercase()),
        _ => Err(Error::Parse {
            line: row,
            message: format!("{field} must be a single character, got {value:?}"),
        }),
    }
}

/// Reads the mutation table. Comma or tab delimited (detected from the header);
/// required columns `pdb_id,chain,position,wt_aa,mut_aa,ddg`, optional `split`.
pub fn read_dataset(path: &Path) -> Result<Vec<MutationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<MutationRecord>> {
    let header = text.lines().next().unwrap_or("");
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        let line = i + 2;
        let raw = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let wt_aa = single_char("wt_aa", &raw.wt_aa, line)?;
        let mut_aa = single_char("mut_aa", &raw.mut_aa, line)?;
        for (name, aa) in [("wt_aa", wt_aa), ("mut_aa", mut_aa)] {
            if !amino::is_canonical(aa) {
                return Err(Error::Parse {
                    line,
                    message: format!("{name} {aa:?} is not a canonical amino acid"),
                });
            }
        }
        if wt_aa == mut_aa {
            return Err(Error::Parse {
                line,
                message: format!("self-substitution {wt_aa}→{mut_aa} is not a mutation"),
            });
        }
        let position: usize = raw.position.parse().ok().filter(|&p| p >= 1).ok_or_else(|| Error::Parse {
            line,
            message: format!("position must be a positive integer, got {:?}", raw.position),
        })?;
        let ddg: f64 = raw.ddg.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
            line,
            message: format!("ddg must be a finite number, got {:?}", raw.ddg),
        })?;
        let split = match raw.split.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("") => None,
            Some("train") => Some(Split::Train),
            Some("val") | Some("valid") | Some("validation") => Some(Split::Val),
            Some(other) => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown split {other:?}"),
                })
            }
        };
        out.push(MutationRecord {
            pdb_id: raw.pdb_id,
            chain: single_char("chain", &raw.chain, line)?,
            position,
            wt_aa,
            mut_aa,
            ddg,
            split,
        });
    }
    Ok(out)
}

pub fn dataset_to_csv(records: &[MutationRecord]) -> String {
    let mut out = String::from("pdb_id,chain,position,wt_aa,mut_aa,ddg,split\n");
    for r in records {
        let split = match r.split {
            Some(Split::Train) => "train",
            Some(Split::Val) => "val",
            None => "",
        };
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.pdb_id, r.chain, r.position, r.wt_aa, r.mut_aa, r.ddg, split);
    }
    out
}

/// Gives every record without a split a seeded train/val assignment (87% train).
pub fn assign_missing_splits(records: &mut [MutationRecord], seed: u64) {
    let mut missing: Vec<usize> = (0..records.len()).filter(|&i| records[i].split.is_none()).collect();
    if missing.is_empty() {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    missing.shuffle(&mut rng);
    let n_train = (missing.len() as f64 * 0.87).round() as usize;
    for (k, &i) in missing.iter().enumerate() {
        records[i].split = Some(if k < n_train { Split::Train } else { Split::Val });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DedupReport {
    /// Indices (into the input) of the removed rows.
    pub removed: Vec<usize>,
    /// Removed / original, per split (`None` key for rows without a split).
    pub counts: BTreeMap<String, (usize, usize)>,
}

impl DedupReport {
    pub fn removed_fraction(&self, split: Split) -> f64 {
        let key = split_name(Some(split));
        match self.counts.get(key) {
            Some(&(removed, total)) if total > 0 => removed as f64 / total as f64,
            _ => 0.0,
        }
    }
}

pub fn split_name(split: Option<Split>) -> &'static str {
    match split {
        Some(Split::Train) => "train",
        Some(Split::Val) => "val",
        None => "unsplit",
    }
}

/// Drops repeated (pdb_id, chain, position, wt, mut) keys, keeping the first
/// occurrence regardless of its ΔΔG.
pub fn dedup(records: &[MutationRecord]) -> (Vec<MutationRecord>, DedupReport) {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(records.len());
    let mut removed = Vec::new();
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let entry = counts.entry(split_name(r.split).to_string()).or_default();
        entry.1 += 1;
        if seen.insert(r.key()) {
            kept.push(r.clone());
        } else {
            entry.0 += 1;
            removed.push(i);
        }
    }
    (kept, DedupReport { removed, counts })
}

/// Dedup followed by seeded split assignment; every entry point uses this so
/// train, eval and serve agree on the split.
pub fn prepare_records(raw: &[MutationRecord], seed: u64) -> (Vec<MutationRecord>, DedupReport) {
    let (mut kept, report) = dedup(raw);
    assign_missing_splits(&mut kept, seed);
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ProteinKey {
    pub pdb_id: String,
    pub chain: char,
}

impl ProteinKey {
    pub fn new(pdb_id: &str, chain: char) -> Self {
        Self {
            pdb_id: pdb_id.to_ascii_uppercase(),
            chain,
        }
    }

    /// `PDBID_CHAIN`, used in file names and URLs.
    pub fn id(&self) -> String {
        format!("{}_{}", self.pdb_id, self.chain)
    }

    pub fn parse_id(id: &str) -> Option<Self> {
        let (pdb, chain) = id.rsplit_once('_')?;
        let mut cs = chain.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) if !pdb.is_empty() => Some(Self::new(pdb, c)),
            _ => None,
        }
    }
}

/// How per-residue embeddings are obtained for a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingSource {
    /// `{PDBID}_{CHAIN}.struct.emb1` and `{PDBID}_{CHAIN}.seq.emb1` in a directory.
    Files(PathBuf),
    Desk { struct_dim: usize, seq_dim: usize, seed: u64 },
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Desk {
            struct_dim: 32,
            seq_dim: 32,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProteinEntry {
    pub structure: BackboneStructure,
    pub dihedrals: Vec<DihedralTriple>,
    pub struct_emb: EmbeddingSet,
    pub seq_emb: EmbeddingSet,
}

/// Structures and embeddings for every protein a dataset refers to.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub proteins: BTreeMap<ProteinKey, ProteinEntry>,
    pub features: FeatureBuilder,
    pub source: EmbeddingSource,
}

fn find_pdb(dir: &Path, pdb_id: &str) -> Option<PathBuf> {
    for name in [pdb_id.to_string(), pdb_id.to_ascii_lowercase(), pdb_id.to_ascii_uppercase()] {
        for ext in ["pdb", "ent"] {
            let p = dir.join(format!("{name}.{ext}"));
            if p.is_file() {
                return Some(p);
            }
        }
    }
    None
}

impl Corpus {
    pub fn new(features: FeatureBuilder, source: EmbeddingSource) -> Self {
        Self {
            proteins: BTreeMap::new(),
            features,
            source,
        }
    }

    pub fn add_structure(&mut self, mut structure: BackboneStructure) -> Result<ProteinKey> {
        structure.pdb_id = structure.pdb_id.to_ascii_uppercase();
        let key = ProteinKey::new(&structure.pdb_id, structure.chain);
        let dihedrals = backbone_dihedrals(&structure);
        let (struct_emb, seq_emb) = match &self.source {
            EmbeddingSource::Desk { struct_dim, seq_dim, seed } => {
                let table = AminoAcidTable::builtin();
                (
                    DeskEmbedder::structural(*struct_dim, *seed).embed(&structure, &dihedrals, table)?,
                    DeskEmbedder::sequence(*seq_dim, seed.wrapping_add(1)).embed(&structure, &dihedrals, table)?,
                )
            }
            EmbeddingSource::Files(dir) => (
                load_embeddings(&dir.join(format!("{}.struct.emb1", key.id())))?,
                load_embeddings(&dir.join(format!("{}.seq.emb1", key.id())))?,
            ),
        };
        for e in [&struct_emb, &seq_emb] {
            if e.len() != structure.len() {
                return Err(Error::Linkage(format!(
                    "{}: embeddings cover {} residues, structure has {}",
                    key.id(),
                    e.len(),
                    structure.len()
                )));
            }
        }
        self.proteins.insert(
            key.clone(),
            ProteinEntry {
                structure,
                dihedrals,
                struct_emb,
                seq_emb,
            },
        );
        Ok(key)
    }

    /// Loads every (pdb_id, chain) the records mention from `pdb_dir`.
    pub fn for_records(
        records: &[MutationRecord],
        pdb_dir: &Path,
        features: FeatureBuilder,
        source: EmbeddingSource,
    ) -> Result<Self> {
        let mut corpus = Self::new(features, source);
        let keys: BTreeMap<ProteinKey, ()> = records.iter().map(|r| (r.protein_key(), ())).collect();
        let mut missing = Vec::new();
        for key in keys.keys() {
            let Some(path) = find_pdb(pdb_dir, &key.pdb_id) else {
                missing.push(key.pdb_id.clone());
                continue;
            };
            let mut s = read_pdb_file(&path, Some(key.chain))?;
            s.pdb_id = key.pdb_id.clone();
            corpus.add_structure(s)?;
        }
        if !missing.is_empty() {
            return Err(Error::Linkage(format!(
                "no PDB file in {} for: {}",
                pdb_dir.display(),
                missing.join(", ")
            )));
        }
        Ok(corpus)
    }

    /// Adds every `*.pdb` file in `dir` (first chain, or `chain` when given).
    pub fn add_directory(&mut self, dir: &Path, chain: Option<char>) -> Result<()> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pdb" || x == "ent"))
            .collect();
        paths.sort();
        for p in paths {
            let s = read_pdb_file(&p, chain)?;
            if !self.proteins.contains_key(&ProteinKey::new(&s.pdb_id, s.chain)) {
                self.add_structure(s)?;
            }
        }
        Ok(())
    }

    pub fn entry(&self, key: &ProteinKey) -> Result<&ProteinEntry> {
        self.proteins
            .get(key)
            .ok_or_else(|| Error::Linkage(format!("protein {} is not loaded", key.id())))
    }

    pub fn dims(&self, config: &TrainConfig) -> Result<ModelDims> {
        let entry = self
            .proteins
            .values()
            .next()
            .ok_or_else(|| Error::Linkage("corpus holds no proteins".into()))?;
        let (d_struct, d_seq) = (entry.struct_emb.dim(), entry.seq_emb.dim());
        for (k, e) in &self.proteins {
            if e.struct_emb.dim() != d_struct || e.seq_emb.dim() != d_seq {
                return Err(Error::Linkage(format!("{} has embedding dims that differ from the corpus", k.id())));
            }
        }
        let builder = FeatureBuilder {
            window: config.window,
            ..self.features.clone()
        };
        Ok(ModelDims {
            d_struct,
            d_seq,
            d_feat: full_feature_len(&builder, d_seq),
            d_f: config.d_f,
            d_a: config.d_a,
            hidden: config.hidden.clone(),
            window: config.window,
        })
    }

    /// Model input for one mutation.
    pub fn input(&self, key: &ProteinKey, pos: usize, wt: char, mutant: char, window: usize) -> Result<MutationInput> {
        let e = self.entry(key)?;
        let builder = FeatureBuilder {
            window,
            ..self.features.clone()
        };
        let feats = assemble_features(&builder, &e.structure, &e.dihedrals, &e.seq_emb, pos, wt, mutant)?;
        MutationInput::assemble(&e.struct_emb, &e.seq_emb, &feats, pos, window)
    }

    /// Inputs for all records, or a linkage error listing every unresolvable row.
    pub fn examples(&self, records: &[MutationRecord], window: usize) -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(records.len());
        let mut bad = Vec::new();
        for (i, r) in records.iter().enumerate() {
            match self.input(&r.protein_key(), r.position, r.wt_aa, r.mut_aa, window) {
                Ok(input) => out.push(Example { input, target: r.ddg }),
                Err(e) => bad.push(format!("row {} ({} {}{}{}): {e}", i + 1, r.pdb_id, r.wt_aa, r.position, r.mut_aa)),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Linkage(format!("{} unresolvable record(s):\n  {}", bad.len(), bad.join("\n  "))));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: MutationInput,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: FusionVariant,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub d_f: usize,
    pub d_a: usize,
    pub hidden: Vec<usize>,
    pub window: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: FusionVariant::MultiplyTransfusion,
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 0.0,
            dropout_rate: 0.0,
            d_f: 64,
            d_a: 32,
            hidden: vec![64, 64],
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Domain(format!("invalid lr {} / weight decay {}", self.lr, self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Domain(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_spearman: f64,
    pub val_r2: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters as of `best_epoch`.
    pub model: FusionModel,
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Parameter checksum after each epoch's updates.
    pub epoch_checksums: Vec<String>,
}

impl TrainOutcome {
    pub fn best_log(&self) -> &EpochLog {
        &self.logs[self.best_epoch - 1]
    }
}

/// 1-based index of the first maximal `val_spearman`.
pub fn select_best_epoch(logs: &[EpochLog]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, log) in logs.iter().enumerate() {
        if best.is_none_or(|(_, s)| log.val_spearman > s) {
            best = Some((i, log.val_spearman));
        }
    }
    best.map(|(i, _)| i + 1)
}

pub fn predict_all(model: &FusionModel, examples: &[Example]) -> Result<Vec<f64>> {
    examples.iter().map(|e| model.predict(&e.input)).collect()
}

fn targets(examples: &[Example]) -> Vec<f64> {
    examples.iter().map(|e| e.target).collect()
}

/// Trains a freshly initialised model on prepared examples.
pub fn train_examples(config: &TrainConfig, dims: ModelDims, train: &[Example], val: &[Example]) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.len() < 2 {
        return Err(Error::Data(format!(
            "need a non-empty training split and at least two validation rows (got {} / {})",
            train.len(),
            val.len()
        )));
    }
    let val_targets = targets(val);
    if val_targets.iter().all(|&t| t == val_targets[0]) {
        return Err(Error::Data("validation ΔΔG values are all equal".into()));
    }
    let train_targets = targets(train);

    let mut model = FusionModel::new(config.variant, dims, config.seed)?;
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
        &shapes,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_f00d);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut tape = Tape::new();
    let mut logs = Vec::with_capacity(config.epochs);
    let mut epoch_checksums = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, FusionModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&MutationInput, f64)> = chunk.iter().map(|&i| (&train[i].input, train[i].target)).collect();
            let loss = tape.forward(&model, &batch, config.dropout_rate, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Data(format!("training diverged at epoch {epoch} (loss {loss})")));
            }
            let grads = tape.backward(&model)?;
            adam_step(&mut adam, &mut model.params_mut(), &grads.buffers)?;
        }

        epoch_checksums.push(model.param_checksum());
        let train_pred = predict_all(&model, train)?;
        let val_pred = predict_all(&model, val)?;
        let log = EpochLog {
            epoch,
            train_mse: mse_loss(&train_pred, &train_targets)?,
            val_mse: mse_loss(&val_pred, &val_targets)?,
            // constant predictions carry no ranking information
            val_spearman: spearman(&val_pred, &val_targets).or_else(undefined_as_zero)?,
            val_r2: r2(&val_pred, &val_targets)?,
        };
        if [log.train_mse, log.val_mse, log.val_r2].iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite metrics at epoch {epoch}")));
        }
        if best.as_ref().is_none_or(|(s, _)| log.val_spearman > *s) {
            best = Some((log.val_spearman, model.clone()));
        }
        logs.push(log);
    }

    let best_epoch = select_best_epoch(&logs).expect("at least one epoch");
    let (_, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        logs,
        best_epoch,
        epoch_checksums,
    })
}

fn undefined_as_zero(e: Error) -> Result<f64> {
    match e {
        Error::Undefined(_) => Ok(0.0),
        other => Err(other),
    }
}

pub fn split_records(records: &[MutationRecord]) -> (Vec<MutationRecord>, Vec<MutationRecord>) {
    records
        .iter()
        .cloned()
        .partition(|r| r.split.unwrap_or(Split::Train) == Split::Train)
}

/// Trains on the records' train split, selecting the epoch by validation Spearman.
pub fn train(config: &TrainConfig, records: &[MutationRecord], corpus: &Corpus) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_rows, val_rows) = split_records(records);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Data(format!(
            "train and validation splits must both be non-empty (got {} / {})",
            train_rows.len(),
            val_rows.len()
        )));
    }
    let train_ex = corpus.examples(&train_rows, config.window)?;
    let val_ex = corpus.examples(&val_rows, config.window)?;
    train_examples(config, corpus.dims(config)?, &train_ex, &val_ex)
}

/// Axis values of a hyperparameter lattice; the grid is their cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base: TrainConfig,
    pub variants: Vec<FusionVariant>,
    pub lrs: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub weight_decays: Vec<f64>,
    pub dropout_rates: Vec<f64>,
    pub windows: Vec<usize>,
    pub d_fs: Vec<usize>,
}

impl Grid {
    pub fn single(base: TrainConfig) -> Self {
        Self {
            variants: vec![base.variant],
            lrs: vec![base.lr],
            batch_sizes: vec![base.batch_size],
            epochs: vec![base.epochs],
            weight_decays: vec![base.weight_decay],
            dropout_rates: vec![base.dropout_rate],
            windows: vec![base.window],
            d_fs: vec![base.d_f],
            base,
        }
    }

    /// Cells in row-major order (variant outermost, d_f innermost).
    pub fn cells(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &lr in &self.lrs {
                for &batch_size in &self.batch_sizes {
                    for &epochs in &self.epochs {
                        for &weight_decay in &self.weight_decays {
                            for &dropout_rate in &self.dropout_rates {
                                for &window in &self.windows {
                                    for &d_f in &self.d_fs {
                                        out.push(TrainConfig {
                                            variant,
                                            lr,
                                            batch_size,
                                            epochs,
                                            weight_decay,
                                            dropout_rate,
                                            window,
                                            d_f,
                                            ..self.base.clone()
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Position in [`Grid::cells`] order.
    pub cell: usize,
    pub config: TrainConfig,
    pub outcome: std::result::Result<TrainOutcome, String>,
}

impl GridResult {
    pub fn score(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|o| o.best_log().val_spearman)
    }
}

/// Trains every cell (on up to `jobs` threads) and ranks by best validation Spearman.
/// A failing cell is reported in place and does not stop the sweep.
pub fn grid_search(grid: &Grid, records: &[MutationRecord], corpus: &Corpus, jobs: usize) -> Result<Vec<GridResult>> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Domain("empty hyperparameter grid".into()));
    }
    let run = |(i, config): (usize, TrainConfig)| GridResult {
        cell: i,
        outcome: train(&config, records, corpus).map_err(|e| e.to_string()),
        config,
    };
    let mut results: Vec<GridResult> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::State(e.to_string()))?;
        pool.install(|| cells.into_par_iter().enumerate().map(run).collect())
    } else {
        cells.into_iter().enumerate().map(run).collect()
    };
    results.sort_by(|a, b| match (a.score(), b.score()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cell.cmp(&b.cell)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cell.cmp(&b.cell),
    });
    Ok(results)
}

/// Tab-separated ranked table.
pub fn grid_report(results: &[GridResult]) -> String {
    let mut out = String::from(
        "rank\tcell\tmodel\tlr\tbatch\tepochs\tweight_decay\tdropout\twindow\td_f\tbest_epoch\tval_spearman\tval_mse\tval_r2\terror\n",
    );
    for (rank, r) in results.iter().enumerate() {
        let c = &r.config;
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            rank + 1,
            r.cell,
            c.variant,
            c.lr,
            c.batch_size,
            c.epochs,
            c.weight_decay,
            c.dropout_rate,
            c.window,
            c.d_f
        );
        match &r.outcome {
            Ok(o) => {
                let b = o.best_log();
                let _ = writeln!(out, "\t{}\t{}\t{}\t{}\t", o.best_epoch, b.val_spearman, b.val_mse, b.val_r2);
            }
            Err(e) => {
                let _ = writeln!(out, "\t\t\t\t\t{}", e.replace(['\t', '\n'], " "));
            }
        }
    }
    out
}

pub fn epoch_log_table(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch\ttrain_mse\tval_mse\tval_spearman\tval_r2\n");
    for l in logs {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", l.epoch, l.train_mse, l.val_mse, l.val_spearman, l.val_r2);
    }
    out
}

/// SHA-256 of the canonical CSV rendering of `records`.
pub fn dataset_checksum(records: &[MutationRecord]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(dataset_to_csv(records).as_bytes()))
}

/// Record counts per split.
pub fn split_counts(records: &[MutationRecord]) -> HashMap<&'static str, usize> {
    let mut out = HashMap::new();
    for r in records {
        *out.entry(split_name(r.split)).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pdb: &str, pos: usize, wt: char, mt: char, ddg: f64, split: Split) -> MutationRecord {
        MutationRecord {
            pdb_id: pdb.into(),
            chain: 'A',
            position: pos,
            wt_aa: wt,
            mut_aa: mt,
            ddg,
            split: Some(split),
        }
    }

    fn log(epoch: usize, s: f64) -> EpochLog {
        EpochLog {
            epoch,
            train_mse: 1.0,
            val_mse: 1.0,
            val_spearman: s,
            val_r2: 0.0,
        }
    }

    #[test]
    fn parse_csv_and_tsv() {
        let csv = "pdb_id,chain,position,wt_aa,mut_aa,ddg,split\n1abc,A,3,V,A,1.25,train\n1abc,A,4,L,A,-0.5,val\n";
        let rs = parse_dataset(csv).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[1].split, Some(Split::Val));
        let tsv = "pdb_id\tchain\tposition\twt_aa\tmut_aa\tddg\n1abc\tA\t3\tV\tA\t1.25\n";
        let rs = parse_dataset(tsv).unwrap();
        assert_eq!(rs[0].split, None);
        assert_eq!(parse_dataset(&dataset_to_csv(&rs)).unwrap(), rs);
    }

    #[test]
    fn parse_rejects_bad_rows() {
        let bad = "pdb_id,chain,position,wt_aa,mut_aa,ddg\n1abc,A,3,V,V,1.0\n";
        assert!(matches!(parse_dataset(bad), Err(Error::Parse { line: 2, .. })));
        let bad = "pdb_id,chain,position,wt_aa,mut_aa,ddg\n1abc,A,0,V,A,1.0\n";
        assert!(parse_dataset(bad).is_err());
        let bad = "pdb_id,chain,position,wt_aa,mut_aa,ddg\n1abc,A,2,V,A,nan\n";
        assert!(parse_dataset(bad).is_err());
    }

    #[test]
    fn dedup_examples() {
        let rs = vec![
            rec("1ABC", 1, 'V', 'A', 1.0, Split::Train),
            rec("1ABC", 2, 'L', 'A', 2.0, Split::Train),
        ];
        let (kept, report) = dedup(&rs);
        assert_eq!(kept, rs);
        assert_eq!(report.removed_fraction(Split::Train), 0.0);

        let rs = vec![
            rec("1ABC", 1, 'V', 'A', 1.0, Split::Train),
            rec("1abc", 1, 'V', 'A', 3.0, Split::Train),
        ];
        let (kept, report) = dedup(&rs);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].ddg, 1.0);
        assert_eq!(report.removed, vec![1]);
        assert_eq!(report.removed_fraction(Split::Train), 0.5);
    }

    #[test]
    fn best_epoch_rules() {
        assert_eq!(select_best_epoch(&[log(1, -0.3)]), Some(1));
        let logs: Vec<_> = [0.2, 0.5, 0.5, 0.4].iter().enumerate().map(|(i, &s)| log(i + 1, s)).collect();
        assert_eq!(select_best_epoch(&logs), Some(2));
        assert_eq!(select_best_epoch(&[]), None);
    }

    #[test]
    fn seeded_split_proportions() {
        let mut rs: Vec<_> = (1..=1000).map(|p| MutationRecord { split: None, ..rec("X", p, 'A', 'G', 0.1, Split::Train) }).collect();
        rs[0].split = Some(Split::Val);
        assign_missing_splits(&mut rs, 3);
        let counts = split_counts(&rs);
        assert_eq!(counts["train"], 869);
        assert_eq!(counts["val"], 131);
        assert_eq!(rs[0].split, Some(Split::Val));
    }

    #[test]
    fn grid_cells_cartesian_order() {
        let mut grid = Grid::single(TrainConfig::default());
        grid.lrs = vec![1e-3, 1e-2];
        grid.windows = vec![3, 5];
        let cells = grid.cells();
        assert_eq!(cells.len(), 4);
        let pairs: Vec<_> = cells.iter().map(|c| (c.lr, c.window)).collect();
        assert_eq!(pairs, vec![(1e-3, 3), (1e-3, 5), (1e-2, 3), (1e-2, 5)]);
        assert_eq!(grid.cells(), cells);
    }

    #[test]
    fn protein_ids() {
        let k = ProteinKey::new("2lzm", 'A');
        assert_eq!(k.id(), "2LZM_A");
        assert_eq!(ProteinKey::parse_id("2LZM_A"), Some(k));
        assert_eq!(ProteinKey::parse_id("2LZM"), None);
    }
}
