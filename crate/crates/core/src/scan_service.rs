//! Model artifacts, full mutation scans and the HTTP API.
//!
//! Endpoints (all JSON):
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/proteins` | `{proteins: [{id, pdb_id, chain, length, sequence, n_records}]}` |
//! | GET | `/api/proteins/{id}/structure` | `{id, pdb_id, chain, sequence, residues: [{index, seq_num, aa, n, ca, c, o}]}` |
//! | GET | `/api/proteins/{id}/scan` | [`ScanMatrix`] |
//! | POST | `/api/predict` | request `{pdb_id, chain, position, wt_aa, mut_aa}`, response [`PredictResponse`] |
//! | GET | `/api/dataset/summary` | [`DatasetSummary`] |
//! | GET | `/api/analysis/embedding_scatter` | [`ScatterPayload`] |
//! | GET | `/api/metrics` | [`EvalReport`] |
//!
//! `{id}` is `PDBID_CHAIN` (e.g. `2LZM_A`); a bare PDB id is accepted when only
//! one chain of it is loaded. Errors come back as `{error, message}` with a
//! 4xx/5xx status.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amino::{self, ALPHABET};
use crate::analysis::{pca_fit, substitution_counts, SubstitutionCounts};
use crate::error::{Error, Result};
use crate::features::FeatureBuilder;
use crate::fusion_models::{FusionModel, ModelDims};
use crate::io::write_atomic;
use crate::metrics::{classify_sign, regression_report, sign_report, ClassificationReport, RegressionReport, StabilityLabel};
use crate::structure_io::Point3;
use crate::training::{
    prepare_records, read_dataset, split_name, split_records, Corpus, DedupReport, EmbeddingSource, EpochLog,
    MutationRecord, ProteinKey, Split, TrainConfig, TrainOutcome,
};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "THERMOFUSE-MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactBody {
    format_version: u32,
    config: TrainConfig,
    dims: ModelDims,
    init_seed: u64,
    embedding: EmbeddingSource,
    feature_window: usize,
    dataset_checksum: String,
    best_epoch: usize,
    val_metrics: Option<EpochLog>,
    logs: Vec<EpochLog>,
    tensors: Vec<NamedTensor>,
}

/// A trained model plus what is needed to rebuild its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub model: FusionModel,
    pub config: TrainConfig,
    pub embedding: EmbeddingSource,
    pub dataset_checksum: String,
    pub best_epoch: usize,
    pub val_metrics: Option<EpochLog>,
    pub logs: Vec<EpochLog>,
}

impl ModelArtifact {
    pub fn from_outcome(outcome: TrainOutcome, config: TrainConfig, embedding: EmbeddingSource, dataset_checksum: String) -> Self {
        let val_metrics = outcome.logs.get(outcome.best_epoch.wrapping_sub(1)).copied();
        Self {
            model: outcome.model,
            config,
            embedding,
            dataset_checksum,
            best_epoch: outcome.best_epoch,
            val_metrics,
            logs: outcome.logs,
        }
    }

    /// Header line `THERMOFUSE-MODEL <version> sha256=<hex of body>`, then a JSON body.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.model.params();
        let tensors = self
            .model
            .param_shapes()
            .into_iter()
            .zip(params)
            .map(|((name, r, c), values)| NamedTensor {
                name,
                shape: [r, c],
                values: values.to_vec(),
            })
            .collect();
        let body = ArtifactBody {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            dims: self.model.dims.clone(),
            init_seed: self.model.seed,
            embedding: self.embedding.clone(),
            feature_window: self.model.dims.window,
            dataset_checksum: self.dataset_checksum.clone(),
            best_epoch: self.best_epoch,
            val_metrics: self.val_metrics,
            logs: self.logs.clone(),
            tensors,
        };
        let json = serde_json::to_vec_pretty(&body).map_err(|e| Error::Data(e.to_string()))?;
        let mut out = format!("{MAGIC} {FORMAT_VERSION} sha256={}\n", hex::encode(Sha256::digest(&json))).into_bytes();
        out.extend(json);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("model artifact has no header line".into()))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Format("artifact header is not UTF-8".into()))?;
        let body = &bytes[split + 1..];
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [magic, version, digest] = fields[..] else {
            return Err(Error::Format(format!("malformed artifact header {header:?}")));
        };
        if magic != MAGIC {
            return Err(Error::Format(format!("not a model artifact (header starts with {magic:?})")));
        }
        let version: u32 = version
            .parse()
            .map_err(|_| Error::Format(format!("bad format version {version:?}")))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let expected = digest
            .strip_prefix("sha256=")
            .ok_or_else(|| Error::Format("artifact header lacks sha256=".into()))?;
        let actual = hex::encode(Sha256::digest(body));
        if !expected.eq_ignore_ascii_case(&actual) {
            return Err(Error::Integrity(format!("checksum mismatch: header {expected}, body {actual}")));
        }
        let body: ArtifactBody =
            serde_json::from_slice(body).map_err(|e| Error::Integrity(format!("artifact body does not parse: {e}")))?;
        if body.format_version != version {
            return Err(Error::Integrity(format!(
                "body version {} disagrees with header version {version}",
                body.format_version
            )));
        }
        let mut model = FusionModel::new(body.config.variant, body.dims, body.init_seed)?;
        let shapes = model.param_shapes();
        if shapes.len() != body.tensors.len() {
            return Err(Error::Integrity(format!(
                "artifact holds {} tensors, model needs {}",
                body.tensors.len(),
                shapes.len()
            )));
        }
        for (((name, r, c), dst), t) in shapes.iter().zip(model.params_mut()).zip(&body.tensors) {
            if &t.name != name || t.shape != [*r, *c] || t.values.len() != dst.len() || t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integrity(format!("tensor {:?} {:?} does not fit {name} [{r}, {c}]", t.name, t.shape)));
            }
            dst.copy_from_slice(&t.values);
        }
        Ok(Self {
            model,
            config: body.config,
            embedding: body.embedding,
            dataset_checksum: body.dataset_checksum,
            best_epoch: body.best_epoch,
            val_metrics: body.val_metrics,
            logs: body.logs,
        })
    }

    pub fn window(&self) -> usize {
        self.model.dims.window
    }
}

pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    write_atomic(path, &artifact.to_bytes()?)
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelArtifact::from_bytes(&bytes)
}

/// Predicted ΔΔG for every position × mutant residue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMatrix {
    pub pdb_id: String,
    pub chain: char,
    pub length: usize,
    pub wt_sequence: String,
    /// Column order of `values`.
    pub alphabet: String,
    pub units: String,
    /// `values[i][j]`: position i + 1 mutated to `alphabet[j]`; 0 at the wild type.
    pub values: Vec<Vec<f64>>,
}

/// ΔΔG for one substitution; exactly 0 when `mutant == wt`.
pub fn predict_point(model: &FusionModel, corpus: &Corpus, key: &ProteinKey, pos: usize, wt: char, mutant: char) -> Result<f64> {
    if !amino::is_canonical(mutant) {
        return Err(Error::Domain(format!("mutant {mutant:?} is not a canonical amino acid")));
    }
    let input = corpus.input(key, pos, wt, mutant, model.dims.window)?;
    if wt == mutant {
        return Ok(0.0);
    }
    model.predict(&input)
}

pub fn scan(model: &FusionModel, corpus: &Corpus, key: &ProteinKey) -> Result<ScanMatrix> {
    let entry = corpus.entry(key)?;
    let s = &entry.structure;
    if entry.struct_emb.len() != s.len() || entry.seq_emb.len() != s.len() {
        return Err(Error::Linkage(format!("{}: embedding length differs from structure length {}", key.id(), s.len())));
    }
    if let Some(r) = s.residues.iter().find(|r| !amino::is_canonical(r.aa)) {
        return Err(Error::Domain(format!(
            "{}: residue {} ({}) is not a canonical amino acid and cannot be scanned",
            key.id(),
            r.index,
            r.seq_num
        )));
    }
    let values = s
        .residues
        .par_iter()
        .map(|r| {
            ALPHABET
                .iter()
                .map(|&m| predict_point(model, corpus, key, r.index, r.aa, m))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanMatrix {
        pdb_id: key.pdb_id.clone(),
        chain: key.chain,
        length: s.len(),
        wt_sequence: s.sequence(),
        alphabet: ALPHABET.iter().collect(),
        units: "kcal/mol".into(),
        values,
    })
}

/// Rebuilds the corpus an artifact expects: dataset proteins plus every PDB in `pdb_dir`.
pub fn corpus_for_artifact(
    artifact: &ModelArtifact,
    records: &[MutationRecord],
    pdb_dir: &Path,
    emb_dir: Option<&Path>,
    chain: Option<char>,
) -> Result<Corpus> {
    let source = match emb_dir {
        Some(d) => EmbeddingSource::Files(d.to_path_buf()),
        None => artifact.embedding.clone(),
    };
    let features = FeatureBuilder::builtin(artifact.window())?;
    let mut corpus = Corpus::for_records(records, pdb_dir, features.clone(), source.clone())?;
    if pdb_dir.is_dir() {
        corpus.add_directory(pdb_dir, chain)?;
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n: usize,
    pub regression: RegressionReport,
    pub classification: ClassificationReport,
    pub best_epoch: usize,
    pub dataset_checksum: String,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("split\t{}\nbest_epoch\t{}\n", self.split, self.best_epoch);
        out.push_str(&self.regression.to_key_values());
        out.push_str(&self.classification.to_key_values());
        out
    }
}

/// Regression and sign-classification metrics of the artifact on one split.
pub fn evaluate(artifact: &ModelArtifact, records: &[MutationRecord], corpus: &Corpus, split: Split) -> Result<EvalReport> {
    let rows: Vec<MutationRecord> = records.iter().filter(|r| r.split == Some(split)).cloned().collect();
    let examples = corpus.examples(&rows, artifact.window())?;
    let pred = examples.iter().map(|e| artifact.model.predict(&e.input)).collect::<Result<Vec<f64>>>()?;
    let truth: Vec<f64> = examples.iter().map(|e| e.target).collect();
    Ok(EvalReport {
        split: split_name(Some(split)).into(),
        n: rows.len(),
        regression: regression_report(&pred, &truth)?,
        classification: sign_report(&pred, &truth)?,
        best_epoch: artifact.best_epoch,
        dataset_checksum: artifact.dataset_checksum.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub pdb_id: String,
    pub chain: char,
    pub position: usize,
    pub wt_aa: char,
    pub mut_aa: char,
    pub ddg: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPayload {
    /// Fraction of latent variance on each of the two axes.
    pub explained_variance_ratio: Vec<f64>,
    pub points: Vec<ScatterPoint>,
}

/// 2-D PCA of the model's attention latents over the validation records.
pub fn embedding_scatter(artifact: &ModelArtifact, records: &[MutationRecord], corpus: &Corpus) -> Result<ScatterPayload> {
    let (_, val) = split_records(records);
    let examples = corpus.examples(&val, artifact.window())?;
    let latents = examples
        .iter()
        .map(|e| artifact.model.latent(&e.input))
        .collect::<Result<Vec<_>>>()?;
    let pca = pca_fit(&latents, 2)?;
    let coords = pca.transform(&latents)?;
    Ok(ScatterPayload {
        explained_variance_ratio: pca.explained_variance_ratio(),
        points: val
            .iter()
            .zip(coords)
            .map(|(r, c)| ScatterPoint {
                pdb_id: r.pdb_id.to_ascii_uppercase(),
                chain: r.chain,
                position: r.position,
                wt_aa: r.wt_aa,
                mut_aa: r.mut_aa,
                ddg: r.ddg,
                x: c[0],
                y: c[1],
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupSummary {
    pub removed: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// Rows in the file, before dedup.
    pub raw_records: usize,
    pub records: usize,
    pub splits: BTreeMap<String, usize>,
    pub proteins: usize,
    pub dedup: BTreeMap<String, DedupSummary>,
    pub alphabet: String,
    /// Row = wild type, column = mutant, both in `alphabet` order.
    pub substitution_counts: Vec<Vec<u64>>,
}

pub fn dataset_summary(raw_records: usize, records: &[MutationRecord], report: &DedupReport) -> Result<DatasetSummary> {
    let SubstitutionCounts { counts } = substitution_counts(records)?;
    let mut splits = BTreeMap::new();
    for r in records {
        *splits.entry(split_name(r.split).to_string()).or_insert(0) += 1;
    }
    let proteins = records.iter().map(|r| r.protein_key()).collect::<std::collections::BTreeSet<_>>().len();
    Ok(DatasetSummary {
        raw_records,
        records: records.len(),
        splits,
        proteins,
        dedup: report
            .counts
            .iter()
            .map(|(k, &(removed, total))| {
                (
                    k.clone(),
                    DedupSummary {
                        removed,
                        total,
                        fraction: if total > 0 { removed as f64 / total as f64 } else { 0.0 },
                    },
                )
            })
            .collect(),
        alphabet: ALPHABET.iter().collect(),
        substitution_counts: counts.iter().map(|r| r.to_vec()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub pdb_id: String,
    pub chain: String,
    pub position: usize,
    pub wt_aa: String,
    pub mut_aa: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub pdb_id: String,
    pub chain: char,
    pub position: usize,
    pub wt_aa: char,
    pub mut_aa: char,
    pub ddg: f64,
    pub label: StabilityLabel,
    pub units: String,
}

#[derive(Debug, Clone, Serialize)]
struct ProteinDescriptor {
    id: String,
    pdb_id: String,
    chain: char,
    length: usize,
    sequence: String,
    n_records: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ResidueCoords {
    index: usize,
    seq_num: i32,
    aa: char,
    n: Option<Point3>,
    ca: Option<Point3>,
    c: Option<Point3>,
    o: Option<Point3>,
}

/// Immutable state shared by all request handlers.
pub struct ServiceState {
    pub artifact: ModelArtifact,
    pub corpus: Corpus,
    pub records: Vec<MutationRecord>,
    summary: DatasetSummary,
    metrics: std::result::Result<EvalReport, String>,
    scatter: std::result::Result<ScatterPayload, String>,
}

impl ServiceState {
    pub fn new(artifact: ModelArtifact, raw: &[MutationRecord], corpus: Corpus) -> Result<Self> {
        let (records, report) = prepare_records(raw, artifact.config.seed);
        let summary = dataset_summary(raw.len(), &records, &report)?;
        let metrics = evaluate(&artifact, &records, &corpus, Split::Val).map_err(|e| e.to_string());
        let scatter = embedding_scatter(&artifact, &records, &corpus).map_err(|e| e.to_string());
        Ok(Self {
            artifact,
            corpus,
            records,
            summary,
            metrics,
            scatter,
        })
    }

    fn resolve(&self, id: &str) -> std::result::Result<ProteinKey, ApiError> {
        if let Some(k) = ProteinKey::parse_id(id) {
            if self.corpus.proteins.contains_key(&k) {
                return Ok(k);
            }
        }
        let upper = id.to_ascii_uppercase();
        let mut matches = self.corpus.proteins.keys().filter(|k| k.pdb_id == upper);
        match (matches.next(), matches.next()) {
            (Some(k), None) => Ok(k.clone()),
            (Some(_), Some(_)) => Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "ambiguous_protein",
                format!("{id} has several chains loaded; use PDBID_CHAIN"),
            )),
            _ => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_protein", format!("no protein {id:?} is loaded"))),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: String) -> Self {
        Self { status, kind, message }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::Consistency(_) => (StatusCode::UNPROCESSABLE_ENTITY, "consistency"),
            Error::Bounds { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "bounds"),
            Error::Domain(_) => (StatusCode::UNPROCESSABLE_ENTITY, "domain"),
            Error::Linkage(_) => (StatusCode::UNPROCESSABLE_ENTITY, "linkage"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;
type Shared = Arc<ServiceState>;

async fn list_proteins(State(st): State<Shared>) -> ApiResult<serde_json::Value> {
    let mut n_records: BTreeMap<ProteinKey, usize> = BTreeMap::new();
    for r in &st.records {
        *n_records.entry(r.protein_key()).or_insert(0) += 1;
    }
    let proteins: Vec<ProteinDescriptor> = st
        .corpus
        .proteins
        .iter()
        .map(|(k, e)| ProteinDescriptor {
            id: k.id(),
            pdb_id: k.pdb_id.clone(),
            chain: k.chain,
            length: e.structure.len(),
            sequence: e.structure.sequence(),
            n_records: n_records.get(k).copied().unwrap_or(0),
        })
        .collect();
    Ok(Json(serde_json::json!({ "proteins": proteins })))
}

async fn structure(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<serde_json::Value> {
    let key = st.resolve(&id)?;
    let s = &st.corpus.entry(&key)?.structure;
    let residues: Vec<ResidueCoords> = s
        .residues
        .iter()
        .map(|r| ResidueCoords {
            index: r.index,
            seq_num: r.seq_num,
            aa: r.aa,
            n: r.n,
            ca: r.ca,
            c: r.c,
            o: r.o,
        })
        .collect();
    Ok(Json(serde_json::json!({
        "id": key.id(),
        "pdb_id": key.pdb_id,
        "chain": key.chain,
        "sequence": s.sequence(),
        "residues": residues,
    })))
}

async fn scan_protein(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<ScanMatrix> {
    let key = st.resolve(&id)?;
    let matrix = tokio::task::spawn_blocking(move || scan(&st.artifact.model, &st.corpus, &key))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(matrix))
}

fn one_char(field: &str, s: &str) -> std::result::Result<char, ApiError> {
    let mut cs = s.trim().chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) => Ok(c.to_ascii_uppercase()),
        _ => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "bad_request",
            format!("{field} must be one character, got {s:?}"),
        )),
    }
}

async fn predict(State(st): State<Shared>, body: std::result::Result<Json<PredictRequest>, JsonRejection>) -> ApiResult<PredictResponse> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let chain = one_char("chain", &req.chain)?;
    let wt = one_char("wt_aa", &req.wt_aa)?;
    let mutant = one_char("mut_aa", &req.mut_aa)?;
    let key = ProteinKey::new(&req.pdb_id, chain);
    if !st.corpus.proteins.contains_key(&key) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_protein",
            format!("no protein {} is loaded", key.id()),
        ));
    }
    let ddg = predict_point(&st.artifact.model, &st.corpus, &key, req.position, wt, mutant)?;
    Ok(Json(PredictResponse {
        pdb_id: key.pdb_id,
        chain,
        position: req.position,
        wt_aa: wt,
        mut_aa: mutant,
        ddg,
        label: classify_sign(ddg),
        units: "kcal/mol".into(),
    }))
}

async fn summary(State(st): State<Shared>) -> ApiResult<DatasetSummary> {
    Ok(Json(st.summary.clone()))
}

fn unavailable(what: &str, msg: &str) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unavailable", format!("{what} unavailable: {msg}"))
}

async fn scatter(State(st): State<Shared>) -> ApiResult<ScatterPayload> {
    st.scatter.clone().map(Json).map_err(|m| unavailable("embedding scatter", &m))
}

async fn metrics(State(st): State<Shared>) -> ApiResult<EvalReport> {
    st.metrics.clone().map(Json).map_err(|m| unavailable("metrics", &m))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/proteins", get(list_proteins))
        .route("/api/proteins/{id}/structure", get(structure))
        .route("/api/proteins/{id}/scan", get(scan_protein))
        .route("/api/predict", post(predict))
        .route("/api/dataset/summary", get(summary))
        .route("/api/analysis/embedding_scatter", get(scatter))
        .route("/api/metrics", get(metrics))
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub artifact: PathBuf,
    pub data: PathBuf,
    pub pdb_dir: PathBuf,
    pub emb_dir: Option<PathBuf>,
    pub chain: Option<char>,
    pub host: String,
    pub port: u16,
}

pub fn load_state(config: &ServeConfig) -> Result<ServiceState> {
    let artifact = load_model(&config.artifact)?;
    let raw = read_dataset(&config.data)?;
    let (records, _) = prepare_records(&raw, artifact.config.seed);
    let corpus = corpus_for_artifact(&artifact, &records, &config.pdb_dir, config.emb_dir.as_deref(), config.chain)?;
    ServiceState::new(artifact, &raw, corpus)
}

/// Binds the listening socket; a busy port fails here, before any request.
pub fn bind(config: &ServeConfig) -> Result<std::net::TcpListener> {
    let addr = format!("{}:{}", config.host, config.port);
    let listener = std::net::TcpListener::bind(&addr).map_err(|e| Error::io(Path::new(&addr), e))?;
    listener.set_nonblocking(true).map_err(|e| Error::io(Path::new(&addr), e))?;
    Ok(listener)
}

/// Serves until the process is stopped.
pub async fn serve_on(listener: std::net::TcpListener, state: ServiceState) -> Result<()> {
    let addr: SocketAddr = listener.local_addr().map_err(|e| Error::io(Path::new("listener"), e))?;
    let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| Error::io(Path::new("listener"), e))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(Arc::new(state)))
        .await
        .map_err(|e| Error::io(Path::new("listener"), e))
}

pub fn serve(config: &ServeConfig) -> Result<()> {
    let state = load_state(config)?;
    let listener = bind(config)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::State(e.to_string()))?;
    rt.block_on(serve_on(listener, state))
}
