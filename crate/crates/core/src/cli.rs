//! The `thermofuse` command line. Each subcommand is a thin layer over the library.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::amino::AminoAcidTable;
use crate::analysis::{forest_fit, kmeans, kmeans_report, pca_fit, pca_report, substitution_counts, ForestParams};
use crate::embeddings::{write_embeddings, DeskEmbedder};
use crate::error::Error;
use crate::features::{FeatureBuilder, DEFAULT_WINDOW};
use crate::fusion_models::FusionVariant;
use crate::io::write_atomic;
use crate::metrics::{classify_sign, sign_report, StabilityLabel};
use crate::scan_service::{self, corpus_for_artifact, evaluate, load_model, save_model, scan, ModelArtifact, ServeConfig};
use crate::structure_io::{backbone_dihedrals, read_pdb_file};
use crate::training::{
    self, dataset_checksum, epoch_log_table, grid_report, grid_search, prepare_records, read_dataset,
    Corpus, EmbeddingSource, Grid, ProteinKey, Split, TrainConfig,
};

pub const DATA_DIR_ENV: &str = "THERMOFUSE_DATA_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "thermofuse", version, about = "Protein ΔΔG prediction from fused structure and sequence embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write an artifact plus epoch log.
    Train(TrainArgs),
    /// Report regression and sign-classification metrics of an artifact.
    Eval(EvalArgs),
    /// Predict ΔΔG for every position × substitution of one protein.
    Scan(ScanArgs),
    /// Substitution counts, PCA, k-means and a random forest over the dataset.
    Analyze(AnalyzeArgs),
    /// Train every cell of a hyperparameter grid and rank by validation Spearman.
    Gridsearch(GridArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write desk-scale EMB1 embeddings for PDB files.
    Embed(EmbedArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CorpusArgs {
    /// Mutation table (CSV/TSV). Default: $THERMOFUSE_DATA_DIR/dataset.csv
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory of PDB files. Default: $THERMOFUSE_DATA_DIR/pdb
    #[arg(long)]
    pub pdb_dir: Option<PathBuf>,
    /// Directory of EMB1 files named PDBID_CHAIN.{struct,seq}.emb1.
    #[arg(long)]
    pub emb_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model variant 1-4.
    #[arg(long, default_value = "3")]
    pub model: FusionVariant,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Artifact path; the epoch log goes next to it as <out>.log.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64)]
    pub d_f: usize,
    #[arg(long, default_value_t = 32)]
    pub d_a: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![64, 64])]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Split to evaluate: train or val.
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// A single PDB file to scan.
    #[arg(long, conflicts_with = "protein")]
    pub pdb: Option<PathBuf>,
    /// Protein id (PDBID or PDBID_CHAIN) looked up in --pdb-dir.
    #[arg(long, requires = "pdb_dir")]
    pub protein: Option<String>,
    #[arg(long)]
    pub pdb_dir: Option<PathBuf>,
    #[arg(long)]
    pub emb_dir: Option<PathBuf>,
    #[arg(long)]
    pub chain: Option<char>,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output directory for the reports.
    #[arg(long)]
    pub out: PathBuf,
    /// k-means clusters.
    #[arg(long, default_value_t = 12)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// PCA components kept before clustering and the forest.
    #[arg(long, default_value_t = 10)]
    pub components: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Ranked TSV output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u8, 2, 3, 4])]
    pub model: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-3])]
    pub lr: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![64usize])]
    pub batch: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![100usize])]
    pub epochs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![DEFAULT_WINDOW])]
    pub window: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    pub weight_decay: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    pub dropout: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![64usize])]
    pub d_f: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub chain: Option<char>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Embed every PDB file in this directory.
    #[arg(long, conflicts_with = "pdb")]
    pub pdb_dir: Option<PathBuf>,
    #[arg(long)]
    pub pdb: Option<PathBuf>,
    #[arg(long)]
    pub chain: Option<char>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 32)]
    pub seq_dim: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn env_root() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn data_path(c: &CorpusArgs) -> CliResult<PathBuf> {
    c.data
        .clone()
        .or_else(|| env_root().map(|r| r.join("dataset.csv")))
        .ok_or_else(|| CliError::Usage(format!("--data is required (or set {DATA_DIR_ENV})")))
}

fn pdb_dir(c: &CorpusArgs) -> CliResult<PathBuf> {
    c.pdb_dir
        .clone()
        .or_else(|| env_root().map(|r| r.join("pdb")))
        .ok_or_else(|| CliError::Usage(format!("--pdb-dir is required (or set {DATA_DIR_ENV})")))
}

fn embedding_source(emb_dir: Option<&Path>) -> EmbeddingSource {
    match emb_dir {
        Some(d) => EmbeddingSource::Files(d.to_path_buf()),
        None => EmbeddingSource::default(),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_split(s: &str) -> CliResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        other => Err(CliError::Usage(format!("--split must be train or val, got {other:?}"))),
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let config = TrainConfig {
        variant: a.model,
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        weight_decay: a.weight_decay,
        dropout_rate: a.dropout,
        d_f: a.d_f,
        d_a: a.d_a,
        hidden: a.hidden.clone(),
        window: a.window,
        seed: a.seed,
    };
    let raw = read_dataset(&data_path(&a.corpus)?)?;
    let (records, report) = prepare_records(&raw, config.seed);
    let source = embedding_source(a.corpus.emb_dir.as_deref());
    let corpus = Corpus::for_records(&records, &pdb_dir(&a.corpus)?, FeatureBuilder::builtin(a.window)?, source.clone())?;
    let outcome = training::train(&config, &records, &corpus)?;
    let log = epoch_log_table(&outcome.logs);
    let artifact = ModelArtifact::from_outcome(outcome, config, source, dataset_checksum(&records));
    save_model(&artifact, &a.out)?;
    write_text(&sidecar(&a.out, ".log.tsv"), &log)?;
    let best = artifact.val_metrics.expect("best epoch has a log");
    let _ = writeln!(
        out,
        "records\t{}\nduplicates_removed\t{}\nbest_epoch\t{}\nval_spearman\t{}\nval_mse\t{}\nval_r2\t{}\nartifact\t{}",
        records.len(),
        report.removed.len(),
        artifact.best_epoch,
        best.val_spearman,
        best.val_mse,
        best.val_r2,
        a.out.display()
    );
    Ok(())
}

/// The report `eval` prints, computed through the library.
pub fn eval_report(artifact: &Path, data: &Path, pdb_dir: &Path, emb_dir: Option<&Path>, split: Split) -> crate::Result<String> {
    let artifact = load_model(artifact)?;
    let raw = read_dataset(data)?;
    let (records, _) = prepare_records(&raw, artifact.config.seed);
    let corpus = corpus_for_artifact(&artifact, &records, pdb_dir, emb_dir, None)?;
    Ok(evaluate(&artifact, &records, &corpus, split)?.to_text())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let split = parse_split(&a.split)?;
    let text = eval_report(&a.artifact, &data_path(&a.corpus)?, &pdb_dir(&a.corpus)?, a.corpus.emb_dir.as_deref(), split)?;
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    let _ = out.write_all(text.as_bytes());
    Ok(())
}

fn cmd_scan(a: &ScanArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let artifact = load_model(&a.artifact)?;
    let source = match &a.emb_dir {
        Some(d) => EmbeddingSource::Files(d.clone()),
        None => artifact.embedding.clone(),
    };
    let mut corpus = Corpus::new(FeatureBuilder::builtin(artifact.window())?, source);
    let key = match (&a.pdb, &a.protein) {
        (Some(p), _) => corpus.add_structure(read_pdb_file(p, a.chain)?)?,
        (None, Some(id)) => {
            let dir = a.pdb_dir.as_ref().expect("clap requires --pdb-dir");
            let (pdb, chain) = match ProteinKey::parse_id(id) {
                Some(k) => (k.pdb_id, Some(k.chain)),
                None => (id.to_ascii_uppercase(), a.chain),
            };
            let path = [pdb.clone(), pdb.to_ascii_lowercase()]
                .iter()
                .map(|n| dir.join(format!("{n}.pdb")))
                .find(|p| p.is_file())
                .ok_or_else(|| Error::Linkage(format!("no {pdb}.pdb in {}", dir.display())))?;
            let mut s = read_pdb_file(&path, chain)?;
            s.pdb_id = pdb;
            corpus.add_structure(s)?
        }
        (None, None) => return Err(CliError::Usage("scan needs --pdb FILE or --protein ID with --pdb-dir".into())),
    };
    let matrix = scan(&artifact.model, &corpus, &key)?;
    let json = serde_json::to_string_pretty(&matrix).map_err(|e| Error::State(e.to_string()))?;
    write_text(&a.out, &json)?;
    let _ = writeln!(out, "{}\t{}x{}\t{}", key.id(), matrix.length, matrix.alphabet.len(), a.out.display());
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let raw = read_dataset(&data_path(&a.corpus)?)?;
    let (records, report) = prepare_records(&raw, a.seed);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let counts = substitution_counts(&records)?;
    write_text(&a.out.join("substitutions.tsv"), &counts.to_tsv())?;
    let mut dedup = String::from("split\tremoved\ttotal\tfraction\n");
    for (split, &(removed, total)) in &report.counts {
        let _ = writeln!(dedup, "{split}\t{removed}\t{total}\t{}", removed as f64 / total.max(1) as f64);
    }
    write_text(&a.out.join("dedup.tsv"), &dedup)?;
    let mut summary = String::new();
    for (wt, mt, n) in counts.top(5) {
        let _ = writeln!(summary, "top_substitution\t{wt}>{mt}\t{n}");
    }

    let corpus = Corpus::for_records(
        &records,
        &pdb_dir(&a.corpus)?,
        FeatureBuilder::builtin(a.window)?,
        embedding_source(a.corpus.emb_dir.as_deref()),
    )?;
    let examples = corpus.examples(&records, a.window)?;
    let x: Vec<Vec<f64>> = examples.iter().map(|e| e.input.features.clone()).collect();
    let k_pca = a.components.min(x.len().saturating_sub(1)).min(x.first().map_or(0, Vec::len));
    let pca = pca_fit(&x, k_pca)?;
    let z = pca.transform(&x)?;
    write_text(&a.out.join("pca.tsv"), &pca_report(&pca))?;

    let km = kmeans(&z, a.k, a.seed, 300)?;
    let mut assign = String::from("pdb_id\tchain\tposition\twt_aa\tmut_aa\tddg\tcluster\n");
    for (r, c) in records.iter().zip(&km.assignments) {
        let _ = writeln!(assign, "{}\t{}\t{}\t{}\t{}\t{}\t{c}", r.pdb_id, r.chain, r.position, r.wt_aa, r.mut_aa, r.ddg);
    }
    write_text(&a.out.join("kmeans.tsv"), &kmeans_report(&km))?;
    write_text(&a.out.join("clusters.tsv"), &assign)?;

    let (mut xtr, mut ytr, mut xva, mut yva) = (vec![], vec![], vec![], vec![]);
    for ((r, zi), e) in records.iter().zip(&z).zip(&examples) {
        if r.split == Some(Split::Val) {
            xva.push(zi.clone());
            yva.push(e.target);
        } else {
            xtr.push(zi.clone());
            ytr.push(classify_sign(e.target));
        }
    }
    let forest_text = match forest_fit(&xtr, &ytr, &ForestParams { seed: a.seed, ..ForestParams::default() }) {
        Ok(forest) => {
            let pred: Vec<StabilityLabel> = forest.predict_all(&xva)?;
            // sign_report takes ΔΔG values; map labels to ±1
            let as_ddg: Vec<f64> = pred.iter().map(|l| if *l == StabilityLabel::Destabilizing { 1.0 } else { -1.0 }).collect();
            sign_report(&as_ddg, &yva)?.to_key_values()
        }
        Err(e) => format!("error\t{e}\n"),
    };
    write_text(&a.out.join("forest.tsv"), &forest_text)?;

    let _ = write!(
        out,
        "records\t{}\nduplicates_removed\t{}\n{summary}pca_components\t{}\nkmeans_inertia\t{}\nreports\t{}\n",
        records.len(),
        report.removed.len(),
        pca.components.len(),
        km.inertia,
        a.out.display()
    );
    Ok(())
}

fn cmd_grid(a: &GridArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let variants = a
        .model
        .iter()
        .map(|&n| FusionVariant::from_number(n).ok_or_else(|| CliError::Usage(format!("--model values must be 1-4, got {n}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let base = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };
    let grid = Grid {
        base,
        variants,
        lrs: a.lr.clone(),
        batch_sizes: a.batch.clone(),
        epochs: a.epochs.clone(),
        weight_decays: a.weight_decay.clone(),
        dropout_rates: a.dropout.clone(),
        windows: a.window.clone(),
        d_fs: a.d_f.clone(),
    };
    let raw = read_dataset(&data_path(&a.corpus)?)?;
    let (records, _) = prepare_records(&raw, a.seed);
    let features = FeatureBuilder::builtin(DEFAULT_WINDOW)?;
    let corpus = Corpus::for_records(&records, &pdb_dir(&a.corpus)?, features, embedding_source(a.corpus.emb_dir.as_deref()))?;
    let results = grid_search(&grid, &records, &corpus, a.jobs.max(1))?;
    let table = grid_report(&results);
    write_text(&a.out, &table)?;
    let _ = out.write_all(table.as_bytes());
    Ok(())
}

fn cmd_serve(a: &ServeArgs) -> CliResult<()> {
    let config = ServeConfig {
        artifact: a.artifact.clone(),
        data: data_path(&a.corpus)?,
        pdb_dir: pdb_dir(&a.corpus)?,
        emb_dir: a.corpus.emb_dir.clone(),
        chain: a.chain,
        host: a.host.clone(),
        port: a.port,
    };
    Ok(scan_service::serve(&config)?)
}

fn cmd_embed(a: &EmbedArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let paths: Vec<PathBuf> = match (&a.pdb, &a.pdb_dir) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(dir)) => {
            let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "pdb" || x == "ent"))
                .collect();
            v.sort();
            v
        }
        (None, None) => return Err(CliError::Usage("embed needs --pdb FILE or --pdb-dir DIR".into())),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let table = AminoAcidTable::builtin();
    for p in paths {
        let s = read_pdb_file(&p, a.chain)?;
        let d = backbone_dihedrals(&s);
        let key = ProteinKey::new(&s.pdb_id, s.chain);
        let st = DeskEmbedder::structural(a.dim, a.seed).embed(&s, &d, table)?;
        let sq = DeskEmbedder::sequence(a.seq_dim, a.seed.wrapping_add(1)).embed(&s, &d, table)?;
        write_embeddings(&st, &a.out.join(format!("{}.struct.emb1", key.id())))?;
        write_embeddings(&sq, &a.out.join(format!("{}.seq.emb1", key.id())))?;
        let _ = writeln!(out, "{}\t{}", key.id(), s.len());
    }
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Scan(a) => cmd_scan(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Gridsearch(a) => cmd_grid(a, out),
        Command::Serve(a) => cmd_serve(a),
        Command::Embed(a) => cmd_embed(a, out),
    }
}

/// Runs one invocation (argv includes the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli, &mut stdout.lock())));
    match result {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(CliError::Usage(msg))) => {
            eprintln!("error: {msg}\n\nRun `thermofuse --help` for usage.");
            EXIT_USAGE
        }
        Ok(Err(CliError::Lib(e))) => {
            eprintln!("error: {e}");
            match e {
                Error::State(_) => EXIT_INTERNAL,
                _ => EXIT_DATA,
            }
        }
        Err(_) => {
            eprintln!("error: internal failure (see panic message above)");
            EXIT_INTERNAL
        }
    }
}
