//! Runs selected analyses from a [`RunConfig`] and writes tables, raw JSON, plot data and
//! a manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! <analysis>/<scope>.csv        rendered table (or .md)
//! <analysis>/<scope>.json       full-precision values
//! <analysis>/<scope>.plot.json  {figure_id, series: [{name, x, y}]}
//! manifest.json                 sha256 of every file above, written last
//! ```
//!
//! Output bytes depend only on the inputs and the config.

mod analyses;
pub mod config;
pub mod table;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{Analysis, ChunkingConfig, RunConfig, TauVariant};
pub use table::{render_cell, render_table, Cell, Table, TableFormat};

use crate::chunking::{read_chunk_scores, ChunkingError};
use crate::corpus::{load_corpus, load_predictions, Corpus, CorpusError, PredictionOptions, PredictionSet, TaskGroupMap};
use crate::par_map;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("config error: {0}")]
    Config(String),
    #[error("table row {row} has {found} cells, header has {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: CorpusError },
    #[error("{}: {source}", path.display())]
    ChunkScores { path: PathBuf, source: ChunkingError },
    #[error("{analysis} on {scope}: {message}")]
    Analysis {
        analysis: Analysis,
        scope: String,
        message: String,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl ReportError {
    /// `1` for configuration problems, `2` for problems with the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// One output file, path relative to the output directory with `/` separators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

impl FileDigest {
    fn of(path: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        }
    }
}

/// A scope an analysis could not cover, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub analysis: Analysis,
    pub scope: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u64,
    pub analyses: Vec<Analysis>,
    pub threshold: f64,
    pub alpha: f64,
    pub chunk_limit: usize,
    pub claims: usize,
    pub evaluators: Vec<String>,
    /// Inputs by file name.
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub skipped: Vec<Skipped>,
}

/// Loaded inputs of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub corpus: Corpus,
    /// Sorted by evaluator name.
    pub predictions: Vec<PredictionSet>,
    /// `(evaluator, request_id → score)` per chunk-score file.
    pub chunk_scores: Vec<(String, std::collections::BTreeMap<String, f64>)>,
    digests: Vec<FileDigest>,
}

impl Inputs {
    pub fn new(corpus: Corpus, mut predictions: Vec<PredictionSet>) -> Result<Self, ReportError> {
        predictions.sort_by(|a, b| a.evaluator.cmp(&b.evaluator));
        if let Some(w) = predictions.windows(2).find(|w| w[0].evaluator == w[1].evaluator) {
            return Err(ReportError::Config(format!("evaluator {:?} appears in more than one prediction file", w[0].evaluator)));
        }
        Ok(Self {
            corpus,
            predictions,
            chunk_scores: Vec::new(),
            digests: Vec::new(),
        })
    }

    pub fn load(config: &RunConfig) -> Result<Self, ReportError> {
        let mut groups = TaskGroupMap::llm_aggrefact();
        groups.extend(&config.task_groups);
        let mut digests = Vec::new();
        let mut parts = Vec::new();
        for path in &config.corpus {
            digests.push(digest_file(path)?);
            parts.push(load_corpus(path, &groups).map_err(|source| ReportError::Input { path: path.clone(), source })?);
        }
        let corpus = Corpus::merge("corpus", parts).map_err(|source| ReportError::Input {
            path: config.corpus[0].clone(),
            source,
        })?;
        let opts = PredictionOptions {
            threshold: config.threshold,
            strict_coverage: config.strict_coverage,
        };
        let loaded = par_map(&config.predictions, |path| {
            load_predictions(path, &corpus, &opts).map_err(|source| ReportError::Input { path: path.clone(), source })
        });
        let predictions = loaded.into_iter().collect::<Result<Vec<_>, _>>()?;
        for path in &config.predictions {
            digests.push(digest_file(path)?);
        }
        let mut inputs = Inputs::new(corpus, predictions)?;
        for path in &config.chunking.scores {
            digests.push(digest_file(path)?);
            let file = std::fs::File::open(path).map_err(|source| ReportError::Io { path: path.clone(), source })?;
            let (evaluator, scores) = read_chunk_scores(file).map_err(|source| ReportError::ChunkScores { path: path.clone(), source })?;
            inputs.add_chunk_scores(evaluator, scores)?;
        }
        digests.sort_by(|a, b| a.path.cmp(&b.path));
        inputs.digests = digests;
        Ok(inputs)
    }

    /// Registers chunk scores for an evaluator that already has full-document predictions.
    pub fn add_chunk_scores(&mut self, evaluator: String, scores: std::collections::BTreeMap<String, f64>) -> Result<(), ReportError> {
        if !self.predictions.iter().any(|p| p.evaluator == evaluator) {
            return Err(ReportError::Config(format!("chunk scores for {evaluator:?} have no matching full-document predictions")));
        }
        if self.chunk_scores.iter().any(|(e, _)| *e == evaluator) {
            return Err(ReportError::Config(format!("evaluator {evaluator:?} has more than one chunk-score file")));
        }
        self.chunk_scores.push((evaluator, scores));
        self.chunk_scores.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(())
    }
}

fn digest_file(path: &Path) -> Result<FileDigest, ReportError> {
    let bytes = std::fs::read(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(FileDigest::of(name, &bytes))
}

/// Output files and skipped scopes of the configured analyses, sorted by path.
pub fn build(config: &RunConfig, inputs: &Inputs) -> Result<(Vec<Artifact>, Vec<Skipped>), ReportError> {
    let selected: Vec<Analysis> = config.analyses.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let ctx = analyses::Context::new(config, inputs)?;
    let results = par_map(&selected, |&a| ctx.run(a));
    let mut artifacts = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        let out = r?;
        artifacts.extend(out.artifacts);
        skipped.extend(out.skipped);
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    if let Some(w) = artifacts.windows(2).find(|w| w[0].path == w[1].path) {
        return Err(ReportError::Config(format!("two outputs map to {}", w[0].path)));
    }
    Ok((artifacts, skipped))
}

/// Loads inputs, runs every selected analysis, and writes the outputs and manifest.
pub fn run(config: &RunConfig) -> Result<Manifest, ReportError> {
    config.validate()?;
    let inputs = Inputs::load(config)?;
    run_with(config, &inputs)
}

/// Like [`run`] with inputs already in memory.
pub fn run_with(config: &RunConfig, inputs: &Inputs) -> Result<Manifest, ReportError> {
    let (artifacts, skipped) = build(config, inputs)?;
    let root = &config.output_dir;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        let path = root.join(&a.path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
        }
        std::fs::write(&path, &a.bytes).map_err(|source| ReportError::Io { path, source })?;
        outputs.push(FileDigest::of(a.path.clone(), &a.bytes));
    }
    let mut analyses = config.analyses.clone();
    analyses.sort();
    analyses.dedup();
    let manifest = Manifest {
        schema_version: 1,
        analyses,
        threshold: config.threshold,
        alpha: config.alpha,
        chunk_limit: config.chunk_limit,
        claims: inputs.corpus.len(),
        evaluators: inputs.predictions.iter().map(|p| p.evaluator.clone()).collect(),
        inputs: inputs.digests.clone(),
        outputs,
        skipped,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::create_dir_all(root).map_err(|source| ReportError::Io { path: root.clone(), source })?;
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, bytes).map_err(|source| ReportError::Io { path, source })?;
    Ok(manifest)
}

/// File-name-safe form of a dataset or group name. Names that need changes get a short
/// hash suffix so distinct names stay distinct.
pub fn sanitize(name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    let clean = clean.trim_start_matches('.');
    if clean == name && !name.is_empty() {
        clean.to_string()
    } else {
        let hash = hex::encode(&Sha256::digest(name.as_bytes())[..4]);
        format!("{clean}-{hash}")
    }
}
