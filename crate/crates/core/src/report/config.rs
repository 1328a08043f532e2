//! Run configuration, read from TOML.
//!
//! ```toml
//! corpus = ["data/aggrefact.jsonl"]
//! predictions = ["preds/minicheck.jsonl", "preds/bespoke.jsonl"]
//! output_dir = "out"
//! analyses = ["metrics", "quantify"]
//! threshold = 0.5
//!
//! [task_groups]
//! MyDataset = "LongFormQA"
//!
//! [chunking]
//! scores = ["preds/bespoke.chunks.jsonl"]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::fmt;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::table::TableFormat;
use super::ReportError;
use crate::chunking::DEFAULT_CHUNK_LIMIT;
use crate::corpus::TaskGroupMap;
use crate::quantify::Level;
use crate::rank::Variance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Metrics,
    Consistency,
    Quantify,
    Calibrate,
    Rank,
    RougeBins,
    Chunking,
}

impl Analysis {
    pub const ALL: [Analysis; 7] = [
        Analysis::Metrics,
        Analysis::Consistency,
        Analysis::Quantify,
        Analysis::Calibrate,
        Analysis::Rank,
        Analysis::RougeBins,
        Analysis::Chunking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Metrics => "metrics",
            Analysis::Consistency => "consistency",
            Analysis::Quantify => "quantify",
            Analysis::Calibrate => "calibrate",
            Analysis::Rank => "rank",
            Analysis::RougeBins => "rouge-bins",
            Analysis::Chunking => "chunking",
        }
    }

    pub fn parse(s: &str) -> Option<Analysis> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauVariant {
    #[default]
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingConfig {
    /// Chunk-score files, one evaluator each, keyed by chunk request id.
    #[serde(default)]
    pub scores: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Vec<PathBuf>,
    #[serde(default)]
    pub predictions: Vec<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "all_analyses")]
    pub analyses: Vec<Analysis>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_chunk_limit")]
    pub chunk_limit: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub strict_coverage: bool,
    #[serde(default)]
    pub table_format: TableFormat,
    #[serde(default)]
    pub variance: Variance,
    #[serde(default)]
    pub tau: TauVariant,
    #[serde(default = "default_rank_level")]
    pub rank_level: Level,
    /// Plot-data JSON next to each table.
    #[serde(default = "yes")]
    pub plots: bool,
    /// Dataset → task group overrides on top of the built-in table.
    #[serde(default)]
    pub task_groups: TaskGroupMap,
    #[serde(default)]
    pub chunking: ChunkingConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("audit-out")
}
fn all_analyses() -> Vec<Analysis> {
    Analysis::ALL.to_vec()
}
fn default_threshold() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    0.05
}
fn default_chunk_limit() -> usize {
    DEFAULT_CHUNK_LIMIT
}
fn default_bins() -> usize {
    5
}
fn default_rank_level() -> Level {
    Level::Claim
}
fn yes() -> bool {
    true
}

impl RunConfig {
    /// A config with defaults for everything but the inputs.
    pub fn new(corpus: Vec<PathBuf>, predictions: Vec<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus,
            predictions,
            output_dir: output_dir.into(),
            analyses: all_analyses(),
            threshold: default_threshold(),
            alpha: default_alpha(),
            chunk_limit: default_chunk_limit(),
            bins: default_bins(),
            strict_coverage: false,
            table_format: TableFormat::Csv,
            variance: Variance::Pooled,
            tau: TauVariant::A,
            rank_level: Level::Claim,
            plots: true,
            task_groups: TaskGroupMap::new(),
            chunking: ChunkingConfig::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ReportError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ReportError::Config(e.message().to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new("")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.iter_mut().for_each(fix);
        self.predictions.iter_mut().for_each(fix);
        self.chunking.scores.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    pub fn chunk_limit(&self) -> Result<NonZeroUsize, ReportError> {
        NonZeroUsize::new(self.chunk_limit).ok_or_else(|| ReportError::Config("chunk_limit must be at least 1".into()))
    }

    /// Checks values and that every input file exists.
    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: String| Err(ReportError::Config(m));
        if self.analyses.is_empty() {
            return bad("no analyses selected".into());
        }
        if self.corpus.is_empty() {
            return bad("no corpus files given".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} is outside (0, 1)", self.threshold));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} is outside (0, 1)", self.alpha));
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        self.chunk_limit()?;
        for p in self.corpus.iter().chain(&self.predictions).chain(&self.chunking.scores) {
            if !p.is_file() {
                return bad(format!("input file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}
