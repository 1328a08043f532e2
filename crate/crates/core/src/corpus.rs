//! Claim/document corpora and evaluator prediction files.
//!
//! Both file types are UTF-8 JSON-lines. A corpus line looks like
//!
//! ```json
//! {"schema_version":1,"claim_id":"c1","dataset":"ExpertQA","system":"gpt4","response_id":"r1",
//!  "claim":"...","document":"...","label":1,"task_group":"LongFormQA"}
//! ```
//!
//! where `system`, `response_id`, `task_group` and `schema_version` may be omitted. A
//! prediction line is `{"evaluator":"...","claim_id":"...","score":0.93}`; hard-label
//! evaluators may write `"label":0|1` instead of `"score"`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::metrics::{binarize, Label};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: field `{field}`: {message}")]
    MalformedRecord {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate claim_id {0:?}")]
    DuplicateClaimId(String),
    #[error("corpus contains no records")]
    EmptyCorpus,
    #[error("prediction for unknown claim_id {0:?}")]
    UnknownClaimId(String),
    #[error("line {line}: score {score} for claim {claim_id:?} is outside [0, 1]")]
    ScoreOutOfRange {
        line: usize,
        claim_id: String,
        score: f64,
    },
    #[error("evaluator {evaluator:?} scores {scored} of {total} claims (strict coverage)")]
    MissingScores {
        evaluator: String,
        scored: usize,
        total: usize,
    },
    #[error("threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(f64),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Task family of the source dataset, used to stratify overlap diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskGroup {
    Summarization,
    #[serde(rename = "LLMVerification")]
    LlmVerification,
    WikiVerification,
    #[serde(rename = "LongFormQA")]
    LongFormQa,
    Data2Text,
    Other,
}

impl TaskGroup {
    pub const ALL: [TaskGroup; 6] = [
        TaskGroup::Summarization,
        TaskGroup::LlmVerification,
        TaskGroup::WikiVerification,
        TaskGroup::LongFormQa,
        TaskGroup::Data2Text,
        TaskGroup::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskGroup::Summarization => "Summarization",
            TaskGroup::LlmVerification => "LLMVerification",
            TaskGroup::WikiVerification => "WikiVerification",
            TaskGroup::LongFormQa => "LongFormQA",
            TaskGroup::Data2Text => "Data2Text",
            TaskGroup::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<TaskGroup> {
        TaskGroup::ALL.into_iter().find(|g| g.as_str() == s)
    }
}

impl fmt::Display for TaskGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dataset name → task group lookup. Unknown datasets resolve to [`TaskGroup::Other`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskGroupMap(BTreeMap<String, TaskGroup>);

impl TaskGroupMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Grouping of the LLM-AggreFact sub-datasets.
    pub fn llm_aggrefact() -> Self {
        use TaskGroup::*;
        let entries: &[(&str, TaskGroup)] = &[
            ("AggreFact-CNN", Summarization),
            ("AggreFact-XSum", Summarization),
            ("TofuEval-MediaS", Summarization),
            ("TofuEval-MediaSum", Summarization),
            ("TofuEval-MeetB", Summarization),
            ("TofuEval-MeetingBank", Summarization),
            ("RAGTruth-CNN/DM", Summarization),
            ("RAGTruth-CNN", Summarization),
            ("RAGTruth-News", Summarization),
            ("RAGTruth-Recent News", Summarization),
            ("Reveal", LlmVerification),
            ("ClaimVerify", LlmVerification),
            ("FactCheck-GPT", LlmVerification),
            ("FactCheckGPT", LlmVerification),
            ("Wice", WikiVerification),
            ("ExpertQA", LongFormQa),
            ("Lfqa", LongFormQa),
            ("LFQA", LongFormQa),
            ("RAGTruth-MARCO", LongFormQa),
            ("RAGTruth-Yelp", Data2Text),
        ];
        Self(entries.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    pub fn insert(&mut self, dataset: impl Into<String>, group: TaskGroup) {
        self.0.insert(dataset.into(), group);
    }

    /// Entries of `other` take precedence.
    pub fn extend(&mut self, other: &TaskGroupMap) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), *v);
        }
    }

    pub fn resolve(&self, dataset: &str) -> TaskGroup {
        self.0.get(dataset).copied().unwrap_or(TaskGroup::Other)
    }
}

/// One (claim, document, human label) example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub dataset: String,
    /// NLG system that generated the claim, when known.
    pub system: Option<String>,
    /// Parent multi-sentence response. Requires `system`.
    pub response_id: Option<String>,
    pub claim: String,
    pub document: String,
    pub label: Label,
    pub task_group: TaskGroup,
}

impl ClaimRecord {
    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        m.insert("claim_id".into(), Value::from(self.claim_id.as_str()));
        m.insert("dataset".into(), Value::from(self.dataset.as_str()));
        if let Some(s) = &self.system {
            m.insert("system".into(), Value::from(s.as_str()));
        }
        if let Some(r) = &self.response_id {
            m.insert("response_id".into(), Value::from(r.as_str()));
        }
        m.insert("claim".into(), Value::from(self.claim.as_str()));
        m.insert("document".into(), Value::from(self.document.as_str()));
        m.insert("label".into(), Value::from(self.label.as_u8()));
        m.insert("task_group".into(), Value::from(self.task_group.as_str()));
        Value::Object(m)
    }
}

/// A validated corpus, sorted by `claim_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    records: Vec<ClaimRecord>,
}

impl Corpus {
    /// Validates `records` and sorts them by claim id.
    pub fn new(name: impl Into<String>, mut records: Vec<ClaimRecord>) -> Result<Self, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        records.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
        if let Some(w) = records.windows(2).find(|w| w[0].claim_id == w[1].claim_id) {
            return Err(CorpusError::DuplicateClaimId(w[0].claim_id.clone()));
        }
        for r in &records {
            let bad = |field: &str, message: &str| CorpusError::MalformedRecord {
                line: 0,
                field: field.to_string(),
                message: format!("claim {:?}: {message}", r.claim_id),
            };
            if r.claim.trim().is_empty() {
                return Err(bad("claim", "empty after trimming"));
            }
            if r.document.trim().is_empty() {
                return Err(bad("document", "empty after trimming"));
            }
            if r.response_id.is_some() && r.system.is_none() {
                return Err(bad("system", "response_id present without system"));
            }
        }
        Ok(Self {
            name: name.into(),
            records,
        })
    }

    pub fn records(&self) -> &[ClaimRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, claim_id: &str) -> Option<&ClaimRecord> {
        self.records
            .binary_search_by(|r| r.claim_id.as_str().cmp(claim_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn contains(&self, claim_id: &str) -> bool {
        self.get(claim_id).is_some()
    }

    /// Distinct dataset names in sorted order.
    pub fn datasets(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.dataset.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Records for which `keep` holds, or `None` if nothing survives.
    pub fn subset(&self, name: impl Into<String>, keep: impl Fn(&ClaimRecord) -> bool) -> Option<Corpus> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        if records.is_empty() {
            None
        } else {
            Some(Corpus {
                name: name.into(),
                records,
            })
        }
    }

    pub fn dataset_slice(&self, dataset: &str) -> Option<Corpus> {
        self.subset(dataset, |r| r.dataset == dataset)
    }

    /// Merges several corpora; claim ids must stay unique.
    pub fn merge(name: impl Into<String>, parts: Vec<Corpus>) -> Result<Corpus, CorpusError> {
        let records = parts.into_iter().flat_map(|c| c.records).collect();
        Corpus::new(name, records)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, &r.to_json())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn malformed(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn req_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<String, CorpusError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(malformed(line, field, "expected a string")),
        None => Err(malformed(line, field, "missing")),
    }
}

fn opt_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<Option<String>, CorpusError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(malformed(line, field, "expected a string or null")),
    }
}

fn parse_label(v: Option<&Value>, line: usize, field: &str) -> Result<Label, CorpusError> {
    match v {
        None => Err(malformed(line, field, "missing")),
        Some(v) => match v.as_u64().or_else(|| v.as_bool().map(u64::from)) {
            Some(0) => Ok(Label::Unattributable),
            Some(1) => Ok(Label::Attributable),
            _ => Err(malformed(line, field, format!("expected 0 or 1, got {v}"))),
        },
    }
}

fn parse_object(text: &str, line: usize) -> Result<Map<String, Value>, CorpusError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(malformed(line, "<record>", "expected a JSON object")),
        Err(e) => Err(malformed(line, "<record>", e.to_string())),
    }
}

fn parse_record(text: &str, line: usize, groups: &TaskGroupMap) -> Result<ClaimRecord, CorpusError> {
    let obj = parse_object(text, line)?;
    if let Some(v) = obj.get("schema_version") {
        if v.as_u64() != Some(SCHEMA_VERSION) {
            return Err(malformed(
                line,
                "schema_version",
                format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
            ));
        }
    }
    let claim_id = req_str(&obj, line, "claim_id")?;
    if claim_id.is_empty() {
        return Err(malformed(line, "claim_id", "empty"));
    }
    let dataset = req_str(&obj, line, "dataset")?;
    let system = opt_str(&obj, line, "system")?;
    let response_id = opt_str(&obj, line, "response_id")?;
    let claim = req_str(&obj, line, "claim")?;
    let document = req_str(&obj, line, "document")?;
    let label = parse_label(obj.get("label"), line, "label")?;
    let task_group = match opt_str(&obj, line, "task_group")? {
        Some(s) => TaskGroup::parse(&s).ok_or_else(|| malformed(line, "task_group", format!("unknown group {s:?}")))?,
        None => groups.resolve(&dataset),
    };
    if claim.trim().is_empty() {
        return Err(malformed(line, "claim", "empty after trimming"));
    }
    if document.trim().is_empty() {
        return Err(malformed(line, "document", "empty after trimming"));
    }
    if response_id.is_some() && system.is_none() {
        return Err(malformed(line, "system", "required when response_id is present"));
    }
    Ok(ClaimRecord {
        claim_id,
        dataset,
        system,
        response_id,
        claim,
        document,
        label,
        task_group,
    })
}

/// Parses a corpus from JSON-lines text. Blank lines are skipped.
pub fn read_corpus<R: Read>(name: &str, input: R, groups: &TaskGroupMap) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, idx + 1, groups)?;
        if !seen.insert(rec.claim_id.clone()) {
            return Err(CorpusError::DuplicateClaimId(rec.claim_id));
        }
        records.push(rec);
    }
    Corpus::new(name, records)
}

pub fn load_corpus(path: &Path, groups: &TaskGroupMap) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_corpus(&name, file, groups)
}

/// One evaluator's scores over (part of) a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub evaluator: String,
    pub scores: BTreeMap<String, f64>,
    pub threshold: f64,
}

impl PredictionSet {
    pub fn new(evaluator: impl Into<String>, scores: BTreeMap<String, f64>, threshold: f64) -> Result<Self, CorpusError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CorpusError::InvalidThreshold(threshold));
        }
        if let Some((id, &s)) = scores.iter().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(CorpusError::ScoreOutOfRange {
                line: 0,
                claim_id: id.clone(),
                score: s,
            });
        }
        Ok(Self {
            evaluator: evaluator.into(),
            scores,
            threshold,
        })
    }

    pub fn score(&self, claim_id: &str) -> Option<f64> {
        self.scores.get(claim_id).copied()
    }

    /// Binarized prediction at this set's threshold.
    pub fn predict(&self, claim_id: &str) -> Option<Label> {
        self.score(claim_id).map(|s| binarize(s, self.threshold))
    }

    /// Same scores, different decision threshold.
    pub fn with_threshold(&self, threshold: f64) -> PredictionSet {
        PredictionSet {
            evaluator: self.evaluator.clone(),
            scores: self.scores.clone(),
            threshold,
        }
    }

    /// Fraction of the corpus' claims that carry a score.
    pub fn coverage(&self, corpus: &Corpus) -> f64 {
        if corpus.is_empty() {
            return 0.0;
        }
        let scored = corpus.records().iter().filter(|r| self.scores.contains_key(&r.claim_id)).count();
        scored as f64 / corpus.len() as f64
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, score) in &self.scores {
            let line = serde_json::json!({"evaluator": self.evaluator, "claim_id": id, "score": score});
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionOptions {
    pub threshold: f64,
    /// Reject files that do not score every corpus claim.
    pub strict_coverage: bool,
}

impl Default for PredictionOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            strict_coverage: false,
        }
    }
}

/// A raw `(evaluator, id, score)` row; `id_field` selects the key holding the id.
pub(crate) fn parse_score_line(text: &str, line: usize, id_field: &str) -> Result<(String, String, f64), CorpusError> {
    let obj = parse_object(text, line)?;
    let evaluator = req_str(&obj, line, "evaluator")?;
    let id = match (obj.get(id_field), obj.get("claim_id")) {
        (Some(Value::String(s)), _) | (None, Some(Value::String(s))) => s.clone(),
        _ => return Err(malformed(line, id_field, "missing or not a string")),
    };
    let score = match obj.get("score") {
        Some(v) => v.as_f64().ok_or_else(|| malformed(line, "score", "expected a number"))?,
        None => parse_label(obj.get("label"), line, "score")?.as_u8() as f64,
    };
    if !(0.0..=1.0).contains(&score) {
        return Err(CorpusError::ScoreOutOfRange {
            line,
            claim_id: id,
            score,
        });
    }
    Ok((evaluator, id, score))
}

/// Parses a prediction file and joins it against `corpus`.
pub fn read_predictions<R: Read>(input: R, corpus: &Corpus, opts: &PredictionOptions) -> Result<PredictionSet, CorpusError> {
    let mut evaluator: Option<String> = None;
    let mut scores = BTreeMap::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (ev, id, score) = parse_score_line(&line, lineno, "claim_id")?;
        match &evaluator {
            None => evaluator = Some(ev),
            Some(e) if *e != ev => {
                return Err(malformed(
                    lineno,
                    "evaluator",
                    format!("file mixes evaluators {e:?} and {ev:?}"),
                ))
            }
            _ => {}
        }
        if !corpus.contains(&id) {
            return Err(CorpusError::UnknownClaimId(id));
        }
        if scores.insert(id.clone(), score).is_some() {
            return Err(CorpusError::DuplicateClaimId(id));
        }
    }
    let evaluator = evaluator.unwrap_or_default();
    if opts.strict_coverage && scores.len() < corpus.len() {
        return Err(CorpusError::MissingScores {
            evaluator,
            scored: scores.len(),
            total: corpus.len(),
        });
    }
    PredictionSet::new(evaluator, scores, opts.threshold)
}

pub fn load_predictions(path: &Path, corpus: &Corpus, opts: &PredictionOptions) -> Result<PredictionSet, CorpusError> {
    let file = std::fs::File::open(path)?;
    let mut set = read_predictions(file, corpus, opts)?;
    if set.evaluator.is_empty() {
        set.evaluator = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(set)
}

/// Claims of one multi-sentence response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseGroup {
    pub dataset: String,
    pub system: String,
    pub response_id: String,
    pub member_claim_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResponseGrouping {
    pub groups: Vec<ResponseGroup>,
    /// Records without a `response_id`.
    pub excluded: usize,
}

/// Groups claims by `(dataset, system, response_id)`; output ordered by that key.
pub fn response_groups(corpus: &Corpus) -> ResponseGrouping {
    let mut map: BTreeMap<(&str, &str, &str), Vec<String>> = BTreeMap::new();
    let mut excluded = 0;
    for r in corpus.records() {
        match (&r.system, &r.response_id) {
            (Some(sys), Some(resp)) => map
                .entry((r.dataset.as_str(), sys.as_str(), resp.as_str()))
                .or_default()
                .push(r.claim_id.clone()),
            _ => excluded += 1,
        }
    }
    let groups = map
        .into_iter()
        .map(|((dataset, system, response_id), member_claim_ids)| ResponseGroup {
            dataset: dataset.to_string(),
            system: system.to_string(),
            response_id: response_id.to_string(),
            member_claim_ids,
        })
        .collect();
    ResponseGrouping { groups, excluded }
}
