//! Canonical data model for questions, opinions, summaries and annotations.
//!
//! Records are stored as line-delimited JSON, one kind per file. Ingestion is
//! lenient at the line level: a malformed or dangling record is rejected with
//! its line number and the offending field, and the rest of the file still
//! loads. Only an unreadable file is a hard error.

use crate::io::{file_sha256, nonblank_lines, write_atomic, write_jsonl};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid corpus manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("content hash mismatch for {path}: manifest has {expected}, file has {actual}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Binary,
    OpenEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub qtype: QuestionType,
    pub topic_label: String,
}

/// Answer to "do you think your opinion differs from that of most people?".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinorityFlag {
    Yes,
    No,
    Unsure,
    /// The question was not posed to this participant.
    #[default]
    Unasked,
}

impl MinorityFlag {
    /// Only an explicit `yes` places an opinion in the minority group.
    pub fn is_minority(self) -> bool {
        self == MinorityFlag::Yes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opinion {
    pub id: String,
    pub question_id: String,
    pub text: String,
    #[serde(default)]
    pub minority_flag: MinorityFlag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_seed: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub id: String,
    pub question_id: String,
    pub model_id: String,
    pub subset_id: String,
    pub resample_index: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Rating,
    Comparison,
}

/// One annotator's judgment of a summary (rating) or a summary pair (comparison),
/// on the raw five-point scale, one value per dimension in
/// representativeness, informativeness, neutrality, policy-approval order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub question_id: String,
    pub opinion_id: String,
    pub summary_a_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_b_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_raw: Option<[u8; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_raw: Option<[u8; 4]>,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_seconds: Option<f64>,
}

/// Wire shape for annotations: numeric fields are parsed wide so that an
/// out-of-range value is reported as such instead of as a type error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationLine {
    annotator_id: String,
    question_id: String,
    opinion_id: String,
    summary_a_id: String,
    #[serde(default)]
    summary_b_id: Option<String>,
    #[serde(default)]
    rating_raw: Option<Vec<i64>>,
    #[serde(default)]
    comparison_raw: Option<Vec<i64>>,
    task_kind: TaskKind,
    #[serde(default)]
    completion_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Questions,
    Opinions,
    Summaries,
    Annotations,
}

impl RecordKind {
    pub const ALL: [RecordKind; 4] = [
        RecordKind::Questions,
        RecordKind::Opinions,
        RecordKind::Summaries,
        RecordKind::Annotations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Questions => "questions",
            RecordKind::Opinions => "opinions",
            RecordKind::Summaries => "summaries",
            RecordKind::Annotations => "annotations",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown record kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Question(Question),
    Opinion(Opinion),
    Summary(Summary),
    Annotation(AnnotationRecord),
}

/// Why a single line was not accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub reason: String,
}

impl Rejection {
    fn field(field: &str, reason: impl Into<String>) -> Self {
        Self {
            line: 0,
            field: Some(field.to_string()),
            reason: reason.into(),
        }
    }

    fn at(mut self, line: usize) -> Self {
        self.line = line;
        self
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: {}: {}", self.line, field, self.reason),
            None => write!(f, "line {}: {}", self.line, self.reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub kind: RecordKind,
    pub source: String,
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.rejections.is_empty()
    }
}

/// Parses one line of `kind` and checks every constraint that needs no other record.
pub fn parse_line(kind: RecordKind, line: &str) -> Result<Record, Rejection> {
    let schema_err = |e: serde_json::Error| Rejection {
        line: 0,
        field: None,
        reason: format!("schema violation: {e}"),
    };
    match kind {
        RecordKind::Questions => {
            let q: Question = serde_json::from_str(line).map_err(schema_err)?;
            require_nonempty("id", &q.id)?;
            require_nonempty("text", &q.text)?;
            Ok(Record::Question(q))
        }
        RecordKind::Opinions => {
            let o: Opinion = serde_json::from_str(line).map_err(schema_err)?;
            require_nonempty("id", &o.id)?;
            require_nonempty("text", &o.text)?;
            if let Some(s) = o.completion_seconds {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Rejection::field(
                        "completion_seconds",
                        "must be a nonnegative number",
                    ));
                }
            }
            Ok(Record::Opinion(o))
        }
        RecordKind::Summaries => {
            let s: Summary = serde_json::from_str(line).map_err(schema_err)?;
            require_nonempty("id", &s.id)?;
            require_nonempty("text", &s.text)?;
            if !(1..=3).contains(&s.resample_index) {
                return Err(Rejection::field(
                    "resample_index",
                    "resample_index out of {1,2,3}",
                ));
            }
            Ok(Record::Summary(s))
        }
        RecordKind::Annotations => {
            let a: AnnotationLine = serde_json::from_str(line).map_err(schema_err)?;
            annotation_from_line(a).map(Record::Annotation)
        }
    }
}

fn require_nonempty(field: &str, value: &str) -> Result<(), Rejection> {
    if value.trim().is_empty() {
        Err(Rejection::field(field, "must be nonempty"))
    } else {
        Ok(())
    }
}

fn five_point(field: &str, label: &str, values: &[i64]) -> Result<[u8; 4], Rejection> {
    if values.len() != 4 {
        return Err(Rejection::field(
            field,
            format!("expected 4 dimension values, found {}", values.len()),
        ));
    }
    let mut out = [0u8; 4];
    for (slot, &v) in out.iter_mut().zip(values) {
        if !(1..=5).contains(&v) {
            return Err(Rejection::field(field, format!("{label} out of [1,5]")));
        }
        *slot = v as u8;
    }
    Ok(out)
}

fn annotation_from_line(a: AnnotationLine) -> Result<AnnotationRecord, Rejection> {
    require_nonempty("annotator_id", &a.annotator_id)?;
    let rating_raw = a
        .rating_raw
        .as_deref()
        .map(|v| five_point("rating_raw", "rating", v))
        .transpose()?;
    let comparison_raw = a
        .comparison_raw
        .as_deref()
        .map(|v| five_point("comparison_raw", "comparison", v))
        .transpose()?;
    match a.task_kind {
        TaskKind::Rating => {
            if rating_raw.is_none() {
                return Err(Rejection::field("rating_raw", "required for a rating task"));
            }
            if comparison_raw.is_some() {
                return Err(Rejection::field(
                    "comparison_raw",
                    "not allowed on a rating task",
                ));
            }
            if a.summary_b_id.is_some() {
                return Err(Rejection::field(
                    "summary_b_id",
                    "not allowed on a rating task",
                ));
            }
        }
        TaskKind::Comparison => {
            if comparison_raw.is_none() {
                return Err(Rejection::field(
                    "comparison_raw",
                    "required for a comparison task",
                ));
            }
            if rating_raw.is_some() {
                return Err(Rejection::field(
                    "rating_raw",
                    "not allowed on a comparison task",
                ));
            }
            match &a.summary_b_id {
                None => {
                    return Err(Rejection::field(
                        "summary_b_id",
                        "required for a comparison task",
                    ))
                }
                Some(b) if *b == a.summary_a_id => {
                    return Err(Rejection::field(
                        "summary_b_id",
                        "must differ from summary_a_id",
                    ))
                }
                Some(_) => {}
            }
        }
    }
    if let Some(s) = a.completion_seconds {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Rejection::field(
                "completion_seconds",
                "must be a nonnegative number",
            ));
        }
    }
    Ok(AnnotationRecord {
        annotator_id: a.annotator_id,
        question_id: a.question_id,
        opinion_id: a.opinion_id,
        summary_a_id: a.summary_a_id,
        summary_b_id: a.summary_b_id,
        rating_raw,
        comparison_raw,
        task_kind: a.task_kind,
        completion_seconds: a.completion_seconds,
    })
}

fn dangling(field: &str, id: &str) -> Rejection {
    Rejection::field(field, format!("dangling reference: `{id}` not found"))
}

/// An in-memory corpus. Read-only once loaded; share it behind `&` or `Arc`.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub questions: Vec<Question>,
    pub opinions: Vec<Opinion>,
    pub summaries: Vec<Summary>,
    pub annotations: Vec<AnnotationRecord>,
    question_index: HashMap<String, usize>,
    opinion_index: HashMap<String, usize>,
    summary_index: HashMap<String, usize>,
    /// subset_id -> question_id, for checking summaries.
    subsets: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.question_index.get(id).map(|&i| &self.questions[i])
    }

    pub fn opinion(&self, id: &str) -> Option<&Opinion> {
        self.opinion_index.get(id).map(|&i| &self.opinions[i])
    }

    pub fn summary(&self, id: &str) -> Option<&Summary> {
        self.summary_index.get(id).map(|&i| &self.summaries[i])
    }

    /// Opinions answering `question_id`, in ingest order.
    pub fn opinions_for<'a>(&'a self, question_id: &'a str) -> impl Iterator<Item = &'a Opinion> {
        self.opinions
            .iter()
            .filter(move |o| o.question_id == question_id)
    }

    /// Makes a subset known so that summaries referencing it can be checked.
    ///
    /// Until at least one subset is registered, a summary's `subset_id` is not
    /// resolved (summaries can then be loaded without the sampling stage).
    pub fn register_subset(&mut self, subset_id: &str, question_id: &str) {
        self.subsets
            .insert(subset_id.to_string(), question_id.to_string());
    }

    /// Adds a record after checking uniqueness and references.
    pub fn insert(&mut self, record: Record) -> Result<(), Rejection> {
        match record {
            Record::Question(q) => {
                if self.question_index.contains_key(&q.id) {
                    return Err(Rejection::field("id", format!("duplicate id `{}`", q.id)));
                }
                self.question_index.insert(q.id.clone(), self.questions.len());
                self.questions.push(q);
            }
            Record::Opinion(o) => {
                if self.opinion_index.contains_key(&o.id) {
                    return Err(Rejection::field("id", format!("duplicate id `{}`", o.id)));
                }
                if self.question(&o.question_id).is_none() {
                    return Err(dangling("question_id", &o.question_id));
                }
                self.opinion_index.insert(o.id.clone(), self.opinions.len());
                self.opinions.push(o);
            }
            Record::Summary(s) => {
                if self.summary_index.contains_key(&s.id) {
                    return Err(Rejection::field("id", format!("duplicate id `{}`", s.id)));
                }
                if self.question(&s.question_id).is_none() {
                    return Err(dangling("question_id", &s.question_id));
                }
                if !self.subsets.is_empty() {
                    match self.subsets.get(&s.subset_id) {
                        None => return Err(dangling("subset_id", &s.subset_id)),
                        Some(q) if *q != s.question_id => {
                            return Err(Rejection::field(
                                "subset_id",
                                format!("subset `{}` belongs to question `{q}`", s.subset_id),
                            ))
                        }
                        Some(_) => {}
                    }
                }
                self.summary_index.insert(s.id.clone(), self.summaries.len());
                self.summaries.push(s);
            }
            Record::Annotation(a) => {
                if self.question(&a.question_id).is_none() {
                    return Err(dangling("question_id", &a.question_id));
                }
                match self.opinion(&a.opinion_id) {
                    None => return Err(dangling("opinion_id", &a.opinion_id)),
                    Some(o) if o.question_id != a.question_id => {
                        return Err(Rejection::field(
                            "opinion_id",
                            format!("opinion `{}` answers a different question", o.id),
                        ))
                    }
                    Some(_) => {}
                }
                let b = a.summary_b_id.as_deref().map(|b| ("summary_b_id", b));
                for (field, id) in std::iter::once(("summary_a_id", a.summary_a_id.as_str())).chain(b) {
                    match self.summary(id) {
                        None => return Err(dangling(field, id)),
                        Some(s) if s.question_id != a.question_id => {
                            return Err(Rejection::field(
                                field,
                                format!("summary `{id}` belongs to a different question"),
                            ))
                        }
                        Some(_) => {}
                    }
                }
                self.annotations.push(a);
            }
        }
        Ok(())
    }

    /// Ingests line-delimited records of `kind` from text.
    pub fn ingest_str(&mut self, text: &str, kind: RecordKind, source: &str) -> IngestReport {
        let mut report = IngestReport {
            kind,
            source: source.to_string(),
            accepted: 0,
            rejections: Vec::new(),
        };
        for (n, line) in nonblank_lines(text) {
            match parse_line(kind, line).and_then(|r| self.insert(r)) {
                Ok(()) => report.accepted += 1,
                Err(rej) => report.rejections.push(rej.at(n)),
            }
        }
        report
    }

    /// Ingests a line-delimited JSON file of `kind`.
    pub fn ingest_file(&mut self, path: &Path, kind: RecordKind) -> Result<IngestReport, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(self.ingest_str(&text, kind, &path.display().to_string()))
    }

    /// Writes all records of `kind` to `path` as line-delimited JSON.
    pub fn write_kind(&self, path: &Path, kind: RecordKind) -> std::io::Result<()> {
        match kind {
            RecordKind::Questions => write_jsonl(path, &self.questions),
            RecordKind::Opinions => write_jsonl(path, &self.opinions),
            RecordKind::Summaries => write_jsonl(path, &self.summaries),
            RecordKind::Annotations => write_jsonl(path, &self.annotations),
        }
    }

    /// Loads every file listed in a corpus manifest after verifying its hash.
    pub fn from_manifest(path: &Path) -> Result<(Self, Vec<IngestReport>), CorpusError> {
        let manifest = CorpusManifest::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.verify(base)?;
        let mut corpus = Corpus::new();
        let mut reports = Vec::new();
        let mut entries = manifest.files.clone();
        entries.sort_by_key(|e| e.kind);
        for entry in entries {
            reports.push(corpus.ingest_file(&base.join(&entry.path), entry.kind)?);
        }
        Ok((corpus, reports))
    }
}

/// Ingests one file into a fresh corpus. For kinds with references, load the
/// referenced kinds first through [`Corpus::ingest_file`] instead.
pub fn ingest_corpus(path: &Path, kind: RecordKind) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut corpus = Corpus::new();
    let report = corpus.ingest_file(path, kind)?;
    Ok((corpus, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: RecordKind,
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

/// Lists the member files of a corpus with their content hashes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub files: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Hashes the given `(kind, relative path)` members under `base`.
    pub fn build(base: &Path, members: &[(RecordKind, &str)]) -> Result<Self, CorpusError> {
        let files = members
            .iter()
            .map(|&(kind, rel)| {
                let full = base.join(rel);
                let sha256 = file_sha256(&full).map_err(|source| CorpusError::Io { path: full, source })?;
                Ok(ManifestEntry {
                    kind,
                    path: rel.to_string(),
                    sha256,
                })
            })
            .collect::<Result<_, CorpusError>>()?;
        Ok(Self { files })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    /// Checks every listed file against its recorded hash.
    pub fn verify(&self, base: &Path) -> Result<(), CorpusError> {
        for entry in &self.files {
            let full = base.join(&entry.path);
            let actual = file_sha256(&full).map_err(|source| CorpusError::Io {
                path: full.clone(),
                source,
            })?;
            if actual != entry.sha256 {
                return Err(CorpusError::HashMismatch {
                    path: full,
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Records that may carry a participant completion time.
pub trait CompletionTimed {
    fn completion_seconds(&self) -> Option<f64>;
}

impl CompletionTimed for Opinion {
    fn completion_seconds(&self) -> Option<f64> {
        self.completion_seconds
    }
}

impl CompletionTimed for AnnotationRecord {
    fn completion_seconds(&self) -> Option<f64> {
        self.completion_seconds
    }
}

/// Splits records into `(kept, dropped)`: a record is dropped only when it has
/// a completion time strictly below `min_seconds`. Order is preserved.
pub fn qc_filter<T: CompletionTimed>(records: Vec<T>, min_seconds: f64) -> (Vec<T>, Vec<T>) {
    records
        .into_iter()
        .partition(|r| !matches!(r.completion_seconds(), Some(s) if s < min_seconds))
}
