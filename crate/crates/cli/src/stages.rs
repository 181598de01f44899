//! The pipeline stages: sample -> summarize -> {pair, judge} -> report.

use crate::config::{slug, JudgeKind, LoadedConfig, RunConfig};
use crate::error::CliError;
use crate::manifest::{self, FileHash, StageManifest, Versions};
use delibench::aggregate::{self, GasOptions, GasReport, TripleScore};
use delibench::chat::{HttpChatBackend, RequestBudget, RetryPolicy};
use delibench::corpus::{
    parse_line, qc_filter, AnnotationRecord, Corpus, IngestReport, Opinion, Record, RecordKind, Rejection, Summary,
};
use delibench::io::{nonblank_lines, sha256_hex, write_atomic, write_jsonl};
use delibench::ringmatch::{balance_table, pair_balance_report, ring_pairs, ComparisonPair};
use delibench::sampler::{build_subsets, OpinionSubset, SubsetPlan};
use delibench::scores::{
    train_instances, Judge, JudgeRequest, LlmJudge, RemoteJudge, ScoreVector, StubJudge,
};
use delibench::stats;
use delibench::summarizer::{render_prompt, ResponseCache, Summarizer};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

pub const SUBSETS: &str = "sample/subsets.jsonl";
pub const QC: &str = "sample/qc.json";
pub const TRAIN: &str = "sample/train_instances.jsonl";
pub const SUMMARIES: &str = "summarize/summaries.jsonl";
pub const PAIRS: &str = "pair/pairs.jsonl";
pub const BALANCE: &str = "pair/balance.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ran(PathBuf),
    UpToDate,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub config_sha256: String,
    pub out: PathBuf,
    pub corpus_hashes: Vec<FileHash>,
}

impl Ctx {
    pub fn new(loaded: LoadedConfig) -> Result<Self, CliError> {
        let cfg = loaded.config;
        let mut corpus_hashes = vec![
            FileHash::of(&cfg.corpus.questions, "questions".into())?,
            FileHash::of(&cfg.corpus.opinions, "opinions".into())?,
        ];
        if let Some(p) = &cfg.corpus.summaries {
            corpus_hashes.push(FileHash::of(p, "summaries".into())?);
        }
        if let Some(p) = &cfg.corpus.annotations {
            corpus_hashes.push(FileHash::of(p, "annotations".into())?);
        }
        Ok(Self {
            out: cfg.out_dir.clone(),
            cfg,
            config_sha256: loaded.config_sha256,
            corpus_hashes,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn judge_variant(&self) -> String {
        slug(&self.cfg.judge.kind)
    }

    fn upstream(&self, stage: &'static str, variant: Option<&str>) -> Result<StageManifest, CliError> {
        manifest::upstream(&self.out, stage, variant, &self.corpus_hashes)
    }

    fn up_to_date(&self, stage: &str, variant: Option<&str>, inputs: &[FileHash]) -> Result<bool, CliError> {
        manifest::up_to_date(&self.out, stage, variant, &self.config_sha256, &self.corpus_hashes, inputs)
    }

    fn finish(
        &self,
        stage: &str,
        variant: Option<&str>,
        started: u128,
        inputs: Vec<FileHash>,
        outputs: &[String],
    ) -> Result<Outcome, CliError> {
        let outputs = outputs
            .iter()
            .map(|rel| FileHash::of(&self.path(rel), rel.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let m = StageManifest {
            stage: stage.to_string(),
            variant: variant.map(str::to_string),
            sequence: 0,
            config_sha256: self.config_sha256.clone(),
            seed: self.cfg.seed,
            versions: Versions::default(),
            started_unix_ms: started,
            finished_unix_ms: manifest::now_ms(),
            corpus: self.corpus_hashes.clone(),
            inputs,
            outputs,
        };
        manifest::append(&self.out, m).map(Outcome::Ran)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.concurrency.max_in_flight)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))
    }
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    write_jsonl(path, records).map_err(|e| CliError::io(path.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::io(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| CliError::io(path.display(), e))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    nonblank_lines(&text)
        .map(|(n, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::Validation(format!("{} line {n}: {e}", path.display())))
        })
        .collect()
}

fn rejection_error(source: &str, rejections: &[Rejection]) -> CliError {
    let shown: Vec<String> = rejections.iter().take(10).map(|r| format!("  {source}: {r}")).collect();
    let more = rejections.len().saturating_sub(shown.len());
    let mut msg = format!("{} invalid record(s)\n{}", rejections.len(), shown.join("\n"));
    if more > 0 {
        msg.push_str(&format!("\n  ... and {more} more"));
    }
    CliError::Validation(msg)
}

fn check_report(report: IngestReport) -> Result<(), CliError> {
    if report.is_clean() {
        Ok(())
    } else {
        Err(rejection_error(&report.source, &report.rejections))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub min_seconds: Option<f64>,
    pub dropped_opinions: Vec<String>,
    pub dropped_annotations: usize,
}

/// Loads the configured corpus, applying the completion-time filter.
pub fn load_corpus(cfg: &RunConfig) -> Result<(Corpus, QcReport), CliError> {
    let c = &cfg.corpus;
    let mut raw = Corpus::new();
    check_report(raw.ingest_file(&c.questions, RecordKind::Questions).map_err(|e| CliError::Validation(e.to_string()))?)?;
    check_report(raw.ingest_file(&c.opinions, RecordKind::Opinions).map_err(|e| CliError::Validation(e.to_string()))?)?;

    let (kept, dropped): (Vec<Opinion>, Vec<Opinion>) = match c.qc_min_seconds {
        Some(t) => qc_filter(raw.opinions.clone(), t),
        None => (raw.opinions.clone(), Vec::new()),
    };
    let mut corpus = Corpus::new();
    for q in raw.questions {
        corpus.insert(Record::Question(q)).expect("questions already checked");
    }
    for o in kept {
        corpus.insert(Record::Opinion(o)).expect("opinions already checked");
    }
    if let Some(p) = &c.summaries {
        check_report(corpus.ingest_file(p, RecordKind::Summaries).map_err(|e| CliError::Validation(e.to_string()))?)?;
    }
    let dropped_ids: BTreeSet<String> = dropped.iter().map(|o| o.id.clone()).collect();
    let mut dropped_annotations = 0;
    if let Some(p) = &c.annotations {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
        let mut parsed: Vec<(usize, AnnotationRecord)> = Vec::new();
        let mut rejections = Vec::new();
        for (n, line) in nonblank_lines(&text) {
            match parse_line(RecordKind::Annotations, line) {
                Ok(Record::Annotation(a)) => parsed.push((n, a)),
                Ok(_) => unreachable!("annotation parser yields annotations"),
                Err(r) => rejections.push(Rejection { line: n, ..r }),
            }
        }
        let before = parsed.len();
        parsed.retain(|(_, a)| !dropped_ids.contains(&a.opinion_id));
        if let Some(t) = c.qc_min_seconds {
            parsed.retain(|(_, a)| a.completion_seconds.is_none_or(|s| s >= t));
        }
        dropped_annotations = before - parsed.len();
        for (n, a) in parsed {
            if let Err(r) = corpus.insert(Record::Annotation(a)) {
                rejections.push(Rejection { line: n, ..r });
            }
        }
        if !rejections.is_empty() {
            return Err(rejection_error(&p.display().to_string(), &rejections));
        }
    }
    Ok((
        corpus,
        QcReport {
            min_seconds: c.qc_min_seconds,
            dropped_opinions: dropped_ids.into_iter().collect(),
            dropped_annotations,
        },
    ))
}

pub fn cmd_sample(ctx: &Ctx) -> Result<Outcome, CliError> {
    if ctx.up_to_date("sample", None, &[])? {
        return Ok(Outcome::UpToDate);
    }
    let started = manifest::now_ms();
    let (corpus, qc) = load_corpus(&ctx.cfg)?;
    let mut subsets = Vec::new();
    for q in &corpus.questions {
        let plan = SubsetPlan {
            question_id: q.id.clone(),
            sizes: ctx.cfg.sampling.sizes.clone(),
            resamples_per_size: ctx.cfg.sampling.resamples,
            seed: ctx.cfg.seed,
        };
        subsets.extend(
            build_subsets(&corpus.opinions, &plan)
                .map_err(|e| CliError::Validation(format!("question `{}`: {e}", q.id)))?,
        );
    }
    write_lines(&ctx.path(SUBSETS), &subsets)?;
    write_json(&ctx.path(QC), &qc)?;
    let mut outputs = vec![SUBSETS.to_string(), QC.to_string()];
    if !corpus.annotations.is_empty() {
        let instances =
            train_instances(&corpus, ctx.cfg.training).map_err(|e| CliError::Validation(e.to_string()))?;
        write_lines(&ctx.path(TRAIN), &instances)?;
        outputs.push(TRAIN.to_string());
    }
    ctx.finish("sample", None, started, Vec::new(), &outputs)
}

fn load_subsets(ctx: &Ctx, corpus: &Corpus) -> Result<Vec<OpinionSubset>, CliError> {
    let subsets: Vec<OpinionSubset> = read_lines(&ctx.path(SUBSETS))?;
    for s in &subsets {
        s.check().map_err(CliError::Validation)?;
        if corpus.question(&s.question_id).is_none() {
            return Err(CliError::Validation(format!("subset `{}`: unknown question", s.subset_id)));
        }
        if let Some(m) = s.member_opinion_ids.iter().find(|m| corpus.opinion(m).is_none()) {
            return Err(CliError::Validation(format!("subset `{}`: unknown opinion `{m}`", s.subset_id)));
        }
    }
    Ok(subsets)
}

pub fn cmd_summarize(ctx: &Ctx) -> Result<Outcome, CliError> {
    let sample = ctx.upstream("sample", None)?;
    let inputs = vec![manifest::input(&sample, SUBSETS)?];
    if ctx.up_to_date("summarize", None, &inputs)? {
        return Ok(Outcome::UpToDate);
    }
    let started = manifest::now_ms();
    let (corpus, _) = load_corpus(&ctx.cfg)?;
    let subsets = load_subsets(ctx, &corpus)?;

    let budget = Arc::new(match ctx.cfg.concurrency.max_requests {
        Some(n) => RequestBudget::limited(n),
        None => RequestBudget::unlimited(),
    });
    let summarizers = ctx
        .cfg
        .summarizers
        .iter()
        .map(|c| Summarizer::from_config(c.clone(), budget.clone()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut jobs = Vec::new();
    for subset in &subsets {
        let question = corpus.question(&subset.question_id).expect("checked");
        let prompt = render_prompt(question, subset, |id| corpus.opinion(id))?;
        for s in &summarizers {
            for k in 1..=ctx.cfg.sampling.resamples {
                jobs.push((prompt.clone(), s, k));
            }
        }
    }
    let results: Vec<_> = ctx.pool()?.install(|| {
        jobs.par_iter()
            .map(|(prompt, s, k)| s.generate(prompt, *k).map(|summary| (summary, s.cache_key(prompt, *k))))
            .collect()
    });
    let mut summaries = Vec::new();
    let mut outputs = BTreeSet::new();
    for ((_, s, _), r) in jobs.iter().zip(results) {
        let (summary, key) = r?;
        let cached = ResponseCache::new(&s.config().cache_dir).path_for(&key);
        if let Ok(rel) = cached.strip_prefix(&ctx.out) {
            outputs.insert(manifest::rel_string(rel));
        }
        summaries.push(summary);
    }
    summaries.sort_by(|a, b| a.id.cmp(&b.id));
    write_lines(&ctx.path(SUMMARIES), &summaries)?;
    outputs.insert(SUMMARIES.to_string());
    ctx.finish("summarize", None, started, inputs, &outputs.into_iter().collect::<Vec<_>>())
}

fn load_summaries(ctx: &Ctx) -> Result<Vec<Summary>, CliError> {
    read_lines(&ctx.path(SUMMARIES))
}

pub fn cmd_pair(ctx: &Ctx) -> Result<(Outcome, String), CliError> {
    let summarize = ctx.upstream("summarize", None)?;
    let inputs = vec![manifest::input(&summarize, SUMMARIES)?];
    if ctx.up_to_date("pair", None, &inputs)? {
        let table = std::fs::read_to_string(ctx.path(BALANCE)).map_err(|e| CliError::io(BALANCE, e))?;
        return Ok((Outcome::UpToDate, table));
    }
    let started = manifest::now_ms();
    let mut by_question: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in load_summaries(ctx)? {
        by_question.entry(s.question_id).or_default().push(s.id);
    }
    let spec = ctx.cfg.pairing.spec(ctx.cfg.seed);
    let mut pairs: Vec<ComparisonPair> = Vec::new();
    for (q, mut ids) in by_question {
        ids.sort();
        pairs.extend(ring_pairs(&q, &ids, &spec).map_err(|e| CliError::Validation(format!("question `{q}`: {e}")))?);
    }
    let table = balance_table(&pair_balance_report(&pairs));
    write_lines(&ctx.path(PAIRS), &pairs)?;
    write_text(&ctx.path(BALANCE), &table)?;
    let outcome = ctx.finish("pair", None, started, inputs, &[PAIRS.to_string(), BALANCE.to_string()])?;
    Ok((outcome, table))
}

pub fn build_judge(cfg: &RunConfig) -> Result<Arc<dyn Judge>, CliError> {
    let j = &cfg.judge;
    let retry = RetryPolicy {
        max_retries: j.max_retries,
        ..RetryPolicy::default()
    };
    let timeout = Duration::from_secs(j.timeout_secs);
    let endpoint = || j.endpoint.clone().unwrap_or_default();
    Ok(match j.parse_kind()? {
        JudgeKind::Stub => Arc::new(StubJudge),
        JudgeKind::Remote => Arc::new(RemoteJudge::new(&endpoint(), timeout, retry)),
        JudgeKind::Llm(model) => {
            let backend = HttpChatBackend::new(&endpoint(), j.api_key_env.as_deref(), timeout)?;
            Arc::new(LlmJudge::new(model, Arc::new(backend), retry))
        }
    })
}

fn judge_dir(ctx: &Ctx) -> String {
    format!("judge/{}", ctx.judge_variant())
}

fn cell_rel(ctx: &Ctx, summary_id: &str) -> String {
    format!("{}/cells/{}.jsonl", judge_dir(ctx), &sha256_hex(summary_id.as_bytes())[..16])
}

/// A finished cell: every subset member scored against one summary.
fn read_cell(path: &Path, summary: &Summary, size: usize) -> Option<Vec<TripleScore>> {
    let cell: Vec<TripleScore> = read_lines(path).ok()?;
    (cell.len() == size && cell.iter().all(|t| t.summary_id == summary.id)).then_some(cell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub opinion_id: String,
    pub summary_id: String,
    pub score: ScoreVector,
}

pub fn cmd_judge(ctx: &Ctx) -> Result<Outcome, CliError> {
    let sample = ctx.upstream("sample", None)?;
    let summarize = ctx.upstream("summarize", None)?;
    let inputs = vec![manifest::input(&sample, SUBSETS)?, manifest::input(&summarize, SUMMARIES)?];
    let variant = ctx.judge_variant();
    if ctx.up_to_date("judge", Some(&variant), &inputs)? {
        return Ok(Outcome::UpToDate);
    }
    let started = manifest::now_ms();
    let (corpus, _) = load_corpus(&ctx.cfg)?;
    let subsets: BTreeMap<String, OpinionSubset> =
        load_subsets(ctx, &corpus)?.into_iter().map(|s| (s.subset_id.clone(), s)).collect();
    let summaries = load_summaries(ctx)?;
    let judge = build_judge(&ctx.cfg)?;

    let score_cell = |summary: &Summary| -> Result<Vec<TripleScore>, CliError> {
        let subset = subsets.get(&summary.subset_id).ok_or_else(|| {
            CliError::Validation(format!("summary `{}`: unknown subset `{}`", summary.id, summary.subset_id))
        })?;
        let path = ctx.path(&cell_rel(ctx, &summary.id));
        if let Some(done) = read_cell(&path, summary, subset.size) {
            return Ok(done);
        }
        let question = corpus.question(&summary.question_id).expect("checked");
        let requests = subset
            .member_opinion_ids
            .iter()
            .map(|id| {
                let o = corpus.opinion(id).expect("checked");
                JudgeRequest::new(&question.text, &o.text, &summary.text)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scores = judge.score_batch(&requests)?;
        let cell: Vec<TripleScore> = subset
            .member_opinion_ids
            .iter()
            .zip(scores)
            .map(|(opinion_id, score)| TripleScore {
                question_id: summary.question_id.clone(),
                subset_id: subset.subset_id.clone(),
                subset_size: subset.size,
                opinion_id: opinion_id.clone(),
                summary_id: summary.id.clone(),
                model_id: summary.model_id.clone(),
                resample_index: summary.resample_index,
                score,
            })
            .collect();
        write_lines(&path, &cell)?;
        Ok(cell)
    };
    let results: Vec<Result<Vec<TripleScore>, CliError>> =
        ctx.pool()?.install(|| summaries.par_iter().map(score_cell).collect());

    let total = results.len();
    let mut triples = Vec::new();
    let mut outputs = Vec::new();
    let mut first_error = None;
    let mut failed = 0;
    for (summary, r) in summaries.iter().zip(results) {
        match r {
            Ok(cell) => {
                triples.extend(cell);
                outputs.push(cell_rel(ctx, &summary.id));
            }
            Err(e) => {
                failed += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        let msg = format!("{failed} of {total} cells failed, {} kept for resume: {e}", total - failed);
        return Err(match e {
            CliError::Transport(_) => CliError::Transport(msg),
            CliError::Validation(_) => CliError::Validation(msg),
            other => other,
        });
    }
    let dir = judge_dir(ctx);
    let scores_rel = format!("{dir}/scores.jsonl");
    write_lines(&ctx.path(&scores_rel), &triples)?;
    outputs.push(scores_rel);

    if !corpus.annotations.is_empty() {
        let keyed = stats::annotated_requests(&corpus)?;
        let requests: Vec<JudgeRequest> = keyed.iter().map(|(_, r)| r.clone()).collect();
        let scores = judge.score_batch(&requests)?;
        let rows: Vec<AlignmentScore> = keyed
            .into_iter()
            .zip(scores)
            .map(|(((opinion_id, summary_id), _), score)| AlignmentScore {
                opinion_id,
                summary_id,
                score,
            })
            .collect();
        let rel = format!("{dir}/alignment.jsonl");
        write_lines(&ctx.path(&rel), &rows)?;
        outputs.push(rel);
    }
    outputs.sort();
    ctx.finish("judge", Some(&variant), started, inputs, &outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelRank {
    spearman: Option<f64>,
    human_means: BTreeMap<String, f64>,
    judge_means: BTreeMap<String, f64>,
    note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Correlations {
    alignment: stats::AlignmentReport,
    model_rank: ModelRank,
}

pub struct ReportSummary {
    pub outcome: Outcome,
    pub leaderboard: String,
}

pub fn cmd_report(ctx: &Ctx) -> Result<ReportSummary, CliError> {
    let variant = ctx.judge_variant();
    let judge = ctx.upstream("judge", Some(&variant))?;
    let dir = judge_dir(ctx);
    let scores_rel = format!("{dir}/scores.jsonl");
    let alignment_rel = format!("{dir}/alignment.jsonl");
    let mut inputs = vec![manifest::input(&judge, &scores_rel)?];
    let has_alignment = judge.outputs.iter().any(|f| f.path == alignment_rel);
    if has_alignment {
        inputs.push(manifest::input(&judge, &alignment_rel)?);
    }
    let report_dir = format!("report/{variant}");
    let leaderboard_rel = format!("{report_dir}/leaderboard.txt");
    if ctx.up_to_date("report", Some(&variant), &inputs)? {
        let leaderboard =
            std::fs::read_to_string(ctx.path(&leaderboard_rel)).map_err(|e| CliError::io(&leaderboard_rel, e))?;
        return Ok(ReportSummary {
            outcome: Outcome::UpToDate,
            leaderboard,
        });
    }
    let started = manifest::now_ms();
    let (corpus, _) = load_corpus(&ctx.cfg)?;
    let triples: Vec<TripleScore> = read_lines(&ctx.path(&scores_rel))?;
    let models: BTreeSet<&str> = triples.iter().map(|t| t.model_id.as_str()).collect();
    let opts = GasOptions {
        expected_resamples: Some(ctx.cfg.sampling.resamples),
        incomplete: ctx.cfg.report.incomplete,
    };
    let agg = |e: aggregate::AggregateError| CliError::Validation(e.to_string());

    let reports: Vec<GasReport> = models
        .iter()
        .map(|m| aggregate::gas(&triples, m, &opts).map_err(agg))
        .collect::<Result<_, _>>()?;
    let prefs = models
        .iter()
        .map(|m| aggregate::relative_preference(&triples, m, &opts).map_err(agg))
        .collect::<Result<Vec<_>, _>>()?;
    let gaps: Vec<serde_json::Value> = models
        .iter()
        .map(|m| {
            match aggregate::minority_gap(&triples, |id| corpus.opinion(id).map(|o| o.minority_flag), m) {
                Ok(g) => serde_json::to_value(g).expect("gap serializes"),
                Err(e) => serde_json::json!({ "model_id": m, "error": e.to_string() }),
            }
        })
        .collect();

    let mut leaderboard = format!("judge: {}\n", ctx.cfg.judge.kind);
    leaderboard.push_str(&aggregate::leaderboard_table(&reports));
    let mut outputs = vec![
        format!("{report_dir}/gas.jsonl"),
        leaderboard_rel.clone(),
        format!("{report_dir}/relative_preference.jsonl"),
        format!("{report_dir}/minority_gap.jsonl"),
    ];
    write_lines(&ctx.path(&outputs[0]), &reports)?;
    write_text(&ctx.path(&outputs[1]), &leaderboard)?;
    write_lines(&ctx.path(&outputs[2]), &prefs)?;
    write_lines(&ctx.path(&outputs[3]), &gaps)?;
    if ctx.cfg.report.heatmap {
        let rel = format!("{report_dir}/heatmap.jsonl");
        write_lines(&ctx.path(&rel), &aggregate::topic_heatmap(&prefs, &corpus.questions))?;
        outputs.push(rel);
    }
    if has_alignment {
        let rows: Vec<AlignmentScore> = read_lines(&ctx.path(&alignment_rel))?;
        let scores: BTreeMap<(String, String), ScoreVector> =
            rows.into_iter().map(|r| ((r.opinion_id, r.summary_id), r.score)).collect();
        let alignment = stats::alignment_from_scores(&corpus, &ctx.cfg.judge.kind, &scores);
        let (human_means, judge_means) = stats::model_means_from_ratings(&corpus, &scores);
        let (spearman, note) = match stats::model_rank_correlation(&human_means, &judge_means) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let rel = format!("{report_dir}/correlations.json");
        write_json(
            &ctx.path(&rel),
            &Correlations {
                alignment,
                model_rank: ModelRank {
                    spearman,
                    human_means,
                    judge_means,
                    note,
                },
            },
        )?;
        outputs.push(rel);
    }
    let outcome = ctx.finish("report", Some(&variant), started, inputs, &outputs)?;
    Ok(ReportSummary { outcome, leaderboard })
}

#[derive(Debug, Default)]
pub struct Validation {
    pub problems: Vec<String>,
    pub stale: Vec<String>,
    pub orphans: Vec<String>,
}

/// Checks the corpus, every stage's latest manifest, and the output directory.
pub fn cmd_validate(ctx: &Ctx) -> Result<Validation, CliError> {
    let mut v = Validation::default();
    if let Err(e) = load_corpus(&ctx.cfg) {
        v.problems.push(e.to_string());
    }
    let mut seen = BTreeSet::new();
    for (_, m) in manifest::all_manifests(&ctx.out)?.into_iter().rev() {
        if !seen.insert((m.stage.clone(), m.variant.clone())) {
            continue;
        }
        if let Err(e) = manifest::verify_outputs(&ctx.out, &m) {
            v.stale.push(e.to_string());
        } else if m.corpus != ctx.corpus_hashes {
            v.stale.push(format!("corpus changed since `{}` ran", m.stage));
        }
    }
    v.orphans = manifest::orphans(&ctx.out)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn fixture() -> RunConfig {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/delibench.toml");
        LoadedConfig::load(&path, &Overrides::default()).unwrap().config
    }

    #[test]
    fn qc_drops_fast_opinions_and_their_annotations() {
        let mut cfg = fixture();
        cfg.corpus.qc_min_seconds = Some(60.0);
        let (corpus, qc) = load_corpus(&cfg).unwrap();
        assert_eq!(qc.dropped_opinions.len(), 3);
        assert_eq!(corpus.opinions.len() + qc.dropped_opinions.len(), 40);
        assert!(corpus.annotations.iter().all(|a| !qc.dropped_opinions.contains(&a.opinion_id)));

        let mut cfg = fixture();
        cfg.corpus.qc_min_seconds = None;
        let (all, qc) = load_corpus(&cfg).unwrap();
        assert_eq!(all.opinions.len(), 40);
        assert_eq!(qc.dropped_annotations, 0);
    }

    #[test]
    fn rejection_list_is_truncated() {
        let rejections: Vec<Rejection> = (1..=13)
            .map(|line| Rejection {
                line,
                field: None,
                reason: "bad".into(),
            })
            .collect();
        let msg = rejection_error("x.jsonl", &rejections).to_string();
        assert!(msg.starts_with("13 invalid record(s)"));
        assert_eq!(msg.matches("x.jsonl").count(), 10);
        assert!(msg.ends_with("... and 3 more"));
    }

    #[test]
    fn read_lines_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        std::fs::write(&path, "1\n\n2\nnope\n").unwrap();
        let err = read_lines::<u32>(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 4"), "{err}");
        assert_eq!(read_lines::<u32>(&dir.path().join("gone")).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn partial_cells_are_not_reused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cell.jsonl");
        let summary = Summary {
            id: "q1:n2:m:r1".into(),
            question_id: "q1".into(),
            model_id: "m".into(),
            subset_id: "q1:n2".into(),
            resample_index: 1,
            text: "s".into(),
        };
        let triple = |o: &str| TripleScore {
            question_id: "q1".into(),
            subset_id: "q1:n2".into(),
            subset_size: 2,
            opinion_id: o.into(),
            summary_id: summary.id.clone(),
            model_id: "m".into(),
            resample_index: 1,
            score: ScoreVector::new(0.5, 0.5, 0.5, 0.5).unwrap(),
        };
        write_lines(&path, &[triple("a")]).unwrap();
        assert!(read_cell(&path, &summary, 2).is_none());
        write_lines(&path, &[triple("a"), triple("b")]).unwrap();
        assert_eq!(read_cell(&path, &summary, 2).unwrap().len(), 2);
    }
}
