//! Stage orchestration: train → explain → verbalize/query/score → report,
//! with append-only JSONL logs so an interrupted run can be resumed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{load_citation_dataset, make_split, make_synthetic, DatasetSpec, SplitMasks, Synthetic};
use crate::error::{Error, Result};
use crate::explain::{explain, validate_counterfactual, CfKind, CounterfactualResult, ExplainOutcome, ExplainerParams};
use crate::extract::{parse_extraction, ExtractionRecord, ParseError};
use crate::gcn::{accuracy, predict_all, train, GcnModel, TrainConfig, TrainHistory};
use crate::graph::Graph;
use crate::llm::{CompletionBackend, CorruptionSpec, LlmConfig, LlmError, RawExchange};
use crate::metrics::{aggregate, compute_metrics, render_report, score, GroupKey, MetricVector, Scored};
use crate::verbalize::{build_cf_prompt, TEMPLATE_VERSION};
use crate::metrics::GroundTruth;

pub const CHECKPOINT_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.json";
pub const EXPLAIN_LOG: &str = "explanations.jsonl";
pub const RUN_LOG: &str = "runs.jsonl";
pub const REPORT_FILE: &str = "report.md";
pub const HUMAN_EVAL_DIR: &str = "human_eval";

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// `<dir>/<name>.content` and `<dir>/<name>.cites`, plus optional
    /// `.vocab` / `.classes` sidecars.
    Files { dir: PathBuf, name: String },
    Synthetic { generator: Synthetic, seed: u64 },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            DatasetSource::Files { dir, name } => load_citation_dataset(&DatasetSpec::in_dir(dir, name)),
            DatasetSource::Synthetic { generator, seed } => make_synthetic(generator, *seed),
        }
    }

    /// Short label used in report rows.
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Files { name, .. } => name.clone(),
            DatasetSource::Synthetic { generator, .. } => match generator {
                Synthetic::TwoCommunity { .. } => "two_community".into(),
                Synthetic::Barbell { .. } => "barbell".into(),
                Synthetic::RandomEr { .. } => "random_er".into(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerChoice {
    Structure,
    Feature,
    Both,
}

impl ExplainerChoice {
    pub fn kinds(self) -> Vec<CfKind> {
        match self {
            ExplainerChoice::Structure => vec![CfKind::Structure],
            ExplainerChoice::Feature => vec![CfKind::Feature],
            ExplainerChoice::Both => vec![CfKind::Structure, CfKind::Feature],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Overrides the dataset label in reports.
    pub dataset_label: Option<String>,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub explainer: ExplainerChoice,
    pub sample_size: usize,
    pub selection_seed: u64,
    pub train: TrainConfig,
    pub explainer_params: ExplainerParams,
    pub llm: LlmConfig,
    pub backend: BackendKind,
    pub corruption: CorruptionSpec,
    pub mock_seed: u64,
    pub output_dir: PathBuf,
    pub template_version: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic {
                generator: Synthetic::two_community(30, 0.12, 0.06),
                seed: 0,
            },
            dataset_label: None,
            train_fraction: 0.8,
            split_seed: 0,
            explainer: ExplainerChoice::Structure,
            sample_size: 100,
            selection_seed: 0,
            train: TrainConfig::default(),
            explainer_params: ExplainerParams::default(),
            llm: LlmConfig::default(),
            backend: BackendKind::Mock,
            corruption: CorruptionSpec::default(),
            mock_seed: 0,
            output_dir: PathBuf::from("out"),
            template_version: TEMPLATE_VERSION.into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} not in (0, 1)", self.train_fraction)));
        }
        if self.template_version != TEMPLATE_VERSION {
            return Err(Error::Config(format!(
                "template_version pin `{}` does not match this build (`{TEMPLATE_VERSION}`)",
                self.template_version
            )));
        }
        self.explainer_params.validate()?;
        self.llm.validate()?;
        match self.backend {
            BackendKind::Mock => self.corruption.validate()?,
            BackendKind::Live => {
                if self.llm.endpoint_url.as_deref().map_or(true, str::is_empty) {
                    return Err(Error::Config("live backend requires llm.endpoint_url".into()));
                }
                if !self.corruption.fields.is_empty() {
                    return Err(Error::Config("corruption only applies to the mock backend".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset_label.clone().unwrap_or_else(|| self.dataset.label())
    }

    /// Sets every seed (split, training, node selection, mock) at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.split_seed = seed;
        self.train.seed = seed;
        self.selection_seed = seed;
        self.mock_seed = seed;
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }

    /// Applies `key=value` overrides with dotted keys
    /// (`train.epochs=10`). Values are read as JSON, falling back to a
    /// plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, key.trim(), value)?;
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("after overrides: {e}")))
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty segment in `{key}`")));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub checkpoint: PathBuf,
    pub elapsed_ms: u64,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(GcnModel, TrainConfig)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    GcnModel::load_json(&text)
}

/// Trains the oracle and writes the checkpoint and per-epoch history.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let g = cfg.dataset.load()?;
    let masks = make_split(&g, cfg.train_fraction, cfg.split_seed)?;
    let start = Instant::now();
    let (model, history) = train(&g, &masks, &cfg.train)?;
    let elapsed_ms = start.elapsed().as_millis() as u64;
    let (train_accuracy, test_accuracy) = split_accuracy(&model, &g, &masks)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let checkpoint = cfg.path(CHECKPOINT_FILE);
    write_atomic(&checkpoint, model.save_json(&cfg.train)?.as_bytes())?;
    write_atomic(&cfg.path(HISTORY_FILE), serde_json::to_string(&history)?.as_bytes())?;
    Ok(TrainSummary {
        train_accuracy,
        test_accuracy,
        checkpoint,
        elapsed_ms,
    })
}

pub fn split_accuracy(model: &GcnModel, g: &Graph, masks: &SplitMasks) -> Result<(f64, f64)> {
    let preds = predict_all(model, g)?;
    Ok((
        accuracy(&preds, g.labels(), &masks.train_nodes()),
        accuracy(&preds, g.labels(), &masks.test_nodes()),
    ))
}

pub fn load_history(path: &Path) -> Result<TrainHistory> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// One explainer attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRecord {
    pub target: usize,
    pub explainer: CfKind,
    pub outcome: ExplainOutcome,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub sampled: usize,
    /// Correctly classified nodes available for sampling.
    pub eligible: usize,
    pub attempts: usize,
    pub found: usize,
    pub clamped: bool,
}

impl ExplainSummary {
    pub fn found_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.found as f64 / self.attempts as f64
        }
    }
}

/// Seeded sample (without replacement) of correctly classified nodes,
/// returned in ascending order. The second value is the eligible count.
pub fn sample_targets(model: &GcnModel, g: &Graph, sample_size: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    let preds = predict_all(model, g)?;
    let mut eligible: Vec<usize> = (0..g.node_count()).filter(|&v| preds[v] == g.labels()[v]).collect();
    let n = eligible.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(sample_size.min(n));
    eligible.sort_unstable();
    Ok((eligible, n))
}

fn checked_model(cfg: &RunConfig, g: &Graph) -> Result<GcnModel> {
    let (model, _) = load_checkpoint(&cfg.path(CHECKPOINT_FILE))?;
    if model.feature_dim() != g.feature_dim() || model.class_count() != g.class_count() {
        return Err(Error::Checkpoint(format!(
            "checkpoint dims ({}, {}) do not match dataset ({}, {})",
            model.feature_dim(),
            model.class_count(),
            g.feature_dim(),
            g.class_count()
        )));
    }
    Ok(model)
}

fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            let tx = tx.clone();
            let (next, f) = (&next, &f);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                if tx.send((i, f(item))).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut out: Vec<(usize, R)> = rx.into_iter().collect();
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

fn worker_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Samples targets, runs the configured explainer(s) and writes one line
/// per attempt (NotFound included) to the explanation log.
pub fn cmd_explain(cfg: &RunConfig) -> Result<ExplainSummary> {
    cfg.validate()?;
    let g = cfg.dataset.load()?;
    let model = checked_model(cfg, &g)?;
    let (targets, eligible) = sample_targets(&model, &g, cfg.sample_size, cfg.selection_seed)?;
    let clamped = cfg.sample_size > eligible;
    if clamped {
        log::warn!(
            "sample_size {} exceeds the {eligible} correctly classified nodes; using all of them",
            cfg.sample_size
        );
    }
    let jobs: Vec<(usize, CfKind)> = targets
        .iter()
        .flat_map(|&v| cfg.explainer.kinds().into_iter().map(move |k| (v, k)))
        .collect();
    let results = parallel_map(&jobs, worker_count(), |&(v, kind)| {
        let start = Instant::now();
        explain(&model, &g, v, kind, &cfg.explainer_params).map(|outcome| ExplainRecord {
            target: v,
            explainer: kind,
            outcome,
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    });
    let mut text = String::new();
    let mut found = 0;
    for r in results {
        let r = r?;
        found += usize::from(r.outcome.result().is_some());
        text.push_str(&serde_json::to_string(&r)?);
        text.push('\n');
    }
    fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(&cfg.path(EXPLAIN_LOG), text.as_bytes())?;
    Ok(ExplainSummary {
        sampled: targets.len(),
        eligible,
        attempts: jobs.len(),
        found,
        clamped,
    })
}

/// Strict JSONL reader: every line must parse.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::RunLog(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::RunLog(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Parsed response, or why parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Extraction {
    Parsed { record: ExtractionRecord },
    Failed { error: ParseError },
}

impl Extraction {
    pub fn from_raw(raw: &str) -> Self {
        match parse_extraction(raw) {
            Ok(record) => Extraction::Parsed { record },
            Err(error) => Extraction::Failed { error },
        }
    }

    /// Parse failures score all zeros.
    pub fn score(&self, truth: &GroundTruth) -> MetricVector {
        match self {
            Extraction::Parsed { record } => compute_metrics(record, truth),
            Extraction::Failed { .. } => MetricVector::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub llm_latency_ms: u64,
    pub attempts: u32,
}

/// One query of the language model for one counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub target: usize,
    pub explainer: CfKind,
    pub model_name: String,
    pub dataset: String,
    pub result: CounterfactualResult,
    pub ground_truth: GroundTruth,
    pub template_version: String,
    pub prompt_hash: String,
    /// User message, kept for the human-evaluation export.
    pub prompt_text: String,
    pub raw_text: Option<String>,
    pub extraction: Option<Extraction>,
    pub metrics: Option<MetricVector>,
    /// Set when the backend call failed; the record is then unscored.
    pub error: Option<LlmError>,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<RawExchange>,
}

impl RunRecord {
    pub fn key(&self) -> (usize, CfKind) {
        (self.target, self.explainer)
    }

    /// Metrics recomputed from the stored raw text.
    pub fn rescore(&self) -> Option<MetricVector> {
        let raw = self.raw_text.as_ref()?;
        Some(score(&parse_extraction(raw), &self.ground_truth))
    }

    fn scored(&self) -> Scored {
        Scored {
            key: GroupKey {
                model_name: self.model_name.clone(),
                dataset: self.dataset.clone(),
                explainer: self.explainer.as_str().to_string(),
            },
            metrics: self.metrics,
            parse_failed: matches!(self.extraction, Some(Extraction::Failed { .. })),
        }
    }
}

/// Existing run-log records; a torn final line (no trailing newline, not
/// parseable) from an interrupted write is cut off.
fn recover_run_log(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut good_len = 0;
    for (i, chunk) in text.split_inclusive('\n').enumerate() {
        let line = chunk.trim_end_matches('\n');
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => {
                records.push(r);
                good_len += chunk.len();
            }
            Err(_) if !chunk.ends_with('\n') => {
                log::warn!("dropping torn last line of {}", path.display());
                break;
            }
            Err(_) if line.trim().is_empty() => good_len += chunk.len(),
            Err(e) => return Err(Error::RunLog(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    if good_len < text.len() {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(good_len as u64)?;
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub queried: usize,
    pub skipped_existing: usize,
    pub backend_errors: usize,
    pub report: String,
}

fn query_one(
    backend: &dyn CompletionBackend,
    g: &Graph,
    rec: &ExplainRecord,
    result: &CounterfactualResult,
    dataset: &str,
) -> Result<RunRecord> {
    let bundle = build_cf_prompt(g, result)?;
    let mut out = RunRecord {
        target: rec.target,
        explainer: rec.explainer,
        model_name: backend.model_name().to_string(),
        dataset: dataset.to_string(),
        result: result.clone(),
        ground_truth: bundle.ground_truth.clone(),
        template_version: bundle.template_version.clone(),
        prompt_hash: bundle.hash(),
        prompt_text: bundle.user_text.clone(),
        raw_text: None,
        extraction: None,
        metrics: None,
        error: None,
        timings: Timings::default(),
        exchange: None,
    };
    match backend.complete(&bundle) {
        Ok(resp) => {
            let extraction = Extraction::from_raw(&resp.raw_text);
            out.metrics = Some(extraction.score(&bundle.ground_truth));
            out.extraction = Some(extraction);
            out.raw_text = Some(resp.raw_text);
            out.timings.llm_latency_ms = resp.latency_ms;
            out.timings.attempts = resp.attempt_count;
            out.exchange = resp.exchange;
        }
        Err(e) => {
            log::warn!("node {} ({}): {e}", rec.target, rec.explainer.as_str());
            out.error = Some(e);
        }
    }
    Ok(out)
}

/// Queries the backend for every valid counterfactual not already in the
/// run log, appends the records in (node, explainer) order, then writes the
/// report. Train and explain stages run first if their outputs are missing.
pub fn cmd_run(cfg: &RunConfig, backend: &dyn CompletionBackend) -> Result<RunSummary> {
    cfg.validate()?;
    if !cfg.path(CHECKPOINT_FILE).exists() {
        cmd_train(cfg)?;
    }
    if !cfg.path(EXPLAIN_LOG).exists() {
        cmd_explain(cfg)?;
    }
    let g = cfg.dataset.load()?;
    let model = checked_model(cfg, &g)?;
    let mut explained: Vec<ExplainRecord> = read_jsonl(&cfg.path(EXPLAIN_LOG))?;
    explained.sort_by_key(|r| (r.target, r.explainer));

    let log_path = cfg.path(RUN_LOG);
    let existing = recover_run_log(&log_path)?;
    let done: BTreeSet<(usize, CfKind)> = existing.iter().map(RunRecord::key).collect();

    let mut pending = Vec::new();
    let mut skipped_existing = 0;
    for rec in &explained {
        let Some(result) = rec.outcome.result() else { continue };
        if done.contains(&(rec.target, rec.explainer)) {
            skipped_existing += 1;
            continue;
        }
        if !validate_counterfactual(&model, &g, result) {
            log::warn!("node {}: stored counterfactual does not replay; skipped", rec.target);
            continue;
        }
        pending.push((rec, result));
    }

    let dataset = cfg.dataset_name();
    let mut log = OpenOptions::new().create(true).append(true).open(&log_path)?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord>)>();
    let mut queried = 0;
    let mut backend_errors = 0;
    let sink: Result<()> = std::thread::scope(|s| {
        for _ in 0..cfg.llm.max_in_flight.min(pending.len().max(1)) {
            let tx = tx.clone();
            let (next, pending, g, dataset) = (&next, &pending, &g, &dataset);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(rec, result)) = pending.get(i) else { break };
                if tx.send((i, query_one(backend, g, rec, result, dataset))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single sequential sink: buffer out-of-order completions and append
        // strictly in pending order.
        let mut buffer = BTreeMap::new();
        let mut want = 0;
        for (i, r) in rx {
            buffer.insert(i, r);
            while let Some(r) = buffer.remove(&want) {
                let r = r?;
                backend_errors += usize::from(r.error.is_some());
                let mut line = serde_json::to_string(&r)?;
                line.push('\n');
                log.write_all(line.as_bytes())?;
                log.flush()?;
                queried += 1;
                want += 1;
            }
        }
        Ok(())
    });
    sink?;
    log.sync_all()?;

    let report = cmd_report(&log_path, &cfg.output_dir)?;
    Ok(RunSummary {
        queried,
        skipped_existing,
        backend_errors,
        report: report.markdown,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub markdown: String,
    pub exported: Vec<PathBuf>,
}

fn human_eval_text(r: &RunRecord) -> String {
    format!(
        "Node {} | {} counterfactual | model {} | dataset {}\n\n\
         == Graph description given to the model ==\n{}\n\n\
         == Model response ==\n{}\n",
        r.target,
        r.explainer.as_str(),
        r.model_name,
        r.dataset,
        r.prompt_text.trim_end(),
        r.raw_text.as_deref().unwrap_or("").trim_end()
    )
}

/// Renders the aggregate table to `<out_dir>/report.md` and exports every
/// response passing the 5-of-6 rule to `<out_dir>/human_eval/`. Output is a
/// pure function of the log.
pub fn cmd_report(log_path: &Path, out_dir: &Path) -> Result<ReportOutput> {
    let records: Vec<RunRecord> = read_jsonl(log_path)?;
    if records.is_empty() {
        return Err(Error::RunLog(format!("{} holds no records", log_path.display())));
    }
    let scored: Vec<Scored> = records.iter().map(RunRecord::scored).collect();
    let rows = aggregate(&scored)?;
    let mut markdown = String::from("# Explanation understanding report\n\n");
    markdown.push_str(&render_report(&rows));

    let mut failures: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in &records {
        if let Some(Extraction::Failed { error }) = &r.extraction {
            *failures.entry((r.explainer.as_str(), error.kind())).or_default() += 1;
        }
    }
    if !failures.is_empty() {
        markdown.push_str("\nParse failures by kind:\n\n");
        for ((explainer, kind), n) in failures {
            markdown.push_str(&format!("- {explainer} / {kind}: {n}\n"));
        }
    }

    let explain_log = log_path.with_file_name(EXPLAIN_LOG);
    if explain_log.exists() {
        let explained: Vec<ExplainRecord> = read_jsonl(&explain_log)?;
        let mut by_kind: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for e in &explained {
            let entry = by_kind.entry(e.explainer.as_str()).or_default();
            entry.0 += 1;
            entry.1 += usize::from(e.outcome.result().is_some());
        }
        markdown.push_str("\nCounterfactual found rate (NotFound attempts are excluded from the means above):\n\n");
        for (kind, (attempts, found)) in by_kind {
            markdown.push_str(&format!(
                "- {kind}: {found}/{attempts} ({:.3})\n",
                found as f64 / attempts.max(1) as f64
            ));
        }
    }

    fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join(REPORT_FILE), markdown.as_bytes())?;
    let export_dir = out_dir.join(HUMAN_EVAL_DIR);
    if export_dir.exists() {
        fs::remove_dir_all(&export_dir)?;
    }
    fs::create_dir_all(&export_dir)?;
    let mut exported = Vec::new();
    for r in &records {
        if !r.metrics.is_some_and(|m| m.passed_5_of_6) {
            continue;
        }
        let name = format!(
            "{}_{}_{}_node{}.txt",
            sanitize(&r.model_name),
            sanitize(&r.dataset),
            r.explainer.as_str(),
            r.target
        );
        let path = export_dir.join(name);
        fs::write(&path, human_eval_text(r))?;
        exported.push(path);
    }
    Ok(ReportOutput { markdown, exported })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
