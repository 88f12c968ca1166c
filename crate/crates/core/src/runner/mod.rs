//! Experiment matrix execution: gold, contexts, model calls, parsing and
//! scoring for every (encounter, task, strategy, model) cell.

pub mod config;
pub mod gold;
mod score;
pub mod store;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{validate_config, validate_config_str, ConfigError, ExperimentConfig, FieldError};
pub use gold::{CellScores, GoldContext, GoldError, Prediction, TaskGold};
pub use score::{baseline_summary, score_records, BaselineSummary};
pub use store::{compact, read_records, CellStatus, Execution, ResultsStore, RunRecord, StoreError};

use crate::abx::rxnorm::{RxNavFixture, RXNAV_BASE_URL};
use crate::abx::{load_mar_csv, MedicationNormalizer};
use crate::contexts::{format_passages, ContextBuilder, ContextStrategy, Retrieval, TemplateSet};
use crate::corpus::{load_corpus, truncate_for_task, Corpus, Hospitalization, TaskKind, CORPUS_SCHEMA_V1};
use crate::dx::{CcsrTable, DiagnosisLinker, DictionaryLinker, HttpLinker, SubprocessLinker};
use crate::hashing::sha256_hex;
use crate::indexer::{
    tokenizer_by_id, ChunkIndex, DeterministicTestProvider, EmbeddingProvider, HttpEmbeddingProvider, IndexCache,
    IndexCacheKey, RetrievalQuery, Tokenizer,
};
use crate::llm::{ChatProvider, ChatRequest, Gateway, LlmError, MockProvider, OpenAiCompatibleProvider, ProviderLimits, ResponseCache};
use crate::synth::{load_truth_dir, OracleProvider};
use config::{EmbeddingConfig, LinkerConfig, ProviderKind};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("setup failed: {0}")]
    Setup(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn setup<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::Setup(format!("{what}: {e}"))
}

/// Where RxNav answers come from during gold construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxNavMode {
    /// Recorded fixture only (the default; no network).
    Replay,
    /// Live RxNav; responses are recorded.
    Live,
}

/// Loaded corpus plus every service the matrix needs.
pub struct Runtime {
    pub cfg: ExperimentConfig,
    pub corpus: Corpus,
    pub corpus_hash: String,
    pub tokenizer: Box<dyn Tokenizer>,
    pub templates: TemplateSet,
    pub embedder: Box<dyn EmbeddingProvider>,
    pub gateway: Gateway,
    pub gold: GoldContext,
    /// Hash of every input that shapes a cell besides its own coordinates.
    pub fingerprint: String,
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    version: u32,
    corpus: &'a str,
    tokenizer: &'a str,
    chunking: crate::indexer::ChunkParams,
    packing: crate::contexts::Packing,
    embedding: String,
    templates: [String; 3],
    sampling: crate::llm::Sampling,
    seed: u64,
    gold_files: BTreeMap<&'static str, String>,
}

fn file_hash(path: &Path) -> Result<String, RunError> {
    fs::read(path).map(|b| sha256_hex(&b)).map_err(setup(&path.display().to_string()))
}

impl Runtime {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, RunError> {
        Self::with_rxnav(cfg, RxNavMode::Replay)
    }

    pub fn with_rxnav(cfg: ExperimentConfig, rxnav: RxNavMode) -> Result<Self, RunError> {
        let raw = fs::read(&cfg.corpus).map_err(setup("corpus"))?;
        let corpus_hash = sha256_hex(&raw);
        let (mut corpus, report) = load_corpus(&cfg.corpus, CORPUS_SCHEMA_V1).map_err(setup("corpus"))?;
        for e in report.violations() {
            log::warn!("corpus line {}: {:?}", e.line, e.issue);
        }
        corpus.hospitalizations.sort_by(|a, b| a.encounter_id.cmp(&b.encounter_id));

        let tokenizer = tokenizer_by_id(&cfg.tokenizer).ok_or_else(|| RunError::Setup(format!("unknown tokenizer {}", cfg.tokenizer)))?;
        let templates = match &cfg.templates_dir {
            Some(d) => TemplateSet::from_dir(d).map_err(RunError::Setup)?,
            None => TemplateSet::default(),
        };
        let embedder: Box<dyn EmbeddingProvider> = match &cfg.embedding {
            EmbeddingConfig::DeterministicTest { dims } => Box::new(DeterministicTestProvider::new(*dims)),
            EmbeddingConfig::Http { id, endpoint, batch } => Box::new(HttpEmbeddingProvider::new(id.clone(), endpoint.clone()).with_batch(*batch)),
        };

        let cache = ResponseCache::open(&cfg.cache_path).map_err(setup("response cache"))?;
        let mut gateway = Gateway::new(cache).with_tokenizer(tokenizer_by_id(&cfg.tokenizer).expect("checked above"));
        for p in &cfg.providers {
            let provider: Arc<dyn ChatProvider> = match &p.kind {
                ProviderKind::Oracle { truth_dir } => {
                    let truth = load_truth_dir(truth_dir).map_err(setup("oracle truth"))?;
                    Arc::new(OracleProvider::with_id(&p.id, truth, templates.clone()))
                }
                ProviderKind::Mock { script } => Arc::new(MockProvider::from_file(p.id.clone(), script).map_err(setup("mock script"))?),
                ProviderKind::Openai { base_url } => Arc::new(OpenAiCompatibleProvider::from_env(p.id.clone(), base_url.clone())),
            };
            gateway.register(
                provider,
                ProviderLimits { max_concurrent: p.max_concurrent, min_interval: Duration::from_millis(p.min_interval_ms) },
            );
            if let Some(w) = p.context_window {
                for m in &p.models {
                    gateway.set_context_window(&p.id, m, w);
                }
            }
        }

        let mut gold_files = BTreeMap::new();
        let (mut normalizer, recorder) = match (rxnav, &cfg.gold.rxnav_fixture) {
            (RxNavMode::Live, _) => {
                gold_files.insert("rxnav", "live".to_string());
                let (n, rec) = GoldContext::live_normalizer(RXNAV_BASE_URL);
                (n, Some(rec))
            }
            (RxNavMode::Replay, Some(path)) => {
                gold_files.insert("rxnav", file_hash(path)?);
                let fixture = RxNavFixture::load(path).map_err(setup("rxnav fixture"))?;
                (GoldContext::replay_normalizer(fixture), None)
            }
            (RxNavMode::Replay, None) => (MedicationNormalizer::new(None), None),
        };
        if let Some(path) = &cfg.gold.medication_overrides {
            gold_files.insert("overrides", file_hash(path)?);
            normalizer.load_overrides_path(path).map_err(setup("medication overrides"))?;
        }
        let mut gold = GoldContext::new(normalizer);
        gold.rxnav_recorder = recorder;
        if let Some(path) = &cfg.gold.ccsr {
            gold_files.insert("ccsr", file_hash(path)?);
            let (table, bad) = CcsrTable::load(path).map_err(setup("CCSR table"))?;
            if !bad.is_empty() {
                log::warn!("{}: {} malformed rows skipped", path.display(), bad.len());
            }
            gold.ccsr = Some(table);
        }
        gold.linker = match &cfg.gold.linker {
            None => None,
            Some(LinkerConfig::Dictionary { path }) => {
                gold_files.insert("linker", file_hash(path)?);
                Some(Box::new(DictionaryLinker::from_path(path).map_err(setup("terminology"))?) as Box<dyn DiagnosisLinker>)
            }
            Some(LinkerConfig::Subprocess { program, args }) => {
                gold_files.insert("linker", format!("subprocess:{program} {}", args.join(" ")));
                Some(Box::new(SubprocessLinker::spawn(program, args).map_err(setup("linker"))?))
            }
            Some(LinkerConfig::Http { url }) => {
                gold_files.insert("linker", format!("http:{url}"));
                Some(Box::new(HttpLinker::new(url)))
            }
        };
        if let Some(path) = &cfg.gold.mar {
            gold_files.insert("mar", file_hash(path)?);
            gold.mar = load_mar_csv(path).map_err(setup("MAR table"))?;
        }
        gold.filter = cfg.filter_model().map(|(p, m)| (p.to_string(), m.to_string()));
        if let Some((p, m)) = &gold.filter {
            gold_files.insert("filter", format!("{p}/{m}"));
        }

        let fingerprint = sha256_hex(
            serde_json::to_string(&Fingerprint {
                version: 1,
                corpus: &corpus_hash,
                tokenizer: &cfg.tokenizer,
                chunking: cfg.chunking,
                packing: cfg.packing,
                embedding: cfg.embedding.fingerprint(),
                templates: TaskKind::ALL.map(|t| sha256_hex(templates.get(t).text().as_bytes())),
                sampling: cfg.sampling,
                seed: cfg.seed,
                gold_files,
            })
            .expect("fingerprint serializes")
            .as_bytes(),
        );

        Ok(Self { cfg, corpus, corpus_hash, tokenizer, templates, embedder, gateway, gold, fingerprint })
    }

    pub fn run_id(&self, encounter: &str, task: TaskKind, strategy: ContextStrategy, provider: &str, model: &str) -> String {
        let material = serde_json::json!({
            "config": self.fingerprint,
            "encounter": encounter,
            "task": task,
            "strategy": strategy.to_string(),
            "provider": provider,
            "model": model,
        });
        sha256_hex(material.to_string().as_bytes())
    }

    /// Every cell of the matrix in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for h in &self.corpus.hospitalizations {
            for &task in &self.cfg.tasks {
                for &strategy in &self.cfg.strategies {
                    for (p, m) in self.cfg.models() {
                        out.push(Cell {
                            run_id: self.run_id(&h.encounter_id, task, strategy, p, m),
                            encounter_id: h.encounter_id.clone(),
                            task,
                            strategy,
                            provider: p.to_string(),
                            model: m.to_string(),
                        });
                    }
                }
            }
        }
        out
    }

    fn index_for(&self, t: &Hospitalization, task: TaskKind) -> Result<ChunkIndex, String> {
        let cache = IndexCache::new(self.cfg.index_dir());
        let provider_id = self.cfg.embedding.fingerprint();
        let key = IndexCacheKey {
            corpus_hash: &self.corpus_hash,
            encounter_id: &t.encounter_id,
            task,
            tokenizer_id: self.tokenizer.id(),
            params: self.cfg.chunking,
            provider_id: &provider_id,
        };
        cache
            .get_or_build(&key, || ChunkIndex::build(t, self.tokenizer.as_ref(), self.cfg.chunking, self.embedder.as_ref()))
            .map_err(|e| e.to_string())
    }

    /// Builds (or loads) every retrieval index the matrix needs.
    pub fn build_indexes(&self) -> Result<usize, RunError> {
        let built = AtomicUsize::new(0);
        let pool = self.pool()?;
        pool.install(|| {
            self.corpus.hospitalizations.par_iter().try_for_each(|h| {
                for &task in &self.cfg.tasks {
                    let t = match truncate_for_task(h, task) {
                        Ok(t) => t,
                        Err(e) => {
                            log::warn!("{e}");
                            continue;
                        }
                    };
                    self.index_for(&t, task).map_err(RunError::Setup)?;
                    built.fetch_add(1, Ordering::Relaxed);
                }
                Ok::<(), RunError>(())
            })
        })?;
        Ok(built.into_inner())
    }

    /// Gold labels for every encounter and configured task.
    pub fn build_gold(&self) -> Vec<(String, TaskKind, Result<TaskGold, GoldError>)> {
        let mut out: Vec<_> = self
            .corpus
            .hospitalizations
            .par_iter()
            .flat_map_iter(|h| self.cfg.tasks.iter().map(move |&t| (h.encounter_id.clone(), t, self.gold.build(h, t, &self.gateway))))
            .collect();
        out.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        out
    }

    fn pool(&self) -> Result<rayon::ThreadPool, RunError> {
        rayon::ThreadPoolBuilder::new().num_threads(self.cfg.concurrency).build().map_err(setup("worker pool"))
    }

    /// Runs every cell not already final in the store, then compacts it.
    pub fn run(&self) -> Result<RunSummary, RunError> {
        let path = self.cfg.results_path();
        let (store, existing) = ResultsStore::open(&path)?;
        let done: HashSet<String> = existing.iter().filter(|r| r.status.is_final()).map(|r| r.run_id.clone()).collect();
        let cells = self.cells();
        let total = cells.len();
        let mut units: BTreeMap<(String, TaskKind), Vec<Cell>> = BTreeMap::new();
        for c in cells.into_iter().filter(|c| !done.contains(&c.run_id)) {
            units.entry((c.encounter_id.clone(), c.task)).or_default().push(c);
        }
        let pending: usize = units.values().map(Vec::len).sum();
        let calls_before = self.gateway.provider_calls();
        let by_id: BTreeMap<&str, &Hospitalization> =
            self.corpus.hospitalizations.iter().map(|h| (h.encounter_id.as_str(), h)).collect();
        let units: Vec<_> = units.into_iter().collect();
        let pool = self.pool()?;
        let results: Vec<Result<Vec<CellStatus>, StoreError>> = pool.install(|| {
            units
                .par_iter()
                .map(|((enc, task), cells)| {
                    let h = by_id[enc.as_str()];
                    let records = self.run_unit(h, *task, cells);
                    let mut statuses = Vec::with_capacity(records.len());
                    for r in records {
                        store.append(&r)?;
                        statuses.push(r.status);
                    }
                    Ok(statuses)
                })
                .collect()
        });
        let mut summary = RunSummary { total_cells: total, skipped: total - pending, ..RunSummary::default() };
        for r in results {
            for s in r? {
                summary.executed += 1;
                match s {
                    CellStatus::Ok => summary.ok += 1,
                    CellStatus::ContextLengthExceeded => summary.context_length_exceeded += 1,
                    CellStatus::ProviderError => summary.provider_errors += 1,
                    CellStatus::Failed => summary.failed += 1,
                }
            }
        }
        drop(store);
        compact(&path)?;
        summary.provider_calls = self.gateway.provider_calls() - calls_before;
        Ok(summary)
    }

    /// All cells of one (encounter, task): shared truncation, gold and index.
    fn run_unit(&self, h: &Hospitalization, task: TaskKind, cells: &[Cell]) -> Vec<RunRecord> {
        let fail_all = |msg: String| cells.iter().map(|c| c.record(CellStatus::Failed, Some(msg.clone()))).collect();
        let t = match truncate_for_task(h, task) {
            Ok(t) => t,
            Err(e) => return fail_all(e.to_string()),
        };
        let gold = match self.gold.build(h, task, &self.gateway) {
            Ok(g) => g,
            Err(e) => return fail_all(format!("gold: {e}")),
        };
        let index = if cells.iter().any(|c| c.strategy.is_rag()) {
            match self.index_for(&t, task) {
                Ok(ix) => Some(ix),
                Err(e) => return fail_all(format!("index: {e}")),
            }
        } else {
            None
        };
        let query = RetrievalQuery::for_task(task);
        let now = t.truncation.as_ref().map(|x| x.cutoff.naive_local());
        let builder = ContextBuilder::new(self.tokenizer.as_ref(), &self.templates).with_packing(self.cfg.packing);
        let template = self.templates.get(task);

        cells
            .iter()
            .map(|c| {
                let started = Instant::now();
                let retrieval = index.as_ref().map(|ix| Retrieval { index: ix, query: &query, provider: self.embedder.as_ref() });
                let bundle = match builder.build_context(&t, task, c.strategy, retrieval, now) {
                    Ok(b) => b,
                    Err(e) => return c.record(CellStatus::Failed, Some(format!("context: {e}"))),
                };
                let prompt = template.render(&format_passages(&bundle.passages), now);
                let mut r = c.record(CellStatus::Ok, None);
                r.prompt_hash = Some(sha256_hex(prompt.as_bytes()));
                r.prompt_tokens = bundle.prompt_tokens;
                r.ehr_tokens = bundle.actual_ehr_tokens;
                let req = ChatRequest::new(&c.provider, &c.model, prompt, self.cfg.sampling);
                match self.gateway.complete(&req) {
                    Ok(resp) => {
                        r.response_hash = Some(sha256_hex(resp.text.as_bytes()));
                        r.execution.latency_ms = resp.latency_ms;
                        r.execution.cached = resp.cached;
                        match self.gold.parse(&gold, &resp.text) {
                            Ok((pred, report)) => {
                                r.parse_issues = report.issues.len();
                                r.parse_flags = report.flagged.len();
                                r.scores = Some(gold::score(&gold, &pred));
                                r.prediction = Some(pred);
                            }
                            Err(e) => {
                                r.status = CellStatus::Failed;
                                r.error = Some(format!("parse: {e}"));
                            }
                        }
                    }
                    Err(LlmError::ContextLengthExceeded { message, .. }) => {
                        let pred = Prediction::empty(task);
                        r.status = CellStatus::ContextLengthExceeded;
                        r.error = Some(message);
                        r.scores = Some(gold::score(&gold, &pred));
                        r.prediction = Some(pred);
                    }
                    Err(e) => {
                        r.status = CellStatus::ProviderError;
                        r.error = Some(e.to_string());
                    }
                }
                r.execution.elapsed_ms = started.elapsed().as_millis() as u64;
                r
            })
            .collect()
    }
}

/// Coordinates of one matrix cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub run_id: String,
    pub encounter_id: String,
    pub task: TaskKind,
    pub strategy: ContextStrategy,
    pub provider: String,
    pub model: String,
}

impl Cell {
    fn record(&self, status: CellStatus, error: Option<String>) -> RunRecord {
        RunRecord {
            run_id: self.run_id.clone(),
            encounter_id: self.encounter_id.clone(),
            task: self.task,
            strategy: self.strategy,
            provider: self.provider.clone(),
            model: self.model.clone(),
            status,
            error,
            prompt_hash: None,
            response_hash: None,
            prompt_tokens: 0,
            ehr_tokens: 0,
            prediction: None,
            parse_issues: 0,
            parse_flags: 0,
            scores: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub total_cells: usize,
    pub skipped: usize,
    pub executed: usize,
    pub ok: usize,
    pub context_length_exceeded: usize,
    pub provider_errors: usize,
    pub failed: usize,
    pub provider_calls: u64,
}

impl RunSummary {
    pub fn has_failures(&self) -> bool {
        self.provider_errors + self.failed > 0
    }
}

/// Validates, loads and runs in one go.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<RunSummary, RunError> {
    Runtime::new(cfg)?.run()
}
