//! Experiment configuration: TOML in, fully resolved paths and typed values
//! out, with every violation reported at once.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use toml::{Table, Value};

use crate::contexts::{ContextStrategy, Packing};
use crate::corpus::TaskKind;
use crate::indexer::{tokenizer_by_id, ChunkParams, RULE_TOKENIZER_ID};
use crate::llm::Sampling;

/// One problem with one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is invalid:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    ConfigInvalid(Vec<FieldError>),
}

impl ConfigError {
    pub fn violations(&self) -> &[FieldError] {
        match self {
            ConfigError::ConfigInvalid(v) => v,
            ConfigError::Unreadable { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingConfig {
    DeterministicTest { dims: usize },
    Http { id: String, endpoint: String, batch: usize },
}

impl EmbeddingConfig {
    /// Identifier used in index cache keys and run ids.
    pub fn fingerprint(&self) -> String {
        match self {
            EmbeddingConfig::DeterministicTest { dims } => format!("deterministic-test:{dims}"),
            EmbeddingConfig::Http { id, .. } => id.clone(),
        }
    }
}

/// Dimensions the deterministic provider defaults to. Narrower projections
/// collide often enough to blur retrieval on the synthetic corpus.
pub const DEFAULT_TEST_DIMS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderKind {
    Oracle { truth_dir: PathBuf },
    Mock { script: PathBuf },
    Openai { base_url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderConfig {
    pub id: String,
    pub kind: ProviderKind,
    pub models: Vec<String>,
    pub max_concurrent: usize,
    pub min_interval_ms: u64,
    pub context_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkerConfig {
    Dictionary { path: PathBuf },
    Subprocess { program: String, args: Vec<String> },
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GoldConfig {
    pub ccsr: Option<PathBuf>,
    pub linker: Option<LinkerConfig>,
    pub rxnav_fixture: Option<PathBuf>,
    pub medication_overrides: Option<PathBuf>,
    pub mar: Option<PathBuf>,
    pub filter_provider: Option<String>,
    pub filter_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    pub tasks: Vec<TaskKind>,
    pub strategies: Vec<ContextStrategy>,
    pub tokenizer: String,
    pub chunking: ChunkParams,
    pub packing: Packing,
    pub embedding: EmbeddingConfig,
    pub providers: Vec<ProviderConfig>,
    pub gold: GoldConfig,
    pub templates_dir: Option<PathBuf>,
    pub seed: u64,
    pub concurrency: usize,
    pub sampling: Sampling,
    pub cache_path: PathBuf,
}

impl ExperimentConfig {
    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.jsonl")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.output_dir.join("index")
    }

    /// Every (provider, model) pair in configuration order.
    pub fn models(&self) -> Vec<(&str, &str)> {
        self.providers.iter().flat_map(|p| p.models.iter().map(move |m| (p.id.as_str(), m.as_str()))).collect()
    }

    /// Provider and model used to filter billing codes.
    pub fn filter_model(&self) -> Option<(&str, &str)> {
        let p = match &self.gold.filter_provider {
            Some(id) => self.providers.iter().find(|p| &p.id == id)?,
            None => self.providers.first()?,
        };
        let m = self.gold.filter_model.as_deref().or(p.models.first().map(String::as_str))?;
        Some((p.id.as_str(), m))
    }
}

/// Reads and validates `path`. Relative paths inside resolve against the
/// config file's directory.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Unreadable { path: path.display().to_string(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate_config_str(&text, &base)
}

pub fn validate_config_str(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let table: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            return Err(ConfigError::ConfigInvalid(vec![FieldError { field: "<file>".into(), message: e.to_string() }]))
        }
    };
    let mut v = Validator { base: base.to_path_buf(), errors: Vec::new() };
    let cfg = v.resolve(&table);
    if v.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::ConfigInvalid(v.errors))
    }
}

struct Validator {
    base: PathBuf,
    errors: Vec<FieldError>,
}

const TOP_KEYS: &[&str] = &[
    "corpus", "output_dir", "tasks", "strategies", "tokenizer", "chunking", "packing", "embedding", "providers",
    "gold", "templates_dir", "seed", "concurrency", "sampling", "cache_path",
];

impl Validator {
    fn err(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError { field: field.into(), message: message.into() });
    }

    fn unknown_keys(&mut self, t: &Table, prefix: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(format!("{prefix}{k}"), "unknown field");
            }
        }
    }

    fn string(&mut self, t: &Table, key: &str, field: &str) -> Option<String> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                self.err(field, format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn uint(&mut self, t: &Table, key: &str, field: &str) -> Option<u64> {
        match t.get(key) {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(other) => {
                self.err(field, format!("expected a non-negative integer, got {other}"));
                None
            }
        }
    }

    fn strings(&mut self, t: &Table, key: &str, field: &str) -> Option<Vec<String>> {
        match t.get(key) {
            None => None,
            Some(Value::Array(a)) => {
                let mut out = Vec::new();
                for (i, x) in a.iter().enumerate() {
                    match x.as_str() {
                        Some(s) => out.push(s.to_string()),
                        None => self.err(format!("{field}[{i}]"), "expected a string"),
                    }
                }
                Some(out)
            }
            Some(other) => {
                self.err(field, format!("expected an array of strings, got {}", other.type_str()));
                None
            }
        }
    }

    fn table<'t>(&mut self, t: &'t Table, key: &str) -> Option<&'t Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(x)) => Some(x),
            Some(other) => {
                self.err(key, format!("expected a table, got {}", other.type_str()));
                None
            }
        }
    }

    fn path(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    fn existing_file(&mut self, t: &Table, key: &str, field: &str) -> Option<PathBuf> {
        let raw = self.string(t, key, field)?;
        let p = self.path(&raw);
        if !p.exists() {
            self.err(field, format!("{} does not exist", p.display()));
        }
        Some(p)
    }

    fn resolve(&mut self, t: &Table) -> ExperimentConfig {
        self.unknown_keys(t, "", TOP_KEYS);

        let corpus = match self.existing_file(t, "corpus", "corpus") {
            Some(p) => p,
            None => {
                if !t.contains_key("corpus") {
                    self.err("corpus", "required");
                }
                PathBuf::new()
            }
        };
        let output_dir = self.string(t, "output_dir", "output_dir").map(|s| self.path(&s)).unwrap_or_else(|| self.path("results"));

        let tasks = self.tasks(t);
        let strategies = self.strategies(t);

        let tokenizer = self.string(t, "tokenizer", "tokenizer").unwrap_or_else(|| RULE_TOKENIZER_ID.to_string());
        if tokenizer_by_id(&tokenizer).is_none() {
            self.err("tokenizer", format!("unknown tokenizer `{tokenizer}`"));
        }

        let chunking = self.chunking(t);
        let packing = match self.string(t, "packing", "packing").as_deref() {
            None | Some("partial") => Packing::Partial,
            Some("whole_notes") => Packing::WholeNotes,
            Some(other) => {
                self.err("packing", format!("unknown packing `{other}` (partial | whole_notes)"));
                Packing::Partial
            }
        };
        let embedding = self.embedding(t);
        let providers = self.providers(t);
        let gold = self.gold(t, &tasks, &providers);
        let templates_dir = self.string(t, "templates_dir", "templates_dir").map(|s| self.path(&s));
        if let Some(d) = &templates_dir {
            if !d.is_dir() {
                self.err("templates_dir", format!("{} is not a directory", d.display()));
            }
        }
        let seed = self.uint(t, "seed", "seed").unwrap_or(0);
        let concurrency = self.uint(t, "concurrency", "concurrency").unwrap_or(4) as usize;
        if concurrency == 0 {
            self.err("concurrency", "must be at least 1");
        }
        let sampling = self.sampling(t);
        let cache_path = self.string(t, "cache_path", "cache_path").map(|s| self.path(&s)).unwrap_or_else(|| output_dir.join("llm_cache.jsonl"));

        ExperimentConfig {
            corpus,
            output_dir,
            tasks,
            strategies,
            tokenizer,
            chunking,
            packing,
            embedding,
            providers,
            gold,
            templates_dir,
            seed,
            concurrency: concurrency.max(1),
            sampling,
            cache_path,
        }
    }

    fn tasks(&mut self, t: &Table) -> Vec<TaskKind> {
        let raw = self.strings(t, "tasks", "tasks").unwrap_or_else(|| TaskKind::ALL.iter().map(|k| k.as_str().to_string()).collect());
        let mut out = Vec::new();
        for (i, s) in raw.iter().enumerate() {
            match TaskKind::from_str(s) {
                Ok(k) if !out.contains(&k) => out.push(k),
                Ok(_) => self.err(format!("tasks[{i}]"), format!("duplicate task `{s}`")),
                Err(_) => self.err(format!("tasks[{i}]"), format!("unknown task `{s}` (imaging | antibiotics | diagnosis)")),
            }
        }
        if out.is_empty() && !raw.iter().any(|s| TaskKind::from_str(s).is_err()) {
            self.err("tasks", "at least one task is required");
        }
        out
    }

    fn strategies(&mut self, t: &Table) -> Vec<ContextStrategy> {
        let Some(raw) = self.strings(t, "strategies", "strategies") else {
            self.err("strategies", "required");
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, s) in raw.iter().enumerate() {
            match ContextStrategy::from_str(s) {
                Ok(k) if !out.contains(&k) => out.push(k),
                Ok(_) => self.err(format!("strategies[{i}]"), format!("duplicate strategy `{s}`")),
                Err(e) => self.err(format!("strategies[{i}]"), e),
            }
        }
        if raw.is_empty() {
            self.err("strategies", "at least one strategy is required");
        }
        out
    }

    fn chunking(&mut self, t: &Table) -> ChunkParams {
        let Some(c) = self.table(t, "chunking") else { return ChunkParams::default() };
        self.unknown_keys(c, "chunking.", &["window", "stride"]);
        let d = ChunkParams::default();
        let window = self.uint(c, "window", "chunking.window").map_or(d.window, |x| x as usize);
        let stride = self.uint(c, "stride", "chunking.stride").map_or(d.stride, |x| x as usize);
        ChunkParams::new(window, stride).unwrap_or_else(|e| {
            self.err("chunking", e);
            d
        })
    }

    fn embedding(&mut self, t: &Table) -> EmbeddingConfig {
        let default = EmbeddingConfig::DeterministicTest { dims: DEFAULT_TEST_DIMS };
        let Some(e) = self.table(t, "embedding") else { return default };
        self.unknown_keys(e, "embedding.", &["provider", "dims", "endpoint", "id", "batch"]);
        match self.string(e, "provider", "embedding.provider").as_deref() {
            None | Some("deterministic-test") => {
                let dims = self.uint(e, "dims", "embedding.dims").map_or(DEFAULT_TEST_DIMS, |d| d as usize);
                if dims == 0 {
                    self.err("embedding.dims", "must be positive");
                }
                EmbeddingConfig::DeterministicTest { dims: dims.max(1) }
            }
            Some("http") => {
                let endpoint = self.string(e, "endpoint", "embedding.endpoint").unwrap_or_else(|| {
                    self.err("embedding.endpoint", "required for the http provider");
                    String::new()
                });
                let id = self.string(e, "id", "embedding.id").unwrap_or_else(|| format!("http:{endpoint}"));
                let batch = self.uint(e, "batch", "embedding.batch").unwrap_or(32).max(1) as usize;
                EmbeddingConfig::Http { id, endpoint, batch }
            }
            Some(other) => {
                self.err("embedding.provider", format!("unknown embedding provider `{other}` (deterministic-test | http)"));
                default
            }
        }
    }

    fn providers(&mut self, t: &Table) -> Vec<ProviderConfig> {
        let list = match t.get("providers") {
            Some(Value::Array(a)) => a.clone(),
            Some(other) => {
                self.err("providers", format!("expected an array of tables, got {}", other.type_str()));
                return Vec::new();
            }
            None => Vec::new(),
        };
        if list.is_empty() {
            self.err("providers", "at least one provider is required");
        }
        let mut out: Vec<ProviderConfig> = Vec::new();
        for (i, item) in list.iter().enumerate() {
            let f = |k: &str| format!("providers[{i}].{k}");
            let Some(p) = item.as_table() else {
                self.err(format!("providers[{i}]"), "expected a table");
                continue;
            };
            self.unknown_keys(p, &f(""), &["id", "kind", "models", "truth_dir", "script", "base_url", "max_concurrent", "min_interval_ms", "context_window"]);
            let id = self.string(p, "id", &f("id")).unwrap_or_default();
            if id.is_empty() {
                self.err(f("id"), "required");
            } else if out.iter().any(|o| o.id == id) {
                self.err(f("id"), format!("duplicate provider id `{id}`"));
            }
            let kind = match self.string(p, "kind", &f("kind")).as_deref() {
                Some("oracle") => {
                    let dir = self.existing_file(p, "truth_dir", &f("truth_dir"));
                    if dir.is_none() {
                        self.err(f("truth_dir"), "required for oracle providers");
                    }
                    ProviderKind::Oracle { truth_dir: dir.unwrap_or_default() }
                }
                Some("mock") => {
                    let script = self.existing_file(p, "script", &f("script"));
                    if script.is_none() {
                        self.err(f("script"), "required for mock providers");
                    }
                    ProviderKind::Mock { script: script.unwrap_or_default() }
                }
                Some("openai") => {
                    let base_url = self.string(p, "base_url", &f("base_url")).unwrap_or_else(|| {
                        self.err(f("base_url"), "required for openai providers");
                        String::new()
                    });
                    ProviderKind::Openai { base_url }
                }
                Some(other) => {
                    self.err(f("kind"), format!("unknown provider kind `{other}` (oracle | mock | openai)"));
                    continue;
                }
                None => {
                    self.err(f("kind"), "required");
                    continue;
                }
            };
            let models = self.strings(p, "models", &f("models")).unwrap_or_else(|| vec![id.clone()]);
            if models.is_empty() {
                self.err(f("models"), "at least one model is required");
            }
            let max_concurrent = self.uint(p, "max_concurrent", &f("max_concurrent")).unwrap_or(8).max(1) as usize;
            let min_interval_ms = self.uint(p, "min_interval_ms", &f("min_interval_ms")).unwrap_or(0);
            let context_window = self.uint(p, "context_window", &f("context_window")).map(|x| x as usize);
            out.push(ProviderConfig { id, kind, models, max_concurrent, min_interval_ms, context_window });
        }
        out
    }

    fn gold(&mut self, t: &Table, tasks: &[TaskKind], providers: &[ProviderConfig]) -> GoldConfig {
        let empty = Table::new();
        let g = self.table(t, "gold").unwrap_or(&empty);
        self.unknown_keys(
            g,
            "gold.",
            &["ccsr", "terminology", "linker", "linker_program", "linker_args", "linker_url", "rxnav_fixture", "medication_overrides", "mar", "filter_provider", "filter_model"],
        );
        let mut out = GoldConfig {
            ccsr: self.existing_file(g, "ccsr", "gold.ccsr"),
            rxnav_fixture: self.existing_file(g, "rxnav_fixture", "gold.rxnav_fixture"),
            medication_overrides: self.existing_file(g, "medication_overrides", "gold.medication_overrides"),
            mar: self.existing_file(g, "mar", "gold.mar"),
            filter_provider: self.string(g, "filter_provider", "gold.filter_provider"),
            filter_model: self.string(g, "filter_model", "gold.filter_model"),
            linker: None,
        };
        out.linker = match self.string(g, "linker", "gold.linker").as_deref() {
            None | Some("dictionary") => self.existing_file(g, "terminology", "gold.terminology").map(|path| LinkerConfig::Dictionary { path }),
            Some("subprocess") => match self.string(g, "linker_program", "gold.linker_program") {
                Some(program) => Some(LinkerConfig::Subprocess {
                    program,
                    args: self.strings(g, "linker_args", "gold.linker_args").unwrap_or_default(),
                }),
                None => {
                    self.err("gold.linker_program", "required for the subprocess linker");
                    None
                }
            },
            Some("http") => match self.string(g, "linker_url", "gold.linker_url") {
                Some(url) => Some(LinkerConfig::Http { url }),
                None => {
                    self.err("gold.linker_url", "required for the http linker");
                    None
                }
            },
            Some(other) => {
                self.err("gold.linker", format!("unknown linker `{other}` (dictionary | subprocess | http)"));
                None
            }
        };
        if tasks.contains(&TaskKind::Diagnosis) {
            if out.ccsr.is_none() && !g.contains_key("ccsr") {
                self.err("gold.ccsr", "required when the diagnosis task is enabled");
            }
            if out.linker.is_none() && !g.contains_key("terminology") && !g.contains_key("linker") {
                self.err("gold.terminology", "a diagnosis linker is required when the diagnosis task is enabled");
            }
            if let Some(fp) = &out.filter_provider {
                match providers.iter().find(|p| &p.id == fp) {
                    None => self.err("gold.filter_provider", format!("no provider with id `{fp}`")),
                    Some(p) => {
                        if let Some(m) = &out.filter_model {
                            if !p.models.contains(m) {
                                self.err("gold.filter_model", format!("provider `{fp}` has no model `{m}`"));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn sampling(&mut self, t: &Table) -> Sampling {
        let d = Sampling::default();
        let Some(s) = self.table(t, "sampling") else { return d };
        self.unknown_keys(s, "sampling.", &["temperature", "max_output_tokens"]);
        let temperature = match s.get("temperature") {
            None => d.temperature,
            Some(Value::Float(f)) if *f >= 0.0 => *f,
            Some(Value::Integer(i)) if *i >= 0 => *i as f64,
            Some(other) => {
                self.err("sampling.temperature", format!("expected a non-negative number, got {other}"));
                d.temperature
            }
        };
        let max_output_tokens = self.uint(s, "max_output_tokens", "sampling.max_output_tokens").map_or(d.max_output_tokens, |x| x as u32);
        Sampling { temperature, max_output_tokens }
    }
}

/// Names of all tasks in a config, for messages.
pub fn task_names(tasks: &[TaskKind]) -> String {
    tasks.iter().map(|t| t.as_str()).collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>().join(",")
}
