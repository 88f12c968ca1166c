//! Context selection strategies and prompt rendering.
//!
//! A [`ContextBundle`] is the list of passages a model sees. Retrieval bundles
//! hold the top-N chunks; recency bundles hold whole notes taken newest-first
//! until the token budget of the fully rendered prompt is spent.

pub mod template;

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use chrono::NaiveDateTime;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Hospitalization, TaskKind};
use crate::indexer::{ChunkIndex, EmbeddingProvider, IndexError, RetrievalQuery, Tokenizer};
pub use template::{format_now, PromptTemplate, TemplateSet, INSERT_TEXT, TIMESTAMP};

pub const RAG_CHUNK_COUNTS: [usize; 3] = [20, 40, 60];
pub const RECENT_BUDGETS: [usize; 3] = [3000, 5500, 8000];
pub const FULL_CONTEXT_BUDGETS: [usize; 2] = [64000, 128000];

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("template alone needs {overhead} tokens, budget is {budget}")]
    BudgetTooSmall { budget: usize, overhead: usize },
    #[error("the antibiotics prompt needs the current timestamp")]
    MissingNow,
    #[error("retrieval strategy needs an index and a query")]
    MissingRetrieval,
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "size", rename_all = "snake_case")]
pub enum ContextStrategy {
    Rag(usize),
    RecentNotes(usize),
    FullContext(usize),
}

impl ContextStrategy {
    pub fn is_rag(self) -> bool {
        matches!(self, ContextStrategy::Rag(_))
    }

    /// Token cap on the rendered prompt, if the strategy has one.
    pub fn budget(self) -> Option<usize> {
        match self {
            ContextStrategy::Rag(_) => None,
            ContextStrategy::RecentNotes(b) | ContextStrategy::FullContext(b) => Some(b),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ContextStrategy::Rag(n) | ContextStrategy::RecentNotes(n) | ContextStrategy::FullContext(n) => n,
        }
    }
}

impl fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextStrategy::Rag(n) => write!(f, "rag:{n}"),
            ContextStrategy::RecentNotes(b) => write!(f, "recent:{b}"),
            ContextStrategy::FullContext(b) => write!(f, "full:{b}"),
        }
    }
}

impl FromStr for ContextStrategy {
    type Err = String;

    /// Parses `rag:20`, `recent:3000`, `full:128000`; sizes accept a `k` suffix
    /// (`recent:5.5k`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, size) = s.split_once(':').ok_or_else(|| format!("strategy `{s}` is not `kind:size`"))?;
        let size = parse_size(size).ok_or_else(|| format!("strategy `{s}` has a bad size"))?;
        if size == 0 {
            return Err(format!("strategy `{s}` must have a positive size"));
        }
        match kind.trim().to_ascii_lowercase().as_str() {
            "rag" => Ok(ContextStrategy::Rag(size)),
            "recent" | "recent_notes" => Ok(ContextStrategy::RecentNotes(size)),
            "full" | "full_context" => Ok(ContextStrategy::FullContext(size)),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

fn parse_size(raw: &str) -> Option<usize> {
    let raw = raw.trim().to_ascii_lowercase();
    match raw.strip_suffix('k') {
        Some(k) => {
            let v: f64 = k.parse().ok()?;
            (v > 0.0).then(|| (v * 1000.0).round() as usize)
        }
        None => raw.parse().ok(),
    }
}

/// How the oldest note is handled when it does not fit the remaining budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Packing {
    /// Keep the tail of the oldest note that fits.
    #[default]
    Partial,
    /// Only whole notes.
    WholeNotes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub timestamp: NaiveDateTime,
    pub note_type: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub strategy: ContextStrategy,
    pub passages: Vec<Passage>,
    pub prompt_tokens: usize,
    pub actual_ehr_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub task: TaskKind,
    pub template_id: String,
    pub rendered_text: String,
    pub now_timestamp: Option<NaiveDateTime>,
}

/// Renders passages as `YYYY-MM-DD HH:MM:SS <type>` header lines, each followed
/// by the passage text and a blank line.
pub fn format_passages(passages: &[Passage]) -> String {
    let mut out = String::new();
    for p in passages {
        out.push_str(&format_now(p.timestamp));
        out.push(' ');
        out.push_str(&p.note_type);
        out.push('\n');
        out.push_str(&p.text);
        out.push_str("\n\n");
    }
    out
}

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}) ([^\n]+)\n").unwrap());

/// Inverse of [`format_passages`].
pub fn parse_passages(block: &str) -> Vec<Passage> {
    let heads: Vec<_> = HEADER
        .captures_iter(block)
        .filter(|c| {
            let start = c.get(0).unwrap().start();
            start == 0 || block[..start].ends_with("\n\n")
        })
        .collect();
    let mut out = Vec::with_capacity(heads.len());
    for (i, cap) in heads.iter().enumerate() {
        let body_start = cap.get(0).unwrap().end();
        let body_end = heads.get(i + 1).map_or(block.len(), |n| n.get(0).unwrap().start());
        let body = &block[body_start..body_end];
        let text = body.strip_suffix("\n\n").unwrap_or(body);
        let Ok(timestamp) = NaiveDateTime::parse_from_str(&cap[1], "%Y-%m-%d %H:%M:%S") else { continue };
        out.push(Passage { timestamp, note_type: cap[2].to_string(), text: text.to_string() });
    }
    out
}

/// Index, query and embedding provider for retrieval strategies.
#[derive(Clone, Copy)]
pub struct Retrieval<'a> {
    pub index: &'a ChunkIndex,
    pub query: &'a RetrievalQuery,
    pub provider: &'a dyn EmbeddingProvider,
}

pub struct ContextBuilder<'a> {
    pub tokenizer: &'a dyn Tokenizer,
    pub templates: &'a TemplateSet,
    pub packing: Packing,
}

impl<'a> ContextBuilder<'a> {
    pub fn new(tokenizer: &'a dyn Tokenizer, templates: &'a TemplateSet) -> Self {
        Self { tokenizer, templates, packing: Packing::default() }
    }

    pub fn with_packing(mut self, packing: Packing) -> Self {
        self.packing = packing;
        self
    }

    /// Selects passages for `task` from a truncated hospitalization.
    ///
    /// `now` is the timestamp substituted into templates that ask for it; it
    /// counts toward the prompt budget.
    pub fn build_context(
        &self,
        h: &Hospitalization,
        task: TaskKind,
        strategy: ContextStrategy,
        retrieval: Option<Retrieval<'_>>,
        now: Option<NaiveDateTime>,
    ) -> Result<ContextBundle, ContextError> {
        let template = self.templates.get(task);
        if template.uses_timestamp() && now.is_none() {
            return Err(ContextError::MissingNow);
        }
        let passages = match strategy {
            ContextStrategy::Rag(n) => {
                let r = retrieval.ok_or(ContextError::MissingRetrieval)?;
                let mut hits = r.index.retrieve(r.query, n, r.provider)?;
                hits.sort_by(|a, b| {
                    (a.chunk.note_timestamp, &a.chunk.note_id, a.chunk.token_span.0).cmp(&(
                        b.chunk.note_timestamp,
                        &b.chunk.note_id,
                        b.chunk.token_span.0,
                    ))
                });
                hits.into_iter()
                    .map(|h| Passage {
                        timestamp: h.chunk.note_timestamp.naive_local(),
                        note_type: h.chunk.note_type_label.clone(),
                        text: h.chunk.text.clone(),
                    })
                    .collect()
            }
            ContextStrategy::RecentNotes(budget) | ContextStrategy::FullContext(budget) => {
                self.pack_recent(h, template, budget, now)?
            }
        };
        let rendered = template.render(&format_passages(&passages), now);
        Ok(ContextBundle {
            strategy,
            prompt_tokens: self.tokenizer.count_tokens(&rendered),
            actual_ehr_tokens: passages.iter().map(|p| self.tokenizer.count_tokens(&p.text)).sum(),
            passages,
        })
    }

    fn pack_recent(
        &self,
        h: &Hospitalization,
        template: &PromptTemplate,
        budget: usize,
        now: Option<NaiveDateTime>,
    ) -> Result<Vec<Passage>, ContextError> {
        let tok = self.tokenizer;
        let overhead = tok.count_tokens(&template.render("", now));
        if overhead > budget {
            return Err(ContextError::BudgetTooSmall { budget, overhead });
        }
        let mut remaining = budget - overhead;
        let mut picked = Vec::new();
        for note in h.notes.iter().rev() {
            let header = format!("{} {}", format_now(note.local_time()), note.type_label());
            let header_tokens = tok.count_tokens(&header);
            let spans = tok.tokenize(&note.text);
            let need = header_tokens + spans.len();
            if need <= remaining {
                remaining -= need;
                picked.push(Passage {
                    timestamp: note.local_time(),
                    note_type: note.type_label().to_string(),
                    text: note.text.clone(),
                });
                continue;
            }
            if self.packing == Packing::Partial && remaining > header_tokens {
                let keep = remaining - header_tokens;
                let from = spans[spans.len() - keep].start;
                picked.push(Passage {
                    timestamp: note.local_time(),
                    note_type: note.type_label().to_string(),
                    text: note.text[from..].to_string(),
                });
            }
            break;
        }
        picked.reverse();

        // Token runs can merge at the template boundaries, so confirm against
        // the rendered prompt and trim the oldest passage until it fits.
        loop {
            let count = tok.count_tokens(&template.render(&format_passages(&picked), now));
            if count <= budget || picked.is_empty() {
                break;
            }
            let excess = count - budget;
            let oldest = &mut picked[0];
            let spans = tok.tokenize(&oldest.text);
            if excess >= spans.len() || self.packing == Packing::WholeNotes {
                picked.remove(0);
            } else {
                oldest.text = oldest.text[spans[excess].start..].to_string();
            }
        }
        Ok(picked)
    }

    pub fn render_prompt(
        &self,
        task: TaskKind,
        bundle: &ContextBundle,
        now: Option<NaiveDateTime>,
    ) -> Result<PromptInstance, ContextError> {
        render_prompt(self.templates.get(task), bundle, now)
    }
}

pub fn render_prompt(
    template: &PromptTemplate,
    bundle: &ContextBundle,
    now: Option<NaiveDateTime>,
) -> Result<PromptInstance, ContextError> {
    if template.uses_timestamp() && now.is_none() {
        return Err(ContextError::MissingNow);
    }
    Ok(PromptInstance {
        task: template.task,
        template_id: template.id.clone(),
        rendered_text: template.render(&format_passages(&bundle.passages), now),
        now_timestamp: now.filter(|_| template.uses_timestamp()),
    })
}
