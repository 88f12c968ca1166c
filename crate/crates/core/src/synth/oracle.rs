//! Honest-reader provider: answers from planted truth, restricted to what
//! the prompt's passage block actually contains.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use super::EncounterTruth;
use crate::contexts::TemplateSet;
use crate::corpus::TaskKind;
use crate::dx::FILTER_TEMPLATE;
use crate::imaging::NO_IMAGING_SENTINEL;
use crate::llm::{ChatProvider, ChatRequest, ProviderFailure, ProviderReply};

pub const ORACLE_PROVIDER_ID: &str = "oracle";

static REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:IMG|ABX|DX)-(\d{4})-").unwrap());
static ENCOUNTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"encounter (SYN-\d{4})").unwrap());

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("prompt matches no known task template")]
    UnknownTask,
}

pub struct OracleProvider {
    id: String,
    templates: TemplateSet,
    truth: HashMap<String, EncounterTruth>,
}

impl OracleProvider {
    pub fn new(truth: Vec<EncounterTruth>) -> Self {
        Self::with_templates(truth, TemplateSet::default())
    }

    pub fn with_templates(truth: Vec<EncounterTruth>, templates: TemplateSet) -> Self {
        Self::with_id(ORACLE_PROVIDER_ID, truth, templates)
    }

    /// Registers under a custom provider id.
    pub fn with_id(id: &str, truth: Vec<EncounterTruth>, templates: TemplateSet) -> Self {
        let truth = truth.into_iter().map(|t| (t.encounter_id[4..].to_string(), t)).collect();
        Self { id: id.to_string(), templates, truth }
    }

    /// Answers a rendered prompt in the model output grammar of its task.
    pub fn respond(&self, prompt: &str) -> Result<String, OracleError> {
        if prompt.starts_with(filter_heading()) {
            return Ok(self.respond_filter(prompt));
        }
        let (task, block) = self.templates.identify(prompt).ok_or(OracleError::UnknownTask)?;
        let encounters: Vec<&EncounterTruth> = {
            let mut tags: Vec<&str> = REF.captures_iter(block).map(|c| c.get(1).unwrap().as_str()).collect();
            tags.sort_unstable();
            tags.dedup();
            tags.into_iter().filter_map(|t| self.truth.get(t)).collect()
        };
        Ok(match task {
            TaskKind::Imaging => imaging_answer(&encounters, block),
            TaskKind::Antibiotics => abx_answer(&encounters, block),
            TaskKind::Diagnosis => dx_answer(&encounters, block),
        })
    }

    fn respond_filter(&self, prompt: &str) -> String {
        let Some(t) = ENCOUNTER.captures(prompt).and_then(|c| self.truth.get(&c[1][4..])) else {
            return "NONE".into();
        };
        if t.filter_keep.is_empty() {
            return "NONE".into();
        }
        let mut out = String::new();
        for code in &t.filter_keep {
            let desc = t.diagnoses.iter().find(|d| &d.code == code).map(|d| d.description.as_str()).unwrap_or("");
            out.push_str(&format!("- {code}: {desc}\n"));
        }
        out
    }
}

fn filter_heading() -> &'static str {
    FILTER_TEMPLATE.lines().next().unwrap_or_default()
}

fn mmdd(d: chrono::NaiveDate) -> String {
    use chrono::Datelike;
    format!("{:02}/{:02}", d.month(), d.day())
}

fn imaging_answer(encounters: &[&EncounterTruth], block: &str) -> String {
    let mut lines = Vec::new();
    for t in encounters {
        for i in t.imaging.iter().filter(|i| block.contains(&i.sentence)) {
            let e = &i.event;
            let date = e.date.map(mmdd).unwrap_or_else(|| "unknown".into());
            lines.push(format!(
                "- ({date}) {} - {}: {}",
                e.modality.as_str(),
                e.subtype.as_deref().unwrap_or("None"),
                e.location
            ));
        }
    }
    if lines.is_empty() {
        return NO_IMAGING_SENTINEL.to_string();
    }
    lines.join("\n")
}

fn abx_answer(encounters: &[&EncounterTruth], block: &str) -> String {
    let mut lines = Vec::new();
    for t in encounters {
        for c in t.antibiotics.iter().filter(|c| !c.decoy && block.contains(&c.start_sentence)) {
            let end = match &c.end_sentence {
                Some(s) if block.contains(s) => mmdd(c.end),
                _ => "present".into(),
            };
            lines.push(format!("- {} ({}-{end})", c.note_name, mmdd(c.start)));
        }
    }
    if lines.is_empty() {
        return "No antibiotics identified.".into();
    }
    lines.join("\n")
}

fn dx_answer(encounters: &[&EncounterTruth], block: &str) -> String {
    let mut lines = Vec::new();
    for t in encounters {
        for d in t.diagnoses.iter().filter(|d| d.focus && block.contains(&d.sentence)) {
            lines.push(format!("{}. {}", lines.len() + 1, d.surface));
        }
    }
    if lines.is_empty() {
        return "No diagnoses identified.".into();
    }
    lines.join("\n")
}

impl ChatProvider for OracleProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ProviderReply, ProviderFailure> {
        self.respond(&req.prompt_text).map(ProviderReply::text).map_err(|e| ProviderFailure::Fatal(e.to_string()))
    }
}
