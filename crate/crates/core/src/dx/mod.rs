//! Diagnoses: gold targets, linking to ICD-10, CCSR mapping and scoring.

pub mod ccsr;
mod filter;
mod linker;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use ccsr::{canonical_code, icd_to_ccsr, load_ccsr, CategorySet, CcsrError, CcsrLookup, CcsrTable, LookupVia, MalformedRow};
pub use filter::{filter_billing_codes, parse_filter_response, render_filter_prompt, FilterOutcome, FILTER_TEMPLATE};
pub use linker::{normalize_term, DiagnosisLinker, DictionaryLinker, HttpLinker, LinkerError, SubprocessLinker};

use crate::corpus::BillingCode;
use crate::matching::max_matching;
use crate::metrics::Counts;
use crate::report::ParseReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisEntry {
    pub surface_text: Option<String>,
    pub icd_codes: BTreeSet<String>,
    pub ccsr: CategorySet,
}

impl DiagnosisEntry {
    pub fn is_mapped(&self) -> bool {
        !self.ccsr.is_empty()
    }

    /// Maps `codes` through the table; invalid codes are ignored.
    pub fn from_codes(surface_text: Option<String>, codes: BTreeSet<String>, table: &CcsrTable) -> Self {
        let ccsr = codes.iter().filter_map(|c| table.lookup(c).ok()).flat_map(|l| l.categories).collect();
        Self { surface_text, icd_codes: codes, ccsr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldTarget {
    BillingCodes,
    DischargeSummary,
    Filtered,
}

impl GoldTarget {
    pub const ALL: [GoldTarget; 3] = [GoldTarget::BillingCodes, GoldTarget::DischargeSummary, GoldTarget::Filtered];

    pub fn as_str(self) -> &'static str {
        match self {
            GoldTarget::BillingCodes => "billing_codes",
            GoldTarget::DischargeSummary => "discharge_summary",
            GoldTarget::Filtered => "filtered",
        }
    }
}

impl fmt::Display for GoldTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoldTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        GoldTarget::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown gold target `{s}`"))
    }
}

/// Mapped entries plus what was left out of scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryList {
    pub entries: Vec<DiagnosisEntry>,
    /// Text that linked to no code.
    pub unlinked: Vec<String>,
    /// Linked or billed, but with no CCSR category.
    pub unmapped: Vec<DiagnosisEntry>,
    pub duplicates: usize,
}

impl EntryList {
    fn push(&mut self, e: DiagnosisEntry) {
        if !e.is_mapped() {
            self.unmapped.push(e);
        } else if self.entries.iter().any(|x| x.ccsr == e.ccsr) {
            self.duplicates += 1;
        } else {
            self.entries.push(e);
        }
    }

    pub fn excluded(&self) -> usize {
        self.unlinked.len() + self.unmapped.len()
    }
}

/// One entry per billed code (billing and filtered targets).
pub fn entries_from_billing(codes: &[BillingCode], table: &CcsrTable) -> EntryList {
    let mut out = EntryList::default();
    for c in codes {
        let code = canonical_code(&c.code);
        out.push(DiagnosisEntry::from_codes(Some(c.description.clone()), BTreeSet::from([code]), table));
    }
    out
}

/// Links each surface string and maps it.
pub fn entries_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    linker: &dyn DiagnosisLinker,
    table: &CcsrTable,
) -> Result<EntryList, LinkerError> {
    let mut out = EntryList::default();
    for t in texts {
        let codes = linker.link(t)?;
        if codes.is_empty() {
            out.unlinked.push(t.to_string());
            continue;
        }
        out.push(DiagnosisEntry::from_codes(Some(t.to_string()), codes, table));
    }
    Ok(out)
}

static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d+\s*[.)]|[-*•])\s*(.+?)\s*$").unwrap());
static DX_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*#*\s*(?:(?:discharge|final|principal|primary|secondary)\s+)?diagnos[ie]s\s*:?\s*$").unwrap());
static HEADERISH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*#*\s*[A-Za-z][A-Za-z /&-]{1,60}:\s*$").unwrap());

/// Numbered or bulleted list items, stripped of the marker and any
/// trailing explanation after a colon or dash.
pub fn list_items(text: &str, report: &mut ParseReport) -> Vec<String> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match NUMBERED.captures(line) {
            Some(c) => {
                let item = c[1].split(" - ").next().unwrap_or("").split(':').next().unwrap_or("").trim().trim_matches('*').trim();
                if item.is_empty() {
                    report.issue(i + 1, line, "empty list item");
                } else {
                    items.push(item.to_string());
                }
            }
            None => report.issue(i + 1, line, "not a list item"),
        }
    }
    items
}

pub fn parse_llm_dx(text: &str, linker: &dyn DiagnosisLinker, table: &CcsrTable) -> Result<(EntryList, ParseReport), LinkerError> {
    let mut report = ParseReport::default();
    let items = list_items(text, &mut report);
    let entries = entries_from_texts(items.iter().map(String::as_str), linker, table)?;
    Ok((entries, report))
}

/// List items under the diagnosis heading of a discharge summary.
pub fn discharge_diagnoses(summary: &str) -> Vec<String> {
    let lines: Vec<&str> = summary.lines().collect();
    let Some(start) = lines.iter().position(|l| DX_HEADER.is_match(l)) else {
        return Vec::new();
    };
    let mut block = Vec::new();
    for line in &lines[start + 1..] {
        if line.trim().is_empty() {
            if block.is_empty() {
                continue;
            }
            break;
        }
        if HEADERISH.is_match(line) || !NUMBERED.is_match(line) {
            break;
        }
        block.push(*line);
    }
    list_items(&block.join("\n"), &mut ParseReport::default())
}

/// One-to-one matching; a pair matches when their category sets intersect.
pub fn score_dx(pred: &[DiagnosisEntry], gold: &[DiagnosisEntry]) -> Counts {
    let m = max_matching(pred.len(), gold.len(), |p, g| !pred[p].ccsr.is_disjoint(&gold[g].ccsr));
    Counts::from_matching(pred.len(), gold.len(), m.len())
}
