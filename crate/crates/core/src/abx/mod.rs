//! Antibiotic timelines: gold from the ID consult, output parsing,
//! name and timespan scoring, and the MAR baseline.

mod mar;
mod normalize;
pub mod rxnorm;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use mar::{load_mar_csv, mar_baseline, MarError, MarRecord};
pub use normalize::{name_key, IngredientLookup, IngredientSet, MedicationNormalizer, NormalizationSource, Normalized, OverrideError};

use crate::dates::{resolve_relative_date, MonthDay};
use crate::metrics::Counts;
use crate::report::ParseReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Span {
    Days { start: NaiveDate, end: NaiveDate },
    Unclear,
}

impl Span {
    pub fn days(start: NaiveDate, end: NaiveDate) -> Self {
        assert!(start <= end, "span start after end");
        Span::Days { start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntibioticCourse {
    pub raw_name: String,
    pub ingredients: IngredientSet,
    pub span: Span,
    /// False when the name fell through normalization.
    #[serde(default = "yes")]
    pub resolved: bool,
}

fn yes() -> bool {
    true
}

impl AntibioticCourse {
    pub fn new(raw_name: &str, normalized: Normalized, span: Span) -> Self {
        Self { raw_name: raw_name.trim().to_string(), resolved: normalized.resolved(), ingredients: normalized.ingredients, span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbxError {
    #[error("no anti-infective history section found")]
    SectionNotFound,
}

/// Header lines that open the gold section in an ID consult.
pub fn default_section_headers() -> Vec<Regex> {
    vec![Regex::new(r"(?i)^\s*#*\s*(?:history\s+of\s+)?anti-?\s?infectives?(?:\s+history)?\s*:?\s*$").unwrap()]
}

static HEADERISH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*#*\s*[A-Za-z][A-Za-z /&-]{1,60}:\s*$").unwrap());
static GOLD_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*[-*•]?\s*(.+?)\s*:\s*(\d{1,2}\s*/\s*\d{1,2})\s*[-–]\s*(\d{1,2}\s*/\s*\d{1,2}|present|ongoing|current)\s*\.?\s*$").unwrap()
});
static PRED_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])\s*(.+?)\s*\(\s*([^)]*?)\s*\)\s*\.?\s*$").unwrap());
static PRED_BARE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])\s*([A-Za-z][A-Za-z0-9 /+-]*?)\s*$").unwrap());
static RANGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(\d{1,2}\s*/\s*\d{1,2})\s*(?:[-–]|to)\s*(\d{1,2}\s*/\s*\d{1,2}|present|ongoing|current)$").unwrap());
static SINGLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2}\s*/\s*\d{1,2})$").unwrap());

fn is_open_end(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "present" | "ongoing" | "current")
}

/// Resolves a `start`/`end` pair of day strings to a span.
fn resolve_span(start: &str, end: &str, present: NaiveDate, window: (NaiveDate, NaiveDate)) -> Result<(Span, bool), String> {
    let resolve = |s: &str| -> Result<(NaiveDate, bool), String> {
        let md = MonthDay::parse(s).map_err(|e| e.to_string())?;
        let r = resolve_relative_date(md, window.0, window.1).map_err(|e| e.to_string())?;
        Ok((r.date, r.in_window))
    };
    let (s, s_ok) = resolve(start)?;
    let (e, e_ok) = if is_open_end(end) { (present, true) } else { resolve(end)? };
    if s > e {
        return Err(format!("start {s} after end {e}"));
    }
    Ok((Span::days(s, e), s_ok && e_ok))
}

/// Extracts courses from the anti-infective history section of a consult note.
///
/// `present` closes open-ended courses; `window` is the stay used to place
/// year-less dates.
pub fn gold_from_consult(
    note_text: &str,
    present: NaiveDate,
    window: (NaiveDate, NaiveDate),
    normalizer: &MedicationNormalizer,
    headers: &[Regex],
) -> Result<(Vec<AntibioticCourse>, ParseReport), AbxError> {
    let lines: Vec<&str> = note_text.lines().collect();
    let start = lines.iter().position(|l| headers.iter().any(|h| h.is_match(l))).ok_or(AbxError::SectionNotFound)?;
    let mut courses = Vec::new();
    let mut report = ParseReport::default();
    for (i, line) in lines.iter().enumerate().skip(start + 1) {
        if line.trim().is_empty() {
            if courses.is_empty() && report.issues.is_empty() {
                continue;
            }
            break;
        }
        let n = i + 1;
        let Some(c) = GOLD_LINE.captures(line) else {
            if HEADERISH.is_match(line) {
                break;
            }
            report.issue(n, line, "not a `Name: M/D-M/D` line");
            continue;
        };
        match resolve_span(&c[2], &c[3], present, window) {
            Ok((span, in_window)) => {
                if !in_window {
                    report.flag(n, line, "date outside stay window");
                }
                courses.push(AntibioticCourse::new(&c[1], normalizer.normalize(&c[1]), span));
            }
            Err(e) => report.issue(n, line, e),
        }
    }
    Ok((courses, report))
}

/// Parses `- Name (MM/DD-MM/DD)`, `- Name (MM/DD-present|ongoing)` and
/// `- Name (dates unclear)` lines.
pub fn parse_llm_abx(
    text: &str,
    present: NaiveDate,
    window: (NaiveDate, NaiveDate),
    normalizer: &MedicationNormalizer,
) -> (Vec<AntibioticCourse>, ParseReport) {
    let mut courses = Vec::new();
    let mut report = ParseReport::default();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = PRED_LINE.captures(line) {
            let name = c[1].trim_end_matches(':').trim();
            let inner = c[2].trim();
            let span = if inner.to_ascii_lowercase().contains("unclear") || inner.eq_ignore_ascii_case("unknown") {
                Ok((Span::Unclear, true))
            } else if let Some(r) = RANGE.captures(inner) {
                resolve_span(&r[1], &r[2], present, window)
            } else if let Some(r) = SINGLE.captures(inner) {
                resolve_span(&r[1], &r[1], present, window)
            } else {
                Err(format!("unreadable date range `{inner}`"))
            };
            match span {
                Ok((span, in_window)) => {
                    if !in_window {
                        report.flag(n, line, "date outside stay window");
                    }
                    courses.push(AntibioticCourse::new(name, normalizer.normalize(name), span));
                }
                Err(e) => report.issue(n, line, e),
            }
        } else if let Some(c) = PRED_BARE.captures(line) {
            report.flag(n, line, "no date range; span unclear");
            courses.push(AntibioticCourse::new(&c[1], normalizer.normalize(&c[1]), Span::Unclear));
        } else {
            report.issue(n, line, "not an antibiotic bullet");
        }
    }
    (courses, report)
}

/// Union of inclusive day intervals, merged and sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DaySet(Vec<(NaiveDate, NaiveDate)>);

impl DaySet {
    pub fn from_spans<'a>(spans: impl IntoIterator<Item = &'a Span>) -> Self {
        let mut v: Vec<(NaiveDate, NaiveDate)> = spans
            .into_iter()
            .filter_map(|s| match *s {
                Span::Days { start, end } => Some((start, end)),
                Span::Unclear => None,
            })
            .collect();
        v.sort();
        let mut merged: Vec<(NaiveDate, NaiveDate)> = Vec::with_capacity(v.len());
        for (s, e) in v {
            match merged.last_mut() {
                Some(last) if s <= last.1 + chrono::Duration::days(1) => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        Self(merged)
    }

    pub fn len(&self) -> i64 {
        self.0.iter().map(|(s, e)| (*e - *s).num_days() + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intersection_len(&self, other: &DaySet) -> i64 {
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i], other.0[j]);
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            if lo <= hi {
                total += (hi - lo).num_days() + 1;
            }
            if a.1 < b.1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    /// |A ∩ B| / |A ∪ B|; 0 when either side is empty.
    pub fn jaccard(&self, other: &DaySet) -> f64 {
        if self.is_empty() || other.is_empty() {
            return 0.0;
        }
        let inter = self.intersection_len(other);
        inter as f64 / (self.len() + other.len() - inter) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyJaccard {
    pub ingredients: Vec<String>,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxEncounterScore {
    pub counts: Counts,
    /// Mean over the union of keys; `None` when both sides are empty.
    pub jaccard: Option<f64>,
    pub per_key: Vec<KeyJaccard>,
}

fn group(courses: &[AntibioticCourse]) -> BTreeMap<&IngredientSet, Vec<&Span>> {
    let mut m: BTreeMap<&IngredientSet, Vec<&Span>> = BTreeMap::new();
    for c in courses {
        m.entry(&c.ingredients).or_default().push(&c.span);
    }
    m
}

/// Keys medications by ingredient set; repeated courses of one key are pooled.
pub fn score_abx(pred: &[AntibioticCourse], gold: &[AntibioticCourse]) -> AbxEncounterScore {
    let p = group(pred);
    let g = group(gold);
    let keys: BTreeSet<&IngredientSet> = p.keys().chain(g.keys()).copied().collect();
    let mut counts = Counts::default();
    let mut per_key = Vec::with_capacity(keys.len());
    for k in keys {
        let j = match (p.get(k), g.get(k)) {
            (Some(ps), Some(gs)) => {
                counts.tp += 1;
                DaySet::from_spans(ps.iter().copied()).jaccard(&DaySet::from_spans(gs.iter().copied()))
            }
            (Some(_), None) => {
                counts.fp += 1;
                0.0
            }
            (None, Some(_)) => {
                counts.fn_ += 1;
                0.0
            }
            (None, None) => unreachable!(),
        };
        per_key.push(KeyJaccard { ingredients: k.iter().cloned().collect(), jaccard: j });
    }
    let jaccard = (!per_key.is_empty()).then(|| per_key.iter().map(|k| k.jaccard).sum::<f64>() / per_key.len() as f64);
    AbxEncounterScore { counts, jaccard, per_key }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JaccardSummary {
    /// Mean of per-encounter means (canonical).
    pub per_encounter: f64,
    /// Mean over every medication key in the dataset.
    pub pooled: f64,
    pub encounters_scored: usize,
    pub encounters_empty: usize,
}

pub fn summarize_jaccard(scores: &[AbxEncounterScore]) -> JaccardSummary {
    let enc: Vec<f64> = scores.iter().filter_map(|s| s.jaccard).collect();
    let keys: Vec<f64> = scores.iter().flat_map(|s| s.per_key.iter().map(|k| k.jaccard)).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    JaccardSummary { per_encounter: mean(&enc), pooled: mean(&keys), encounters_scored: enc.len(), encounters_empty: scores.len() - enc.len() }
}
