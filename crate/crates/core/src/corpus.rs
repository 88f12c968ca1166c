//! Corpus data model, line-delimited JSON ingestion and per-task truncation.
//!
//! A corpus file holds one hospitalization per line. Records that violate the
//! schema are skipped and listed in the [`LoadReport`]; only I/O failures abort
//! a load.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, SecondsFormat};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Identifier of the only corpus schema understood by [`load_corpus`].
pub const CORPUS_SCHEMA_V1: &str = "ehr-corpus-v1";

pub type Timestamp = DateTime<FixedOffset>;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    UnreadableFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported corpus schema `{0}`")]
    UnsupportedSchema(String),
    #[error("no {anchor} note to cut encounter {encounter_id} at")]
    NoCutoffNote {
        encounter_id: String,
        anchor: NoteType,
    },
    #[error("cannot write corpus: {0}")]
    Write(#[from] std::io::Error),
}

/// The closed set of note categories the pipeline reasons about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteType {
    Progress,
    Consult,
    ImagingReport,
    Handoff,
    DischargeSummary,
    IdConsult,
    Other,
}

impl NoteType {
    pub const ALL: [NoteType; 7] = [
        NoteType::Progress,
        NoteType::Consult,
        NoteType::ImagingReport,
        NoteType::Handoff,
        NoteType::DischargeSummary,
        NoteType::IdConsult,
        NoteType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoteType::Progress => "progress",
            NoteType::Consult => "consult",
            NoteType::ImagingReport => "imaging_report",
            NoteType::Handoff => "handoff",
            NoteType::DischargeSummary => "discharge_summary",
            NoteType::IdConsult => "id_consult",
            NoteType::Other => "other",
        }
    }

    /// Maps a wire label onto the enumeration. Unknown labels become `Other`.
    pub fn from_label(label: &str) -> (NoteType, bool) {
        let canon = label.trim().to_ascii_lowercase();
        NoteType::ALL
            .into_iter()
            .find(|t| t.as_str() == canon)
            .map(|t| (t, true))
            .unwrap_or((NoteType::Other, false))
    }
}

impl fmt::Display for NoteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Imaging,
    Antibiotics,
    Diagnosis,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Imaging, TaskKind::Antibiotics, TaskKind::Diagnosis];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Imaging => "imaging",
            TaskKind::Antibiotics => "antibiotics",
            TaskKind::Diagnosis => "diagnosis",
        }
    }

    /// The note type whose first occurrence bounds the context for this task.
    pub fn anchor_note_type(self) -> NoteType {
        match self {
            TaskKind::Antibiotics => NoteType::IdConsult,
            TaskKind::Imaging | TaskKind::Diagnosis => NoteType::DischargeSummary,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "imaging" => Ok(TaskKind::Imaging),
            "antibiotics" | "abx" => Ok(TaskKind::Antibiotics),
            "diagnosis" | "dx" => Ok(TaskKind::Diagnosis),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalNote {
    pub note_id: String,
    pub timestamp: Timestamp,
    pub note_type: NoteType,
    /// Verbatim wire label when it did not map onto [`NoteType`].
    pub raw_type: Option<String>,
    pub author_service: Option<String>,
    pub text: String,
}

impl ClinicalNote {
    /// Label used when rendering the note: the raw label for unknown types.
    pub fn type_label(&self) -> &str {
        self.raw_type.as_deref().unwrap_or(self.note_type.as_str())
    }

    /// Calendar date in the note's own offset.
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    pub fn local_time(&self) -> NaiveDateTime {
        self.timestamp.naive_local()
    }

    pub fn is_infectious_diseases_authored(&self) -> bool {
        self.author_service.as_deref().is_some_and(is_infectious_diseases_service)
    }
}

fn is_infectious_diseases_service(service: &str) -> bool {
    let s = service.trim().to_ascii_lowercase().replace(['_', '-'], " ");
    s == "id" || s.contains("infectious")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureRow {
    pub description: String,
    #[serde(with = "rfc3339")]
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingCode {
    pub code: String,
    #[serde(default)]
    pub description: String,
}

/// Task-specific gold attachments carried alongside the notes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSources {
    #[serde(default)]
    pub procedures: Vec<ProcedureRow>,
    #[serde(default)]
    pub billing_codes: Vec<BillingCode>,
    #[serde(default)]
    pub id_consult_note_id: Option<String>,
    #[serde(default)]
    pub discharge_summary_note_id: Option<String>,
}

/// Where a task-specific truncation cut the timeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub task: TaskKind,
    pub cutoff: Timestamp,
    pub anchor_note_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hospitalization {
    pub encounter_id: String,
    pub admit_time: Timestamp,
    pub discharge_time: Timestamp,
    pub notes: Vec<ClinicalNote>,
    pub gold: GoldSources,
    pub truncation: Option<Truncation>,
}

impl Hospitalization {
    pub fn note(&self, note_id: &str) -> Option<&ClinicalNote> {
        self.notes.iter().find(|n| n.note_id == note_id)
    }

    /// Orders notes by timestamp, breaking ties by note id.
    pub fn sort_notes(&mut self) {
        self.notes
            .sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.note_id.cmp(&b.note_id)));
    }

    /// Finds the note that bounds the context for `task`: the earliest note of
    /// the anchor type, also considering the note referenced in the gold sources.
    pub fn anchor_note(&self, task: TaskKind) -> Option<&ClinicalNote> {
        let anchor_type = task.anchor_note_type();
        let gold_ref = match task {
            TaskKind::Antibiotics => self.gold.id_consult_note_id.as_deref(),
            _ => self.gold.discharge_summary_note_id.as_deref(),
        };
        self.notes
            .iter()
            .filter(|n| n.note_type == anchor_type || Some(n.note_id.as_str()) == gold_ref)
            .min_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.note_id.cmp(&b.note_id)))
    }

    /// Note the gold labels of `task` are read from.
    pub fn gold_note(&self, task: TaskKind) -> Option<&ClinicalNote> {
        let gold_ref = match task {
            TaskKind::Antibiotics => self.gold.id_consult_note_id.as_deref(),
            _ => self.gold.discharge_summary_note_id.as_deref(),
        };
        gold_ref.and_then(|id| self.note(id)).or_else(|| self.anchor_note(task))
    }

    pub fn total_text_len(&self) -> usize {
        self.notes.iter().map(|n| n.text.len()).sum()
    }
}

/// Returns a copy of `h` holding only the notes the model may see for `task`.
///
/// Notes at or after the anchor note's timestamp are dropped. For antibiotics
/// every note written by the infectious-diseases service is dropped as well.
pub fn truncate_for_task(h: &Hospitalization, task: TaskKind) -> Result<Hospitalization, CorpusError> {
    let (cutoff, anchor_note_id) = match &h.truncation {
        Some(t) if t.task == task => (t.cutoff, t.anchor_note_id.clone()),
        _ => {
            let anchor = h.anchor_note(task).ok_or_else(|| CorpusError::NoCutoffNote {
                encounter_id: h.encounter_id.clone(),
                anchor: task.anchor_note_type(),
            })?;
            (anchor.timestamp, anchor.note_id.clone())
        }
    };
    let notes = h
        .notes
        .iter()
        .filter(|n| n.timestamp < cutoff)
        .filter(|n| task != TaskKind::Antibiotics || !n.is_infectious_diseases_authored())
        .cloned()
        .collect();
    Ok(Hospitalization {
        encounter_id: h.encounter_id.clone(),
        admit_time: h.admit_time,
        discharge_time: h.discharge_time,
        notes,
        gold: h.gold.clone(),
        truncation: Some(Truncation { task, cutoff, anchor_note_id }),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordIssue {
    MalformedJson { message: String },
    MissingField { field: String },
    BadTimestamp { field: String, value: String },
    EmptyText { note_id: String },
    NoteOutsideStay { note_id: String },
    DuplicateEncounter { encounter_id: String },
    UnknownNoteType { note_id: String, label: String },
}

impl RecordIssue {
    /// Warnings keep the record; everything else skips it.
    pub fn is_warning(&self) -> bool {
        matches!(self, RecordIssue::UnknownNoteType { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportEntry {
    pub line: usize,
    pub encounter_id: Option<String>,
    pub issue: RecordIssue,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub records_read: usize,
    pub records_loaded: usize,
    pub entries: Vec<ReportEntry>,
}

impl LoadReport {
    pub fn violations(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| !e.issue.is_warning())
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| e.issue.is_warning())
    }

    pub fn is_clean(&self) -> bool {
        self.violations().next().is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub hospitalizations: Vec<Hospitalization>,
}

impl Corpus {
    pub fn get(&self, encounter_id: &str) -> Option<&Hospitalization> {
        self.hospitalizations.iter().find(|h| h.encounter_id == encounter_id)
    }

    pub fn len(&self) -> usize {
        self.hospitalizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hospitalizations.is_empty()
    }

    /// Serializes back to the line-delimited wire format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for h in &self.hospitalizations {
            out.push_str(&hospitalization_to_json(h));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }
}

pub fn load_corpus(path: &Path, schema: &str) -> Result<(Corpus, LoadReport), CorpusError> {
    if schema != CORPUS_SCHEMA_V1 {
        return Err(CorpusError::UnsupportedSchema(schema.to_string()));
    }
    let unreadable = |source| CorpusError::UnreadableFile { path: path.display().to_string(), source };
    let file = fs::File::open(path).map_err(unreadable)?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line.map_err(unreadable)?);
    }
    Ok(parse_corpus_lines(lines.iter().map(String::as_str)))
}

pub fn parse_corpus_str(text: &str) -> (Corpus, LoadReport) {
    parse_corpus_lines(text.lines())
}

fn parse_corpus_lines<'a>(lines: impl Iterator<Item = &'a str>) -> (Corpus, LoadReport) {
    let mut report = LoadReport::default();
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.records_read += 1;
        let line_no = idx + 1;
        let (parsed, issues) = parse_record(line);
        let encounter_id = parsed.as_ref().map(|h| h.encounter_id.clone());
        let fatal = issues.iter().any(|i| !i.is_warning());
        for issue in issues {
            report.entries.push(ReportEntry { line: line_no, encounter_id: encounter_id.clone(), issue });
        }
        let Some(h) = parsed.filter(|_| !fatal) else { continue };
        if !seen.insert(h.encounter_id.clone()) {
            report.entries.push(ReportEntry {
                line: line_no,
                encounter_id: Some(h.encounter_id.clone()),
                issue: RecordIssue::DuplicateEncounter { encounter_id: h.encounter_id },
            });
            continue;
        }
        report.records_loaded += 1;
        corpus.hospitalizations.push(h);
    }
    (corpus, report)
}

fn parse_record(line: &str) -> (Option<Hospitalization>, Vec<RecordIssue>) {
    let mut issues = Vec::new();
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return (None, vec![RecordIssue::MalformedJson { message: e.to_string() }]),
    };
    let Some(obj) = value.as_object() else {
        return (None, vec![RecordIssue::MalformedJson { message: "record is not an object".into() }]);
    };

    let encounter_id = str_field(obj, "encounter_id", &mut issues);
    let admit = ts_field(obj, "admit_time", &mut issues);
    let discharge = ts_field(obj, "discharge_time", &mut issues);

    let mut notes = Vec::new();
    match obj.get("notes").and_then(Value::as_array) {
        Some(raw_notes) => {
            for (i, raw) in raw_notes.iter().enumerate() {
                if let Some(note) = parse_note(raw, i, &mut issues) {
                    notes.push(note);
                }
            }
        }
        None => issues.push(RecordIssue::MissingField { field: "notes".into() }),
    }

    let gold = match obj.get("gold") {
        None | Some(Value::Null) => GoldSources::default(),
        Some(g) => match serde_json::from_value::<GoldSources>(g.clone()) {
            Ok(g) => g,
            Err(e) => {
                issues.push(RecordIssue::MalformedJson { message: format!("gold: {e}") });
                GoldSources::default()
            }
        },
    };

    let (Some(encounter_id), Some(admit_time), Some(discharge_time)) = (encounter_id, admit, discharge) else {
        return (None, issues);
    };
    for n in &notes {
        if n.timestamp < admit_time || n.timestamp > discharge_time + Duration::days(1) {
            issues.push(RecordIssue::NoteOutsideStay { note_id: n.note_id.clone() });
        }
    }
    let mut h = Hospitalization { encounter_id, admit_time, discharge_time, notes, gold, truncation: None };
    h.sort_notes();
    (Some(h), issues)
}

fn parse_note(raw: &Value, index: usize, issues: &mut Vec<RecordIssue>) -> Option<ClinicalNote> {
    let Some(obj) = raw.as_object() else {
        issues.push(RecordIssue::MalformedJson { message: format!("notes[{index}] is not an object") });
        return None;
    };
    let before = issues.len();
    let note_id = str_field(obj, "note_id", issues).map(|id| id.to_string());
    let label = str_field(obj, "note_type", issues);
    let text = str_field(obj, "text", issues);
    // Prefix field names so the report points at the failing note.
    for issue in issues[before..].iter_mut() {
        if let RecordIssue::MissingField { field } = issue {
            *field = format!("notes[{index}].{field}");
        }
    }
    let timestamp = match obj.get("timestamp").and_then(Value::as_str) {
        Some(s) => match parse_timestamp(s) {
            Some(t) => Some(t),
            None => {
                issues.push(RecordIssue::BadTimestamp {
                    field: format!("notes[{index}].timestamp"),
                    value: s.to_string(),
                });
                None
            }
        },
        None => {
            issues.push(RecordIssue::BadTimestamp {
                field: format!("notes[{index}].timestamp"),
                value: obj.get("timestamp").map(|v| v.to_string()).unwrap_or_default(),
            });
            None
        }
    };
    let author_service = obj.get("author_service").and_then(Value::as_str).map(str::to_string);
    let (note_id, label, text, timestamp) = (note_id?, label?, text?, timestamp?);
    if text.is_empty() {
        issues.push(RecordIssue::EmptyText { note_id: note_id.clone() });
        return None;
    }
    let (note_type, known) = NoteType::from_label(&label);
    if !known {
        log::warn!("note {note_id}: unknown note type `{label}`, treating as other");
        issues.push(RecordIssue::UnknownNoteType { note_id: note_id.clone(), label: label.clone() });
    }
    Some(ClinicalNote {
        note_id,
        timestamp,
        note_type,
        raw_type: (!known).then_some(label),
        author_service,
        text,
    })
}

fn str_field(obj: &Map<String, Value>, field: &str, issues: &mut Vec<RecordIssue>) -> Option<String> {
    match obj.get(field).and_then(Value::as_str) {
        Some(s) => Some(s.to_string()),
        None => {
            issues.push(RecordIssue::MissingField { field: field.to_string() });
            None
        }
    }
}

fn ts_field(obj: &Map<String, Value>, field: &str, issues: &mut Vec<RecordIssue>) -> Option<Timestamp> {
    let raw = obj.get(field).and_then(Value::as_str);
    match raw.and_then(parse_timestamp) {
        Some(t) => Some(t),
        None => {
            issues.push(RecordIssue::BadTimestamp {
                field: field.to_string(),
                value: raw.map(str::to_string).unwrap_or_default(),
            });
            None
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    DateTime::parse_from_rfc3339(s.trim()).ok()
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Serialize)]
struct NoteWire<'a> {
    note_id: &'a str,
    #[serde(with = "rfc3339")]
    timestamp: Timestamp,
    note_type: &'a str,
    author_service: Option<&'a str>,
    text: &'a str,
}

#[derive(Serialize)]
struct HospitalizationWire<'a> {
    encounter_id: &'a str,
    #[serde(with = "rfc3339")]
    admit_time: Timestamp,
    #[serde(with = "rfc3339")]
    discharge_time: Timestamp,
    notes: Vec<NoteWire<'a>>,
    gold: &'a GoldSources,
}

pub fn hospitalization_to_json(h: &Hospitalization) -> String {
    let wire = HospitalizationWire {
        encounter_id: &h.encounter_id,
        admit_time: h.admit_time,
        discharge_time: h.discharge_time,
        notes: h
            .notes
            .iter()
            .map(|n| NoteWire {
                note_id: &n.note_id,
                timestamp: n.timestamp,
                note_type: n.type_label(),
                author_service: n.author_service.as_deref(),
                text: &n.text,
            })
            .collect(),
        gold: &h.gold,
    };
    serde_json::to_string(&wire).expect("corpus records always serialize")
}

pub(crate) mod rfc3339 {
    use super::{format_timestamp, parse_timestamp, Timestamp};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let raw = String::deserialize(d)?;
        parse_timestamp(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad RFC 3339 timestamp `{raw}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    fn note(id: &str, t: &str, ty: NoteType, service: Option<&str>) -> ClinicalNote {
        ClinicalNote {
            note_id: id.into(),
            timestamp: ts(t),
            note_type: ty,
            raw_type: None,
            author_service: service.map(str::to_string),
            text: format!("text of {id}"),
        }
    }

    fn encounter(notes: Vec<ClinicalNote>) -> Hospitalization {
        Hospitalization {
            encounter_id: "E1".into(),
            admit_time: ts("2024-01-01T08:00:00Z"),
            discharge_time: ts("2024-01-12T08:00:00Z"),
            notes,
            gold: GoldSources::default(),
            truncation: None,
        }
    }

    #[test]
    fn diagnosis_cut_keeps_notes_before_discharge_summary() {
        let mut notes: Vec<_> = (1..=9)
            .map(|d| note(&format!("n{d}"), &format!("2024-01-{:02}T09:00:00Z", d + 1), NoteType::Progress, None))
            .collect();
        notes.push(note("ds", "2024-01-11T10:00:00Z", NoteType::DischargeSummary, None));
        let h = encounter(notes);
        let cut = truncate_for_task(&h, TaskKind::Diagnosis).unwrap();
        assert_eq!(cut.notes.len(), 9);
        assert_eq!(cut.truncation.as_ref().unwrap().anchor_note_id, "ds");
    }

    #[test]
    fn antibiotic_cut_drops_id_authored_notes() {
        let mut notes: Vec<_> = (1..=9)
            .map(|d| note(&format!("n{d}"), &format!("2024-01-{:02}T09:00:00Z", d + 1), NoteType::Progress, None))
            .collect();
        notes[1].author_service = Some("infectious_diseases".into());
        notes[2].author_service = Some("Infectious Diseases".into());
        // consult on day 5
        notes.push(note("idc", "2024-01-05T12:00:00Z", NoteType::IdConsult, Some("infectious_diseases")));
        let mut h = encounter(notes);
        h.sort_notes();
        let cut = truncate_for_task(&h, TaskKind::Antibiotics).unwrap();
        let ids: Vec<_> = cut.notes.iter().map(|n| n.note_id.as_str()).collect();
        assert_eq!(ids, ["n1", "n4"]);
    }

    #[test]
    fn missing_anchor_is_an_error() {
        let h = encounter(vec![note("n1", "2024-01-02T09:00:00Z", NoteType::Progress, None)]);
        assert!(matches!(truncate_for_task(&h, TaskKind::Imaging), Err(CorpusError::NoCutoffNote { .. })));
    }

    #[test]
    fn earliest_anchor_wins_and_ties_are_excluded() {
        let h = encounter(vec![
            note("a", "2024-01-03T09:00:00Z", NoteType::Progress, None),
            note("b", "2024-01-04T09:00:00Z", NoteType::Progress, None),
            note("ds1", "2024-01-04T09:00:00Z", NoteType::DischargeSummary, None),
            note("ds2", "2024-01-06T09:00:00Z", NoteType::DischargeSummary, None),
        ]);
        let cut = truncate_for_task(&h, TaskKind::Imaging).unwrap();
        let ids: Vec<_> = cut.notes.iter().map(|n| n.note_id.as_str()).collect();
        assert_eq!(ids, ["a"]);
        let again = truncate_for_task(&cut, TaskKind::Imaging).unwrap();
        assert_eq!(again, cut);
    }

    #[test]
    fn loads_two_encounters_sorted() {
        let mut lines = String::new();
        for e in 0..2 {
            let notes: Vec<_> = (0..5)
                .rev()
                .map(|i| {
                    serde_json::json!({
                        "note_id": format!("e{e}n{i}"),
                        "timestamp": format!("2024-02-0{}T10:00:00Z", i + 2),
                        "note_type": "progress",
                        "author_service": null,
                        "text": "Stable overnight."
                    })
                })
                .collect();
            let rec = serde_json::json!({
                "encounter_id": format!("E{e}"),
                "admit_time": "2024-02-01T00:00:00Z",
                "discharge_time": "2024-02-09T00:00:00Z",
                "notes": notes,
                "gold": {}
            });
            lines.push_str(&rec.to_string());
            lines.push('\n');
        }
        let (corpus, report) = parse_corpus_str(&lines);
        assert!(report.is_clean());
        assert_eq!(corpus.len(), 2);
        for h in &corpus.hospitalizations {
            assert!(h.notes.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
    }

    #[test]
    fn record_without_timestamp_is_skipped() {
        let line = r#"{"encounter_id":"E9","admit_time":"2024-02-01T00:00:00Z","discharge_time":"2024-02-09T00:00:00Z","notes":[{"note_id":"x","note_type":"progress","text":"hi"}],"gold":{}}"#;
        let (corpus, report) = parse_corpus_str(line);
        assert!(corpus.is_empty());
        assert!(report
            .violations()
            .any(|e| matches!(&e.issue, RecordIssue::BadTimestamp { field, .. } if field == "notes[0].timestamp")));
    }

    #[test]
    fn duplicate_and_unknown_type_reporting() {
        let rec = r#"{"encounter_id":"E1","admit_time":"2024-02-01T00:00:00Z","discharge_time":"2024-02-09T00:00:00Z","notes":[{"note_id":"x","timestamp":"2024-02-02T00:00:00Z","note_type":"Nursing Flowsheet","author_service":null,"text":"hi"}],"gold":{"procedures":[],"billing_codes":[],"id_consult_note_id":null,"discharge_summary_note_id":null}}"#;
        let text = format!("{rec}\n{rec}\n");
        let (corpus, report) = parse_corpus_str(&text);
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.violations().count(), 1);
        assert_eq!(report.warnings().count(), 2);
        let n = &corpus.hospitalizations[0].notes[0];
        assert_eq!(n.note_type, NoteType::Other);
        assert_eq!(n.type_label(), "Nursing Flowsheet");
        // Round trip keeps the raw label.
        assert_eq!(corpus.to_jsonl(), format!("{rec}\n"));
    }

    #[test]
    fn garbage_line_is_reported_not_fatal() {
        let (corpus, report) = parse_corpus_str("{not json\n");
        assert!(corpus.is_empty());
        assert!(matches!(report.entries[0].issue, RecordIssue::MalformedJson { .. }));
    }

    #[test]
    fn unknown_schema_rejected() {
        let err = load_corpus(Path::new("/nonexistent"), "fhir-r4").unwrap_err();
        assert!(matches!(err, CorpusError::UnsupportedSchema(_)));
        let err = load_corpus(Path::new("/nonexistent/corpus.jsonl"), CORPUS_SCHEMA_V1).unwrap_err();
        assert!(matches!(err, CorpusError::UnreadableFile { .. }));
    }
}
