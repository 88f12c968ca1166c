//! Per-task gold construction and prediction scoring for one encounter.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::abx::rxnorm::{RecordingRxNav, RxNavFixture, RxNormClient};
use crate::abx::{
    default_section_headers, gold_from_consult, mar_baseline, parse_llm_abx, score_abx, AbxEncounterScore,
    AntibioticCourse, MarRecord, MedicationNormalizer,
};
use crate::corpus::{Hospitalization, TaskKind};
use crate::dx::{
    discharge_diagnoses, entries_from_billing, entries_from_texts, filter_billing_codes, parse_llm_dx, score_dx,
    CcsrTable, DiagnosisLinker, EntryList, GoldTarget,
};
use crate::imaging::{gold_from_procedures, parse_llm_imaging, ImagingCounts, ImagingEvent, ModalityRules, StrictnessLevel};
use crate::llm::Gateway;
use crate::metrics::Counts;
use crate::report::ParseReport;

#[derive(Debug, thiserror::Error)]
pub enum GoldError {
    #[error("encounter {encounter}: no {what}")]
    MissingSource { encounter: String, what: &'static str },
    #[error("encounter {encounter}: {message}")]
    Unusable { encounter: String, message: String },
    #[error("{task} gold needs {what}, which is not configured")]
    NotConfigured { task: TaskKind, what: &'static str },
}

/// Gold labels for one encounter and task, plus what is needed to read
/// predictions against them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskGold {
    Imaging {
        window: (NaiveDate, NaiveDate),
        events: Vec<ImagingEvent>,
        dropped_rows: usize,
    },
    Antibiotics {
        window: (NaiveDate, NaiveDate),
        present: NaiveDate,
        courses: Vec<AntibioticCourse>,
        report: ParseReport,
    },
    Diagnosis {
        targets: BTreeMap<GoldTarget, EntryList>,
        #[serde(default)]
        filter_warnings: Vec<String>,
    },
}

/// Per-cell scores; zero predictions against the gold when a cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum CellScores {
    Imaging { levels: BTreeMap<String, Counts> },
    Antibiotics { name: Counts, jaccard: Option<f64>, per_key: Vec<crate::abx::KeyJaccard> },
    Diagnosis { targets: BTreeMap<GoldTarget, Counts>, excluded_predictions: usize },
}

/// A parsed model answer, kept in the run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Prediction {
    Imaging { events: Vec<ImagingEvent> },
    Antibiotics { courses: Vec<AntibioticCourse> },
    Diagnosis { entries: EntryList },
}

impl Prediction {
    pub fn empty(task: TaskKind) -> Self {
        match task {
            TaskKind::Imaging => Prediction::Imaging { events: Vec::new() },
            TaskKind::Antibiotics => Prediction::Antibiotics { courses: Vec::new() },
            TaskKind::Diagnosis => Prediction::Diagnosis { entries: EntryList::default() },
        }
    }
}

/// Everything gold construction and prediction parsing depend on.
pub struct GoldContext {
    pub rules: ModalityRules,
    pub normalizer: MedicationNormalizer,
    pub consult_headers: Vec<Regex>,
    pub ccsr: Option<CcsrTable>,
    pub linker: Option<Box<dyn DiagnosisLinker>>,
    pub mar: BTreeMap<String, Vec<MarRecord>>,
    /// Provider and model used for the filtered diagnosis target.
    pub filter: Option<(String, String)>,
    /// Set when RxNav lookups go to the live service and get recorded.
    pub rxnav_recorder: Option<Arc<RecordingRxNav>>,
}

impl GoldContext {
    pub fn new(normalizer: MedicationNormalizer) -> Self {
        Self {
            rules: ModalityRules::default(),
            normalizer,
            consult_headers: default_section_headers(),
            ccsr: None,
            linker: None,
            mar: BTreeMap::new(),
            filter: None,
            rxnav_recorder: None,
        }
    }

    /// Normalizer answering RxNav lookups from a recorded fixture.
    pub fn replay_normalizer(fixture: RxNavFixture) -> MedicationNormalizer {
        MedicationNormalizer::new(Some(Box::new(RxNormClient::new(RecordingRxNav::replay(fixture)))))
    }

    /// Normalizer forwarding to live RxNav; the recorder collects responses.
    pub fn live_normalizer(base_url: &str) -> (MedicationNormalizer, Arc<RecordingRxNav>) {
        let rec = Arc::new(RecordingRxNav::live(base_url));
        (MedicationNormalizer::new(Some(Box::new(RxNormClient::new(rec.clone())))), rec)
    }

    pub fn build(&self, h: &Hospitalization, task: TaskKind, gateway: &Gateway) -> Result<TaskGold, GoldError> {
        let window = (h.admit_time.date_naive(), h.discharge_time.date_naive());
        let enc = || h.encounter_id.clone();
        match task {
            TaskKind::Imaging => {
                let (events, dropped) = gold_from_procedures(&h.gold.procedures, &self.rules);
                Ok(TaskGold::Imaging { window, events, dropped_rows: dropped.len() })
            }
            TaskKind::Antibiotics => {
                let note = h
                    .gold_note(TaskKind::Antibiotics)
                    .ok_or_else(|| GoldError::MissingSource { encounter: enc(), what: "infectious diseases consult" })?;
                let present = note.date();
                let (courses, report) = gold_from_consult(&note.text, present, window, &self.normalizer, &self.consult_headers)
                    .map_err(|e| GoldError::Unusable { encounter: enc(), message: e.to_string() })?;
                Ok(TaskGold::Antibiotics { window, present, courses, report })
            }
            TaskKind::Diagnosis => {
                let table = self.ccsr.as_ref().ok_or(GoldError::NotConfigured { task, what: "a CCSR table" })?;
                let linker = self.linker.as_deref().ok_or(GoldError::NotConfigured { task, what: "a diagnosis linker" })?;
                let summary = h
                    .gold_note(TaskKind::Diagnosis)
                    .ok_or_else(|| GoldError::MissingSource { encounter: enc(), what: "discharge summary" })?;
                let mut targets = BTreeMap::new();
                targets.insert(GoldTarget::BillingCodes, entries_from_billing(&h.gold.billing_codes, table));
                let texts = discharge_diagnoses(&summary.text);
                let from_summary = entries_from_texts(texts.iter().map(String::as_str), linker, table)
                    .map_err(|e| GoldError::Unusable { encounter: enc(), message: e.to_string() })?;
                targets.insert(GoldTarget::DischargeSummary, from_summary);
                let mut filter_warnings = Vec::new();
                if let Some((p, m)) = &self.filter {
                    let out = filter_billing_codes(&h.gold.billing_codes, &summary.text, gateway, p, m)
                        .map_err(|e| GoldError::Unusable { encounter: enc(), message: format!("billing filter: {e}") })?;
                    filter_warnings.extend(out.dropped_unknown.iter().map(|c| format!("filter returned unbilled code {c}")));
                    if out.unparseable {
                        filter_warnings.push("filter response unparseable".into());
                    }
                    targets.insert(GoldTarget::Filtered, entries_from_billing(&out.kept, table));
                }
                Ok(TaskGold::Diagnosis { targets, filter_warnings })
            }
        }
    }

    /// Parses a model answer in the task's output grammar.
    pub fn parse(&self, gold: &TaskGold, text: &str) -> Result<(Prediction, ParseReport), String> {
        Ok(match gold {
            TaskGold::Imaging { window, .. } => {
                let (events, report) = parse_llm_imaging(text, window.0, window.1);
                (Prediction::Imaging { events }, report)
            }
            TaskGold::Antibiotics { window, present, .. } => {
                let (courses, report) = parse_llm_abx(text, *present, *window, &self.normalizer);
                (Prediction::Antibiotics { courses }, report)
            }
            TaskGold::Diagnosis { .. } => {
                let table = self.ccsr.as_ref().ok_or("no CCSR table configured")?;
                let linker = self.linker.as_deref().ok_or("no diagnosis linker configured")?;
                let (entries, report) = parse_llm_dx(text, linker, table).map_err(|e| e.to_string())?;
                (Prediction::Diagnosis { entries }, report)
            }
        })
    }

    /// Anti-infective courses straight from the MAR, cut at the task cutoff.
    pub fn mar_courses(&self, h: &Hospitalization) -> Option<Vec<AntibioticCourse>> {
        let records = self.mar.get(&h.encounter_id)?;
        let cutoff = h.gold_note(TaskKind::Antibiotics)?.timestamp;
        Some(mar_baseline(records, &cutoff, &self.normalizer))
    }
}

pub fn score(gold: &TaskGold, pred: &Prediction) -> CellScores {
    match (gold, pred) {
        (TaskGold::Imaging { events, .. }, Prediction::Imaging { events: p }) => {
            let c = ImagingCounts::compute(p, events);
            CellScores::Imaging { levels: StrictnessLevel::ALL.iter().map(|l| (l.key().to_string(), c.get(*l))).collect() }
        }
        (TaskGold::Antibiotics { courses, .. }, Prediction::Antibiotics { courses: p }) => {
            let AbxEncounterScore { counts, jaccard, per_key } = score_abx(p, courses);
            CellScores::Antibiotics { name: counts, jaccard, per_key }
        }
        (TaskGold::Diagnosis { targets, .. }, Prediction::Diagnosis { entries }) => CellScores::Diagnosis {
            targets: targets.iter().map(|(t, g)| (*t, score_dx(&entries.entries, &g.entries))).collect(),
            excluded_predictions: entries.excluded(),
        },
        _ => unreachable!("prediction parsed for a different task"),
    }
}
