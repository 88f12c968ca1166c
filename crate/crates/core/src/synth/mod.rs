//! Seeded generator of synthetic hospitalizations with planted facts.
//!
//! Every planted fact is one sentence carrying a reference tag (`IMG-0001-2`,
//! `ABX-0001-1`, `DX-0001-3`). The oracle in [`oracle`] answers a prompt by
//! finding tags in the passage block and checking that the whole sentence
//! survived context selection.

mod catalog;
pub mod oracle;
mod text;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    BillingCode, ClinicalNote, Corpus, GoldSources, Hospitalization, NoteType, ProcedureRow, Timestamp,
};
use crate::imaging::ModalityRules;
use crate::imaging::ImagingEvent;
use crate::indexer::tokenizer::{RuleTokenizer, Tokenizer};

pub use oracle::{OracleProvider, ORACLE_PROVIDER_ID};

/// Inclusive `[lo, hi]` range.
pub type Range2<T> = [T; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_encounters: usize,
    pub stay_days: Range2<u32>,
    pub notes_per_encounter: Range2<usize>,
    pub note_tokens: Range2<usize>,
    /// Chance a planted sentence is copied forward into a later note.
    pub duplication_rate: f64,
    /// Chance a note carries an off-target sentence that mentions task words.
    pub distractor_rate: f64,
    pub imaging_events: Range2<usize>,
    pub antibiotic_courses: Range2<usize>,
    pub prophylactic_decoys: Range2<usize>,
    pub focus_diagnoses: Range2<usize>,
    pub history_diagnoses: Range2<usize>,
    /// Chance a course started before admission.
    pub preadmission_rate: f64,
    /// Chance an admission falls in late December.
    pub year_crossing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_encounters: 50,
            stay_days: [7, 12],
            notes_per_encounter: [36, 48],
            note_tokens: [350, 650],
            duplication_rate: 0.25,
            distractor_rate: 0.15,
            imaging_events: [3, 6],
            antibiotic_courses: [2, 3],
            prophylactic_decoys: [1, 1],
            focus_diagnoses: [4, 6],
            history_diagnoses: [2, 3],
            preadmission_rate: 0.3,
            year_crossing_rate: 0.1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),
    #[error("cannot write synthetic corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot serialize truth: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write MAR table: {0}")]
    Csv(#[from] csv::Error),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut errs = Vec::new();
        for (name, r) in [
            ("duplication_rate", self.duplication_rate),
            ("distractor_rate", self.distractor_rate),
            ("preadmission_rate", self.preadmission_rate),
            ("year_crossing_rate", self.year_crossing_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                errs.push(format!("{name} must be in [0, 1], got {r}"));
            }
        }
        let mut range = |name: &str, r: [usize; 2], min: usize, max: usize| {
            if r[0] > r[1] {
                errs.push(format!("{name} range is empty: [{}, {}]", r[0], r[1]));
            } else if r[0] < min || r[1] > max {
                errs.push(format!("{name} must lie within [{min}, {max}], got [{}, {}]", r[0], r[1]));
            }
        };
        range("stay_days", [self.stay_days[0] as usize, self.stay_days[1] as usize], 2, 60);
        range("notes_per_encounter", self.notes_per_encounter, 4, 400);
        range("note_tokens", self.note_tokens, 60, 20_000);
        range("imaging_events", self.imaging_events, 0, catalog::IMAGING.len());
        range("antibiotic_courses", self.antibiotic_courses, 0, catalog::THERAPEUTIC.len());
        range("prophylactic_decoys", self.prophylactic_decoys, 0, catalog::PROPHYLACTIC.len());
        range("focus_diagnoses", self.focus_diagnoses, 0, catalog::FOCUS.len());
        range("history_diagnoses", self.history_diagnoses, 0, catalog::HISTORY.len());
        if self.n_encounters == 0 || self.n_encounters > 9999 {
            errs.push(format!("n_encounters must be in [1, 9999], got {}", self.n_encounters));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SynthError::ConfigInvalid(errs))
        }
    }

    /// Token range a generated encounter is expected to fall in.
    pub fn encounter_token_range(&self) -> [usize; 2] {
        [
            self.notes_per_encounter[0] * self.note_tokens[0],
            self.notes_per_encounter[1] * self.note_tokens[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedImaging {
    pub ref_id: String,
    pub description: String,
    pub event: ImagingEvent,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCourse {
    pub ref_id: String,
    /// Name used in the notes.
    pub note_name: String,
    /// Name used in the consult; empty for decoys.
    pub consult_name: String,
    pub ingredients: BTreeSet<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub ongoing: bool,
    pub decoy: bool,
    pub start_sentence: String,
    pub end_sentence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDiagnosis {
    pub ref_id: String,
    pub code: String,
    pub description: String,
    pub surface: String,
    pub focus: bool,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterTruth {
    pub encounter_id: String,
    pub admit_date: NaiveDate,
    pub discharge_date: NaiveDate,
    pub consult_date: NaiveDate,
    pub imaging: Vec<PlantedImaging>,
    pub antibiotics: Vec<PlantedCourse>,
    pub diagnoses: Vec<PlantedDiagnosis>,
    pub billing_codes: Vec<String>,
    /// Billing codes a faithful filter keeps.
    pub filter_keep: Vec<String>,
    pub discharge_summary: String,
    pub id_consult: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarRow {
    pub encounter_id: String,
    pub medication: String,
    pub class: String,
    pub admin_timestamp: String,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub truth: Vec<EncounterTruth>,
    pub mar: Vec<MarRow>,
}

#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub truth_dir: PathBuf,
    pub mar: PathBuf,
}

pub fn encounter_id(index: usize) -> String {
    format!("SYN-{:04}", index + 1)
}

/// Generates the whole corpus. Encounters are built in parallel from
/// per-encounter streams of one seeded generator, so output depends only on
/// the config.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let rules = ModalityRules::default();
    let built: Vec<(Hospitalization, EncounterTruth, Vec<MarRow>)> =
        (0..cfg.n_encounters).into_par_iter().map(|i| generate_encounter(cfg, i, &rules)).collect();
    let mut out = SynthOutput { corpus: Corpus::default(), truth: Vec::new(), mar: Vec::new() };
    for (h, t, m) in built {
        out.corpus.hospitalizations.push(h);
        out.truth.push(t);
        out.mar.extend(m);
    }
    Ok(out)
}

/// Writes `corpus.jsonl`, `truth/<encounter>.json` and `mar.csv` under `dir`.
pub fn write_synth(out: &SynthOutput, dir: &Path) -> Result<SynthFiles, SynthError> {
    fs::create_dir_all(dir)?;
    let files = SynthFiles { corpus: dir.join("corpus.jsonl"), truth_dir: dir.join("truth"), mar: dir.join("mar.csv") };
    fs::write(&files.corpus, out.corpus.to_jsonl())?;
    fs::create_dir_all(&files.truth_dir)?;
    for t in &out.truth {
        let mut s = serde_json::to_string_pretty(t)?;
        s.push('\n');
        fs::write(files.truth_dir.join(format!("{}.json", t.encounter_id)), s)?;
    }
    let mut w = csv::Writer::from_path(&files.mar)?;
    w.write_record(["encounter_id", "medication", "class", "admin_timestamp"])?;
    for r in &out.mar {
        w.write_record([&r.encounter_id, &r.medication, &r.class, &r.admin_timestamp])?;
    }
    w.flush()?;
    Ok(files)
}

/// Reads every `*.json` truth file in `dir`, ordered by encounter id.
pub fn load_truth_dir(dir: &Path) -> Result<Vec<EncounterTruth>, SynthError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        out.push(serde_json::from_str(&fs::read_to_string(p)?)?);
    }
    Ok(out)
}

fn utc() -> FixedOffset {
    FixedOffset::east_opt(0).unwrap()
}

fn at(date: NaiveDate, h: u32, m: u32) -> Timestamp {
    utc().from_utc_datetime(&date.and_time(NaiveTime::from_hms_opt(h, m, 0).unwrap()))
}

fn md(d: NaiveDate, padded: bool) -> String {
    if padded {
        format!("{:02}/{:02}", d.month(), d.day())
    } else {
        format!("{}/{}", d.month(), d.day())
    }
}

fn pick_range(rng: &mut ChaCha8Rng, r: [usize; 2]) -> usize {
    rng.random_range(r[0]..=r[1])
}

/// A note before its text is rendered.
struct Slot {
    time: Timestamp,
    note_type: NoteType,
    service: &'static str,
    title: String,
    /// Planted sentences, in insertion order.
    facts: Vec<String>,
    /// Sentences that must come first and stay verbatim (section text).
    fixed: Option<String>,
    target_tokens: usize,
    copy_forward: bool,
}

fn generate_encounter(cfg: &SynthConfig, index: usize, rules: &ModalityRules) -> (Hospitalization, EncounterTruth, Vec<MarRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let eid = encounter_id(index);
    let tag = &eid[4..];
    let tok = RuleTokenizer;

    // Timeline.
    let admit_date = if rng.random_bool(cfg.year_crossing_rate) {
        NaiveDate::from_ymd_opt(rng.random_range(2021..=2023), 12, rng.random_range(22..=30)).unwrap()
    } else {
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + Duration::days(rng.random_range(0..1000))
    };
    let admit = at(admit_date, rng.random_range(8..=18), rng.random_range(0..60));
    let stay = rng.random_range(cfg.stay_days[0]..=cfg.stay_days[1]) as i64;
    let discharge_date = admit_date + Duration::days(stay);
    let discharge = at(discharge_date, rng.random_range(13..=17), rng.random_range(0..60));
    let ds_time = discharge - Duration::minutes(rng.random_range(60..=150));
    let consult_day = ((stay as f64) * rng.random_range(0.55..0.75)).round().max(2.0) as i64;
    let consult_date = admit_date + Duration::days(consult_day.min(stay - 1));
    let consult_time = at(consult_date, 14, rng.random_range(0..60));

    let mut slots: Vec<Slot> = Vec::new();
    let slot = |time: Timestamp, note_type: NoteType, service: &'static str, title: String, copy_forward: bool, target: usize| Slot {
        time,
        note_type,
        service,
        title,
        facts: Vec::new(),
        fixed: None,
        target_tokens: target,
        copy_forward,
    };
    let n_notes = pick_range(&mut rng, cfg.notes_per_encounter);
    let mut targets: Vec<usize> = (0..n_notes).map(|_| pick_range(&mut rng, cfg.note_tokens)).collect();
    let mut next_target = move || targets.pop().unwrap_or(0);

    // Fixed notes: admission H&P, ID consult, discharge summary.
    slots.push(slot(admit + Duration::minutes(60), NoteType::Progress, "Medicine", "History and Physical".into(), false, next_target()));
    let hp = 0;
    slots.push(slot(consult_time, NoteType::IdConsult, "Infectious Diseases", "Infectious Diseases Consult".into(), false, next_target()));
    let consult_slot = 1;
    slots.push(slot(ds_time, NoteType::DischargeSummary, "Medicine", "Discharge Summary".into(), false, next_target()));
    let ds_slot = 2;

    // Imaging events, one per equal segment of the stay so they spread uniformly.
    let n_img = pick_range(&mut rng, cfg.imaging_events);
    let mut items: Vec<&catalog::ImagingItem> = catalog::IMAGING.iter().collect();
    items.shuffle(&mut rng);
    let span_start = admit_date;
    let span_days = (ds_time.date_naive() - span_start).num_days().max(1);
    let mut imaging = Vec::new();
    let mut procedures = Vec::new();
    for (k, item) in items.into_iter().take(n_img).enumerate() {
        let lo = span_days * k as i64 / n_img as i64;
        let hi = (span_days * (k as i64 + 1) / n_img as i64).max(lo + 1);
        let mut t = at(span_start + Duration::days(rng.random_range(lo..hi)), rng.random_range(6..=20), rng.random_range(0..40));
        if t <= admit + Duration::minutes(90) {
            t = admit + Duration::minutes(90 + rng.random_range(0..30));
        }
        if t >= ds_time - Duration::minutes(60) {
            t = ds_time - Duration::minutes(60 + rng.random_range(0..60));
        }
        let (modality, subtype, location) = rules.classify(item.description).expect("catalog descriptions classify");
        let mut event = ImagingEvent::new(modality, Some(t.date_naive()), &location);
        event.subtype = subtype;
        let ref_id = format!("IMG-{tag}-{}", k + 1);
        let sentence = format!(
            "{} performed on {} showed {} (accession {ref_id}).",
            item.phrases.choose(&mut rng).unwrap(),
            md(t.date_naive(), rng.random_bool(0.5)),
            item.findings.choose(&mut rng).unwrap(),
        );
        let mut s = slot(t + Duration::minutes(20), NoteType::ImagingReport, "Radiology", format!("Imaging Report: {}", item.description), false, next_target() / 2);
        s.facts.push(sentence.clone());
        slots.push(s);
        procedures.push(ProcedureRow { description: item.description.to_string(), timestamp: t });
        imaging.push(PlantedImaging { ref_id, description: item.description.to_string(), event, sentence });
    }

    // Daily notes: a morning progress note every hospital day, then the rest.
    for d in 1..stay {
        let t = at(admit_date + Duration::days(d), rng.random_range(7..=9), rng.random_range(0..60));
        if t < ds_time {
            slots.push(slot(t, NoteType::Progress, "Medicine", "Progress Note".into(), true, next_target()));
        }
    }
    let window_mins = (ds_time - admit).num_minutes() - 180;
    while slots.len() < n_notes {
        let t = admit + Duration::minutes(120 + rng.random_range(0..window_mins.max(1)));
        let roll: f64 = rng.random();
        let s = if roll < 0.55 {
            slot(t, NoteType::Progress, "Medicine", "Progress Note".into(), true, next_target())
        } else if roll < 0.85 {
            slot(t, NoteType::Handoff, "Nursing", "Nursing Handoff".into(), true, next_target())
        } else {
            let svc = *catalog::CONSULT_SERVICES.choose(&mut rng).unwrap();
            slot(t, NoteType::Consult, svc, format!("{svc} Consult Note"), true, next_target())
        };
        slots.push(s);
    }

    // Helper: slots strictly inside (lo, hi) that are not fixed notes.
    let open_slots = |slots: &[Slot], lo: Timestamp, hi: Timestamp| -> Vec<usize> {
        (0..slots.len())
            .filter(|&i| i != consult_slot && i != ds_slot && slots[i].time > lo && slots[i].time < hi)
            .collect()
    };

    // Antibiotic courses.
    let n_abx = pick_range(&mut rng, cfg.antibiotic_courses);
    let mut drugs: Vec<&catalog::DrugItem> = catalog::THERAPEUTIC.iter().collect();
    drugs.shuffle(&mut rng);
    let mut antibiotics = Vec::new();
    let mut mar = Vec::new();
    for (k, drug) in drugs.into_iter().take(n_abx).enumerate() {
        let ref_id = format!("ABX-{tag}-{}", k + 1);
        let note_name = drug.names.choose(&mut rng).unwrap().to_string();
        let consult_name = drug.names.choose(&mut rng).unwrap().to_string();
        let pre = rng.random_bool(cfg.preadmission_rate);
        let start = if pre {
            admit_date - Duration::days(rng.random_range(1..=3))
        } else {
            admit_date + Duration::days(rng.random_range(0..consult_day.max(1)))
        };
        let mut ongoing = rng.random_bool(0.5);
        let mut end = consult_date;
        if !ongoing {
            let last_allowed = consult_date - Duration::days(1);
            end = (start + Duration::days(rng.random_range(1..=5))).min(last_allowed).max(admit_date);
            if end < start || end >= consult_date {
                ongoing = true;
                end = consult_date;
            }
        }
        let indication = catalog::INDICATIONS.choose(&mut rng).unwrap();
        let start_sentence = if pre {
            format!("Antibiotics: received {note_name} at an outside hospital starting {} for {indication} (order {ref_id}).", md(start, rng.random_bool(0.5)))
        } else {
            format!("Antibiotics: started {note_name} on {} for {indication} (order {ref_id}).", md(start, rng.random_bool(0.5)))
        };
        let host = if pre { vec![hp] } else { notes_on(&slots, start, consult_time, consult_slot, ds_slot) };
        let host = *host.choose(&mut rng).unwrap_or(&hp);
        slots[host].facts.push(start_sentence.clone());
        let end_sentence = if ongoing {
            None
        } else {
            let s = format!("Antibiotics: {note_name} stopped on {} after completing therapy (order {ref_id}, stop).", md(end, rng.random_bool(0.5)));
            let mut hosts = notes_on(&slots, end, consult_time, consult_slot, ds_slot);
            hosts.retain(|&i| slots[i].time > slots[host].time);
            let h = *hosts.choose(&mut rng).unwrap_or(&host);
            slots[h].facts.push(s.clone());
            Some(s)
        };
        // MAR: one 09:00 dose a day from admission (or start) through the end,
        // continuing past the consult for ongoing courses.
        let mar_end = if ongoing { (consult_date + Duration::days(3)).min(discharge_date) } else { end };
        let mut d = start.max(admit_date);
        while d <= mar_end {
            let t = at(d, 9, 0).max(admit + Duration::minutes(45));
            mar.push(MarRow {
                encounter_id: eid.clone(),
                medication: note_name.clone(),
                class: "Anti-infective".into(),
                admin_timestamp: crate::corpus::format_timestamp(&t),
            });
            d += Duration::days(1);
        }
        antibiotics.push(PlantedCourse {
            ref_id,
            note_name,
            consult_name,
            ingredients: drug.ingredients.iter().map(|s| s.to_string()).collect(),
            start,
            end,
            ongoing,
            decoy: false,
            start_sentence,
            end_sentence,
        });
    }

    // Prophylactic decoys: in notes and MAR, never in the consult.
    let n_decoy = pick_range(&mut rng, cfg.prophylactic_decoys);
    let mut decoys: Vec<&catalog::DecoyItem> = catalog::PROPHYLACTIC.iter().collect();
    decoys.shuffle(&mut rng);
    for (k, decoy) in decoys.into_iter().take(n_decoy).enumerate() {
        let ref_id = format!("ABX-{tag}-P{}", k + 1);
        let name = decoy.drug.names.choose(&mut rng).unwrap().to_string();
        let start = admit_date + Duration::days(rng.random_range(0..consult_day.max(1)));
        let end = (start + Duration::days(rng.random_range(0..=2))).min(consult_date);
        let sentence = format!("{name} given as {} on {} (order {ref_id}).", decoy.purpose, md(start, false));
        let hosts = notes_on(&slots, start, consult_time, consult_slot, ds_slot);
        let host = *hosts.choose(&mut rng).unwrap_or(&hp);
        slots[host].facts.push(sentence.clone());
        let mut d = start;
        while d <= end {
            mar.push(MarRow {
                encounter_id: eid.clone(),
                medication: name.clone(),
                class: "Anti-infective".into(),
                admin_timestamp: crate::corpus::format_timestamp(&at(d, 9, 0).max(admit + Duration::minutes(45))),
            });
            d += Duration::days(1);
        }
        antibiotics.push(PlantedCourse {
            ref_id,
            note_name: name,
            consult_name: String::new(),
            ingredients: decoy.drug.ingredients.iter().map(|s| s.to_string()).collect(),
            start,
            end,
            ongoing: false,
            decoy: true,
            start_sentence: sentence,
            end_sentence: None,
        });
    }
    for (med, class) in catalog::NON_ANTI_INFECTIVE {
        if rng.random_bool(0.5) {
            let mut d = admit_date + Duration::days(1);
            while d <= discharge_date - Duration::days(1) {
                mar.push(MarRow {
                    encounter_id: eid.clone(),
                    medication: med.to_string(),
                    class: class.to_string(),
                    admin_timestamp: crate::corpus::format_timestamp(&at(d, 9, 0)),
                });
                d += Duration::days(1);
            }
        }
    }

    // Diagnoses: focus problems through the stay, history only in the H&P.
    let n_focus = pick_range(&mut rng, cfg.focus_diagnoses);
    let mut focus: Vec<&catalog::DiagnosisItem> = catalog::FOCUS.iter().collect();
    focus.shuffle(&mut rng);
    let mut seen_groups = BTreeSet::new();
    focus.retain(|d| seen_groups.insert(d.group));
    let mut diagnoses = Vec::new();
    for (k, item) in focus.into_iter().take(n_focus).enumerate() {
        let ref_id = format!("DX-{tag}-{}", k + 1);
        let sentence = format!("Assessment: {}, {} (problem {ref_id}).", item.surface, item.plan);
        let hosts = open_slots(&slots, admit, ds_time);
        let host = *hosts.choose(&mut rng).unwrap_or(&hp);
        slots[host].facts.push(sentence.clone());
        diagnoses.push(PlantedDiagnosis {
            ref_id,
            code: item.code.into(),
            description: item.description.into(),
            surface: item.surface.into(),
            focus: true,
            sentence,
        });
    }
    let n_hist = pick_range(&mut rng, cfg.history_diagnoses);
    let mut hist: Vec<&catalog::DiagnosisItem> = catalog::HISTORY.iter().collect();
    hist.shuffle(&mut rng);
    for (k, item) in hist.into_iter().take(n_hist).enumerate() {
        let ref_id = format!("DX-{tag}-H{}", k + 1);
        let sentence = format!("Past medical history: {}, {} (problem {ref_id}).", item.surface, item.plan);
        slots[hp].facts.push(sentence.clone());
        diagnoses.push(PlantedDiagnosis {
            ref_id,
            code: item.code.into(),
            description: item.description.into(),
            surface: item.surface.into(),
            focus: false,
            sentence,
        });
    }
    let mut billing: Vec<&PlantedDiagnosis> = diagnoses.iter().collect();
    billing.shuffle(&mut rng);
    let billing_codes: Vec<BillingCode> =
        billing.iter().map(|d| BillingCode { code: d.code.clone(), description: d.description.clone() }).collect();
    let filter_keep: Vec<String> = billing.iter().filter(|d| d.focus).map(|d| d.code.clone()).collect();

    // Section text of the ID consult and the discharge summary.
    let mut consult = String::from("Reason for consult: antimicrobial management.\n\nHistory of Anti-Infectives:\n");
    for c in antibiotics.iter().filter(|c| !c.decoy) {
        let end = if c.ongoing { "present".to_string() } else { md(c.end, false) };
        consult.push_str(&format!("{}: {}-{end}\n", c.consult_name, md(c.start, false)));
    }
    slots[consult_slot].fixed = Some(consult.clone());
    let mut summary = format!("Discharge summary for encounter {eid}.\n\nDischarge Diagnoses:\n");
    for (k, d) in diagnoses.iter().filter(|d| d.focus).enumerate() {
        summary.push_str(&format!("{}. {}\n", k + 1, d.surface));
    }
    slots[ds_slot].fixed = Some(summary.clone());

    // Copy-forward: restate a fact in a note within the next two days.
    let mut copies: Vec<(usize, String)> = Vec::new();
    for i in 0..slots.len() {
        for f in &slots[i].facts {
            if !rng.random_bool(cfg.duplication_rate) {
                continue;
            }
            let from = slots[i].time;
            let limit = if f.starts_with("Antibiotics") || f.contains("(order ") { consult_time } else { ds_time };
            let hosts: Vec<usize> = (0..slots.len())
                .filter(|&j| slots[j].copy_forward && slots[j].time > from && slots[j].time < limit)
                .filter(|&j| slots[j].time < from + Duration::days(2))
                .collect();
            if let Some(&j) = hosts.choose(&mut rng) {
                copies.push((j, f.clone()));
            }
        }
    }
    for (j, f) in copies {
        slots[j].facts.push(f);
    }

    // Render.
    slots.sort_by_key(|s| s.time);
    let mut notes = Vec::with_capacity(slots.len());
    let mut consult_id = None;
    let mut ds_id = None;
    let mut consult_text = String::new();
    let mut ds_text = String::new();
    for (j, s) in slots.iter().enumerate() {
        let note_id = format!("{eid}-N{:03}", j + 1);
        let text = render_note(&mut rng, &tok, s, cfg.distractor_rate);
        match s.note_type {
            NoteType::IdConsult => {
                consult_id = Some(note_id.clone());
                consult_text = text.clone();
            }
            NoteType::DischargeSummary => {
                ds_id = Some(note_id.clone());
                ds_text = text.clone();
            }
            _ => {}
        }
        notes.push(ClinicalNote {
            note_id,
            timestamp: s.time,
            note_type: s.note_type,
            raw_type: None,
            author_service: Some(s.service.to_string()),
            text,
        });
    }

    let h = Hospitalization {
        encounter_id: eid.clone(),
        admit_time: admit,
        discharge_time: discharge,
        notes,
        gold: GoldSources {
            procedures,
            billing_codes,
            id_consult_note_id: consult_id,
            discharge_summary_note_id: ds_id,
        },
        truncation: None,
    };
    let truth = EncounterTruth {
        encounter_id: eid,
        admit_date,
        discharge_date,
        consult_date,
        imaging,
        antibiotics,
        diagnoses,
        billing_codes: h.gold.billing_codes.iter().map(|b| b.code.clone()).collect(),
        filter_keep,
        discharge_summary: ds_text,
        id_consult: consult_text,
    };
    (h, truth, mar)
}

/// Non-fixed slots dated `day` and earlier than `before`.
fn notes_on(slots: &[Slot], day: NaiveDate, before: Timestamp, consult: usize, ds: usize) -> Vec<usize> {
    (0..slots.len())
        .filter(|&i| i != consult && i != ds && slots[i].time.date_naive() == day && slots[i].time < before)
        .collect()
}

fn render_note(rng: &mut ChaCha8Rng, tok: &dyn Tokenizer, s: &Slot, distractor_rate: f64) -> String {
    let mut body: Vec<String> = Vec::new();
    let mut used = tok.count_tokens(&s.title);
    if let Some(fixed) = &s.fixed {
        used += tok.count_tokens(fixed);
    }
    for f in &s.facts {
        used += tok.count_tokens(f);
    }
    if rng.random_bool(distractor_rate) {
        let pool = [text::IMAGING_DISTRACTORS, text::ANTIBIOTIC_DISTRACTORS, text::DX_DISTRACTORS].choose(rng).unwrap().to_vec();
        let d = pool.choose(rng).unwrap();
        used += tok.count_tokens(d);
        body.push(d.to_string());
    }
    while used < s.target_tokens {
        let f = text::FILLER.choose(rng).unwrap();
        used += tok.count_tokens(f);
        body.push(f.to_string());
    }
    // Facts go at random positions between filler sentences.
    for f in &s.facts {
        let pos = rng.random_range(0..=body.len());
        body.insert(pos, f.clone());
    }
    let mut out = String::new();
    out.push_str(&s.title);
    out.push('\n');
    if let Some(fixed) = &s.fixed {
        out.push('\n');
        out.push_str(fixed);
        out.push('\n');
    }
    for (i, para) in body.chunks(6).enumerate() {
        out.push_str(if i == 0 && s.fixed.is_none() { "\n" } else { "" });
        out.push_str(&para.join(" "));
        out.push_str("\n\n");
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { n_encounters: 6, ..SynthConfig::default() }
    }

    #[test]
    fn seeded_output_is_identical() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        assert_eq!(serde_json::to_string(&a.truth).unwrap(), serde_json::to_string(&b.truth).unwrap());
        assert_eq!(a.mar, b.mar);
        let c = generate_corpus(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.corpus.to_jsonl(), c.corpus.to_jsonl());
    }

    #[test]
    fn invalid_config_lists_every_violation() {
        let cfg = SynthConfig { duplication_rate: 1.5, note_tokens: [900, 100], n_encounters: 0, ..SynthConfig::default() };
        match cfg.validate() {
            Err(SynthError::ConfigInvalid(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn catalog_descriptions_classify_to_intended_locations() {
        let rules = ModalityRules::default();
        let expect = [
            ("X-RAY CHEST 2 VIEWS", "chest"),
            ("CT HEAD W/O CONTRAST", "head"),
            ("ECHO TRANSTHORACIC COMPLETE", "heart"),
            ("US RENAL", "renal"),
            ("NM BONE SCAN WHOLE BODY", "bone whole body"),
            ("XR ANKLE LEFT 3+ VIEWS", "ankle left"),
        ];
        for item in catalog::IMAGING {
            assert!(rules.classify(item.description).is_some(), "{}", item.description);
        }
        for (desc, loc) in expect {
            let (_, _, got) = rules.classify(desc).unwrap();
            assert_eq!(got.to_lowercase(), loc, "{desc}");
        }
    }

    #[test]
    fn planted_facts_precede_their_cutoffs() {
        let out = generate_corpus(&small()).unwrap();
        for (h, t) in out.corpus.hospitalizations.iter().zip(&out.truth) {
            assert_eq!(h.gold.procedures.len(), t.imaging.len());
            let consult = h.gold_note(crate::corpus::TaskKind::Antibiotics).unwrap().timestamp;
            let ds = h.gold_note(crate::corpus::TaskKind::Diagnosis).unwrap().timestamp;
            let before = |s: &str, cut: Timestamp| h.notes.iter().any(|n| n.timestamp < cut && n.text.contains(s));
            for i in &t.imaging {
                assert!(before(&i.sentence, ds), "{}", i.ref_id);
            }
            for c in &t.antibiotics {
                assert!(before(&c.start_sentence, consult), "{}", c.ref_id);
                if let Some(e) = &c.end_sentence {
                    assert!(before(e, consult), "{}", c.ref_id);
                }
                assert!(c.start <= c.end);
                if !c.decoy {
                    assert!(t.id_consult.contains(&format!("{}: ", c.consult_name)), "{}", c.ref_id);
                }
            }
            for d in &t.diagnoses {
                assert!(before(&d.sentence, ds), "{}", d.ref_id);
            }
            assert!(t.discharge_summary.contains(&h.encounter_id));
        }
    }
}
