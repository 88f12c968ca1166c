//! Imaging procedures: gold from procedure rows, output parsing, scoring.

mod rules;

use std::fmt;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use rules::{ModalityRule, ModalityRules, RulesError};

use crate::corpus::ProcedureRow;
use crate::dates::{resolve_relative_date, MonthDay};
use crate::matching::max_matching;
use crate::metrics::{Counts, Prf};
use crate::report::ParseReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "MRI")]
    Mri,
    #[serde(rename = "CT")]
    Ct,
    Ultrasound,
    #[serde(rename = "X-ray")]
    XRay,
    #[serde(rename = "NM")]
    Nm,
}

impl Modality {
    pub const ALL: [Modality; 5] = [Modality::Mri, Modality::Ct, Modality::Ultrasound, Modality::XRay, Modality::Nm];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Mri => "MRI",
            Modality::Ct => "CT",
            Modality::Ultrasound => "Ultrasound",
            Modality::XRay => "X-ray",
            Modality::Nm => "NM",
        }
    }

    /// Lenient: accepts the abbreviations and long names models tend to write.
    pub fn parse(s: &str) -> Option<Self> {
        let k: String = s.trim().to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect();
        Some(match k.as_str() {
            "mri" | "mr" | "magneticresonanceimaging" | "magneticresonance" => Modality::Mri,
            "ct" | "computedtomography" | "catscan" | "ctscan" => Modality::Ct,
            "ultrasound" | "us" | "sonography" | "ultrasonography" => Modality::Ultrasound,
            "xray" | "radiograph" | "radiography" | "xr" => Modality::XRay,
            "nm" | "nmimaging" | "nuclearmedicine" | "nuclearmedicineimaging" | "nuclear" => Modality::Nm,
            _ => return None,
        })
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImagingEvent {
    pub modality: Modality,
    /// `None` is an unknown date.
    pub date: Option<NaiveDate>,
    pub location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<String>,
}

impl ImagingEvent {
    pub fn new(modality: Modality, date: Option<NaiveDate>, location: &str) -> Self {
        Self { modality, date, location: location.trim().to_lowercase(), subtype: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrictnessLevel {
    ModDateLoc,
    ModDate,
    ModDatePm1,
}

impl StrictnessLevel {
    pub const ALL: [StrictnessLevel; 3] = [StrictnessLevel::ModDateLoc, StrictnessLevel::ModDate, StrictnessLevel::ModDatePm1];

    pub fn label(self) -> &'static str {
        match self {
            StrictnessLevel::ModDateLoc => "Modality+Date+Location",
            StrictnessLevel::ModDate => "Modality+Date",
            StrictnessLevel::ModDatePm1 => "Modality+Date(±1)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            StrictnessLevel::ModDateLoc => "mod_date_loc",
            StrictnessLevel::ModDate => "mod_date",
            StrictnessLevel::ModDatePm1 => "mod_date_pm1",
        }
    }

    pub fn matches(self, pred: &ImagingEvent, gold: &ImagingEvent) -> bool {
        let (Some(pd), Some(gd)) = (pred.date, gold.date) else {
            return false;
        };
        if pred.modality != gold.modality {
            return false;
        }
        match self {
            StrictnessLevel::ModDateLoc => pd == gd && pred.location == gold.location,
            StrictnessLevel::ModDate => pd == gd,
            StrictnessLevel::ModDatePm1 => (pd - gd).num_days().abs() <= 1,
        }
    }
}

/// A procedure row that no modality rule recognised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub description: String,
    pub reason: String,
}

pub fn gold_from_procedures(rows: &[ProcedureRow], rules: &ModalityRules) -> (Vec<ImagingEvent>, Vec<DroppedRow>) {
    let mut events = Vec::new();
    let mut dropped = Vec::new();
    for row in rows {
        match rules.classify(&row.description) {
            Some((modality, subtype, location)) => {
                events.push(ImagingEvent { modality, date: Some(row.timestamp.date_naive()), location, subtype });
            }
            None => dropped.push(DroppedRow { description: row.description.clone(), reason: "non-imaging".into() }),
        }
    }
    (events, dropped)
}

pub const NO_IMAGING_SENTINEL: &str = "No imaging procedures identified.";

static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*[-*•]\s*\(\s*([^)]*?)\s*\)\s*(.+?)\s+[-–]\s+(.+?)\s*:\s*(.*?)\s*$").unwrap());

/// Parses bullet lines of the form `- (MM/DD|unknown) Modality - Subtype: Location`.
///
/// Dates are placed in a year using the stay window.
pub fn parse_llm_imaging(text: &str, window_start: NaiveDate, window_end: NaiveDate) -> (Vec<ImagingEvent>, ParseReport) {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.trim_matches('"') == NO_IMAGING_SENTINEL {
            continue;
        }
        let Some(c) = BULLET.captures(line) else {
            report.issue(n, line, "not an imaging bullet");
            continue;
        };
        let Some(modality) = Modality::parse(&c[2]) else {
            report.issue(n, line, format!("unknown modality `{}`", &c[2]));
            continue;
        };
        let subtype = match c[3].trim() {
            s if s.eq_ignore_ascii_case("none") || s.is_empty() => None,
            s => Some(s.to_lowercase()),
        };
        let date_text = c[1].trim_matches('"');
        let date = if date_text.eq_ignore_ascii_case("unknown") {
            None
        } else {
            match MonthDay::parse(date_text).and_then(|md| resolve_relative_date(md, window_start, window_end)) {
                Ok(r) => {
                    if !r.in_window {
                        report.flag(n, line, "date outside stay window");
                    }
                    Some(r.date)
                }
                Err(e) => {
                    report.flag(n, line, format!("{e}; treated as unknown"));
                    None
                }
            }
        };
        let mut ev = ImagingEvent::new(modality, date, &c[4]);
        ev.subtype = subtype;
        events.push(ev);
    }
    (events, report)
}

pub fn match_imaging(pred: &[ImagingEvent], gold: &[ImagingEvent], level: StrictnessLevel) -> Counts {
    let m = max_matching(pred.len(), gold.len(), |p, g| level.matches(&pred[p], &gold[g]));
    Counts::from_matching(pred.len(), gold.len(), m.len())
}

/// Per-encounter counts at every level, indexed like `StrictnessLevel::ALL`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagingCounts(pub [Counts; 3]);

impl ImagingCounts {
    pub fn compute(pred: &[ImagingEvent], gold: &[ImagingEvent]) -> Self {
        Self(StrictnessLevel::ALL.map(|l| match_imaging(pred, gold, l)))
    }

    pub fn get(&self, level: StrictnessLevel) -> Counts {
        self.0[level as usize]
    }
}

/// Micro-averaged scores per level.
pub fn score_imaging(per_encounter: &[ImagingCounts]) -> [(StrictnessLevel, Prf); 3] {
    StrictnessLevel::ALL.map(|l| (l, Prf::from_counts(per_encounter.iter().map(|c| c.get(l)).sum())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_timestamp;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn row(desc: &str, ts: &str) -> ProcedureRow {
        ProcedureRow { description: desc.into(), timestamp: parse_timestamp(ts).unwrap() }
    }

    #[test]
    fn gold_examples() {
        let rules = ModalityRules::default();
        let rows = [
            row("X-RAY CHEST 2 VIEWS", "2024-01-10T08:00:00Z"),
            row("CT LUMBAR SPINE W/O IV CONTRAST", "2024-01-12T09:30:00Z"),
            row("EKG 12 LEAD", "2024-01-12T10:00:00Z"),
        ];
        let (ev, dropped) = gold_from_procedures(&rows, &rules);
        assert_eq!(ev, vec![ImagingEvent::new(Modality::XRay, Some(d(2024, 1, 10)), "chest"), ImagingEvent::new(Modality::Ct, Some(d(2024, 1, 12)), "lumbar spine")]);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].description, "EKG 12 LEAD");
    }

    #[test]
    fn more_descriptions() {
        let rules = ModalityRules::default();
        let cases = [
            ("MRI BRAIN W/ AND W/O CONTRAST", Modality::Mri, "brain"),
            ("US RENAL", Modality::Ultrasound, "renal"),
            ("XR ANKLE LEFT 3+ VIEWS", Modality::XRay, "ankle left"),
            ("ECHO TRANSTHORACIC COMPLETE", Modality::Ultrasound, "heart"),
            ("NM BONE SCAN WHOLE BODY", Modality::Nm, "bone whole body"),
            ("CT CHEST ABDOMEN PELVIS WITH IV CONTRAST", Modality::Ct, "chest abdomen pelvis"),
            ("X-RAY CHEST PORTABLE 1 VIEW", Modality::XRay, "chest"),
        ];
        for (desc, m, loc) in cases {
            let (got_m, _, got_loc) = rules.classify(desc).unwrap_or_else(|| panic!("{desc}"));
            assert_eq!((got_m, got_loc.as_str()), (m, loc), "{desc}");
        }
        assert!(rules.classify("BLOOD CULTURE").is_none());
        assert!(rules.classify("CENTRAL LINE PLACEMENT").is_none());
    }

    #[test]
    fn parse_example_output() {
        let out = "- (03/10) X-ray - None: Chest\n- (unknown) CT - None: Chest\n- (03/12) Ultrasound - Echocardiogram: Heart\n";
        let (ev, rep) = parse_llm_imaging(out, d(2018, 3, 8), d(2018, 3, 20));
        assert!(rep.is_clean());
        assert_eq!(ev[0], ImagingEvent::new(Modality::XRay, Some(d(2018, 3, 10)), "chest"));
        assert_eq!(ev[1], ImagingEvent::new(Modality::Ct, None, "chest"));
        assert_eq!(ev[2].subtype.as_deref(), Some("echocardiogram"));
        assert_eq!(ev[2].location, "heart");
    }

    #[test]
    fn sentinel_and_malformed() {
        let (ev, rep) = parse_llm_imaging(NO_IMAGING_SENTINEL, d(2018, 3, 8), d(2018, 3, 20));
        assert!(ev.is_empty() && rep.is_clean());
        let (ev, rep) = parse_llm_imaging("Here is the list:\n- (03/10) X-ray - None: Chest\n- (03/11) PET-MRI hybrid: brain", d(2018, 3, 8), d(2018, 3, 20));
        assert_eq!(ev.len(), 1);
        assert_eq!(rep.issues.len(), 2);
    }

    #[test]
    fn strictness_examples() {
        let day = d(2024, 1, 12);
        let chest = ImagingEvent::new(Modality::XRay, Some(day), "chest");
        for l in StrictnessLevel::ALL {
            assert_eq!(match_imaging(&[chest.clone()], &[chest.clone()], l), Counts::new(1, 0, 0));
        }
        let pred = ImagingEvent::new(Modality::Ct, Some(day.succ_opt().unwrap()), "spine");
        let gold = ImagingEvent::new(Modality::Ct, Some(day), "lumbar spine");
        assert_eq!(match_imaging(&[pred.clone()], &[gold.clone()], StrictnessLevel::ModDatePm1), Counts::new(1, 0, 0));
        assert_eq!(match_imaging(&[pred], &[gold], StrictnessLevel::ModDateLoc), Counts::new(0, 1, 1));
    }

    #[test]
    fn unknown_dates_never_match() {
        let a = ImagingEvent::new(Modality::Ct, None, "chest");
        for l in StrictnessLevel::ALL {
            assert_eq!(match_imaging(&[a.clone()], &[a.clone()], l), Counts::new(0, 1, 1));
        }
    }

    #[test]
    fn duplicates_are_fp() {
        let a = ImagingEvent::new(Modality::Ct, Some(d(2024, 1, 1)), "chest");
        assert_eq!(match_imaging(&[a.clone(), a.clone()], &[a], StrictnessLevel::ModDate), Counts::new(1, 1, 0));
    }

    #[test]
    fn score_formula() {
        let c = ImagingCounts([Counts::new(1, 1, 3); 3]);
        let s = score_imaging(&[c]);
        assert_eq!(format!("{:.2} {:.2} {:.2}", s[0].1.precision, s[0].1.recall, s[0].1.f1), "50.00 25.00 33.33");
    }
}
