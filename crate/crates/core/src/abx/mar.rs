use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AntibioticCourse, IngredientSet, MedicationNormalizer, Span};
use crate::corpus::{parse_timestamp, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarRecord {
    pub encounter_id: String,
    pub medication: String,
    pub therapeutic_class: String,
    pub admin_times: Vec<Timestamp>,
}

#[derive(Debug, thiserror::Error)]
pub enum MarError {
    #[error("MAR file: {0}")]
    Io(#[from] std::io::Error),
    #[error("MAR file: {0}")]
    Csv(#[from] csv::Error),
    #[error("MAR row {row}: bad timestamp `{value}`")]
    Timestamp { row: usize, value: String },
}

#[derive(Deserialize)]
struct Row {
    encounter_id: String,
    medication: String,
    class: String,
    admin_timestamp: String,
}

/// Reads `encounter_id,medication,class,admin_timestamp` rows, grouping
/// administrations of the same medication.
pub fn load_mar_csv(path: &Path) -> Result<BTreeMap<String, Vec<MarRecord>>, MarError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut grouped: BTreeMap<(String, String, String), Vec<Timestamp>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let ts = parse_timestamp(&row.admin_timestamp).ok_or(MarError::Timestamp { row: i + 2, value: row.admin_timestamp.clone() })?;
        grouped.entry((row.encounter_id, row.medication, row.class)).or_default().push(ts);
    }
    let mut out: BTreeMap<String, Vec<MarRecord>> = BTreeMap::new();
    for ((encounter_id, medication, therapeutic_class), mut admin_times) in grouped {
        admin_times.sort();
        out.entry(encounter_id.clone()).or_default().push(MarRecord { encounter_id, medication, therapeutic_class, admin_times });
    }
    Ok(out)
}

fn is_anti_infective(class: &str) -> bool {
    let k: String = class.to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect();
    k.starts_with("antiinfective")
}

/// One course per ingredient set spanning first to last administration
/// strictly before `cutoff`.
pub fn mar_baseline(records: &[MarRecord], cutoff: &Timestamp, normalizer: &MedicationNormalizer) -> Vec<AntibioticCourse> {
    let mut by_key: BTreeMap<IngredientSet, (String, bool, Vec<&Timestamp>)> = BTreeMap::new();
    for r in records.iter().filter(|r| is_anti_infective(&r.therapeutic_class)) {
        let n = normalizer.normalize(&r.medication);
        let entry = by_key.entry(n.ingredients.clone()).or_insert_with(|| (r.medication.clone(), n.resolved(), Vec::new()));
        entry.2.extend(r.admin_times.iter().filter(|t| *t < cutoff));
    }
    by_key
        .into_iter()
        .filter_map(|(ingredients, (raw_name, resolved, times))| {
            let first = times.iter().min()?.date_naive();
            let last = times.iter().max()?.date_naive();
            Some(AntibioticCourse { raw_name, ingredients, span: Span::days(first, last), resolved })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn rec(med: &str, class: &str, times: &[&str]) -> MarRecord {
        MarRecord {
            encounter_id: "E1".into(),
            medication: med.into(),
            therapeutic_class: class.into(),
            admin_times: times.iter().map(|t| parse_timestamp(t).unwrap()).collect(),
        }
    }

    #[test]
    fn span_and_class_filter() {
        let n = MedicationNormalizer::new(None);
        let recs = [
            rec("vancomycin", "Anti-infective", &["2024-01-16T08:00:00Z", "2024-01-19T20:00:00Z", "2024-01-25T08:00:00Z"]),
            rec("insulin", "Endocrine", &["2024-01-16T08:00:00Z"]),
        ];
        let cutoff = parse_timestamp("2024-01-20T00:00:00Z").unwrap();
        let c = mar_baseline(&recs, &cutoff, &n);
        assert_eq!(c.len(), 1);
        let d = |day| NaiveDate::from_ymd_opt(2024, 1, day).unwrap();
        assert_eq!(c[0].span, Span::days(d(16), d(19)));
    }

    #[test]
    fn csv_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mar.csv");
        std::fs::write(&p, "encounter_id,medication,class,admin_timestamp\nE1,vancomycin,anti-infective,2024-01-17T08:00:00Z\nE1,vancomycin,anti-infective,2024-01-16T08:00:00Z\nE2,cefazolin,anti-infective,2024-02-01T08:00:00Z\n").unwrap();
        let m = load_mar_csv(&p).unwrap();
        assert_eq!(m["E1"][0].admin_times.len(), 2);
        assert!(m["E1"][0].admin_times[0] < m["E1"][0].admin_times[1]);
        assert_eq!(m.len(), 2);
    }
}
